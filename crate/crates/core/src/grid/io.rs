//! Field serialization.
//!
//! * CSV with header `x,p,value`, one row per node, row-major by `x`.
//! * Raw binary: a 32-byte header followed by `nx·np` little-endian `f64`
//!   values in the same order. Header layout:
//!
//! | bytes  | content                      |
//! |--------|------------------------------|
//! | 0..4   | magic `WFLD`                 |
//! | 4..8   | `nx` (`u32` LE)              |
//! | 8..12  | `np` (`u32` LE)              |
//! | 12..28 | `x_min, x_max, p_min, p_max` (`f32` LE) |
//! | 28..32 | format version (`u32` LE, 1) |

use super::{PhaseGrid, ScalarField, VectorField};
use crate::error::{Result, WflowError};
use ndarray::Array2;
use std::io::{BufRead, Read, Write};

pub const MAGIC: &[u8; 4] = b"WFLD";
pub const HEADER_LEN: usize = 32;
const VERSION: u32 = 1;

pub fn write_scalar_csv<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let g = field.grid();
    writeln!(out, "x,p,value")?;
    for i in 0..g.nx() {
        let x = g.x(i);
        for j in 0..g.np() {
            writeln!(out, "{},{},{}", x, g.p(j), field.get(i, j))?;
        }
    }
    Ok(())
}

pub fn read_scalar_csv<R: BufRead>(input: R) -> Result<ScalarField> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| WflowError::Parse("empty field csv".into()))??;
    if header.trim() != "x,p,value" {
        return Err(WflowError::Parse(format!("unexpected header '{header}'")));
    }
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(WflowError::Parse(format!("line {}: expected 3 columns", n + 2)));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| WflowError::Parse(format!("line {}: bad number '{s}'", n + 2)))
        };
        rows.push((parse(cols[0])?, parse(cols[1])?, parse(cols[2])?));
    }
    let np = rows.iter().take_while(|r| r.0 == rows[0].0).count();
    if np == 0 || rows.len() % np != 0 {
        return Err(WflowError::Parse("field csv is not a full rectangular grid".into()));
    }
    let nx = rows.len() / np;
    if nx < 2 || np < 2 {
        return Err(WflowError::Parse("field csv grid too small".into()));
    }
    let dx = rows[np].0 - rows[0].0;
    let dp = rows[1].1 - rows[0].1;
    let x_min = rows[0].0;
    let p_min = rows[0].1;
    let grid = PhaseGrid::new((x_min, x_min + dx * nx as f64), (p_min, p_min + dp * np as f64), nx, np)?;
    let values = Array2::from_shape_vec((nx, np), rows.iter().map(|r| r.2).collect())
        .map_err(|e| WflowError::Parse(e.to_string()))?;
    Ok(ScalarField::new(grid, values))
}

pub fn write_scalar_binary<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let g = field.grid();
    let (x0, x1) = g.x_range();
    let (p0, p1) = g.p_range();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    header.extend_from_slice(&(g.np() as u32).to_le_bytes());
    for v in [x0, x1, p0, p1] {
        header.extend_from_slice(&(v as f32).to_le_bytes());
    }
    header.extend_from_slice(&VERSION.to_le_bytes());
    debug_assert_eq!(header.len(), HEADER_LEN);
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(g.len() * 8);
    for v in field.values().iter() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&body)?;
    Ok(())
}

pub fn read_scalar_binary<R: Read>(mut input: R) -> Result<ScalarField> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(WflowError::Parse("missing WFLD magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as f64;
    let nx = u32_at(4) as usize;
    let np = u32_at(8) as usize;
    let version = u32_at(28);
    if version != VERSION {
        return Err(WflowError::Parse(format!("unsupported WFLD version {version}")));
    }
    let grid = PhaseGrid::new((f32_at(12), f32_at(16)), (f32_at(20), f32_at(24)), nx, np)?;
    let mut body = vec![0u8; nx * np * 8];
    input.read_exact(&mut body)?;
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array2::from_shape_vec((nx, np), values).map_err(|e| WflowError::Parse(e.to_string()))?;
    Ok(ScalarField::new(grid, values))
}

/// CSV with header `x,p,jx,jp,singular`; `singular` is 0 or 1.
pub fn write_vector_csv<W: Write>(field: &VectorField, mut out: W) -> Result<()> {
    let g = field.grid();
    writeln!(out, "x,p,jx,jp,singular")?;
    for i in 0..g.nx() {
        let x = g.x(i);
        for j in 0..g.np() {
            writeln!(
                out,
                "{},{},{},{},{}",
                x,
                g.p(j),
                field.x_component.get(i, j),
                field.p_component.get(i, j),
                u8::from(field.is_singular(i, j))
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(g: PhaseGrid) -> ScalarField {
        ScalarField::from_fn(g, |x, p| (x * 1.3 - p).sin() * (-(x * x)).exp())
    }

    #[test]
    fn binary_header_is_32_bytes() {
        let g = PhaseGrid::square(3.0, 8).unwrap();
        let mut buf = Vec::new();
        write_scalar_binary(&sample(g), &mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 64 * 8);
        assert_eq!(&buf[..4], b"WFLD");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 8);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = vec![0u8; 64];
        assert!(read_scalar_binary(&buf[..]).is_err());
    }

    #[test]
    fn csv_header_and_order() {
        let g = PhaseGrid::new((0.0, 1.0), (0.0, 1.0), 8, 8).unwrap();
        let f = sample(g);
        let mut buf = Vec::new();
        write_scalar_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,p,value"));
        assert!(lines.next().unwrap().starts_with("0,0,"));
        assert!(lines.next().unwrap().starts_with("0,0.125,"));
    }

    #[test]
    fn vector_csv_columns() {
        let g = PhaseGrid::square(1.0, 8).unwrap();
        let mut v = VectorField::uniform(g, 1.0, 2.0);
        v.singular_mask[[0, 1]] = true;
        let mut buf = Vec::new();
        write_vector_csv(&v, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,p,jx,jp,singular");
        assert!(lines[1].ends_with(",1,2,0"));
        assert!(lines[2].ends_with(",1,2,1"));
    }

    proptest! {
        #[test]
        fn csv_and_binary_round_trip(n in 8usize..20, half in 0.5f64..8.0, seed in 0.0f64..10.0) {
            let g = PhaseGrid::new((-half, half), (-2.0 * half, half), n, n + 3).unwrap();
            let f = ScalarField::from_fn(g, |x, p| (seed * x + p).cos() + 1e-300 * seed);
            let mut csv = Vec::new();
            write_scalar_csv(&f, &mut csv).unwrap();
            let back = read_scalar_csv(&csv[..]).unwrap();
            prop_assert_eq!(back.values(), f.values());
            prop_assert_eq!(back.grid().shape(), g.shape());

            let mut bin = Vec::new();
            write_scalar_binary(&f, &mut bin).unwrap();
            let back = read_scalar_binary(&bin[..]).unwrap();
            prop_assert_eq!(back.values(), f.values());
        }
    }
}
