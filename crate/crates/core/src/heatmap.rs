//! Binary PPM rendering of scalar fields with a diverging palette centred at
//! zero. Rows run from `p_max` at the top to `p_min`, columns along `x`.

use crate::error::{Result, WflowError};
use crate::grid::ScalarField;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Palette {
    /// Blue for negative, white at zero, red for positive.
    #[default]
    BlueWhiteRed,
    /// Blue for negative, black at zero, red for positive.
    BlueBlackRed,
}

impl Palette {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bwr" | "blue-white-red" => Ok(Self::BlueWhiteRed),
            "bkr" | "blue-black-red" => Ok(Self::BlueBlackRed),
            _ => Err(WflowError::Parse(format!("unknown palette '{s}'"))),
        }
    }

    /// Colour of `t ∈ [-1, 1]`.
    pub fn color(self, t: f64) -> [u8; 3] {
        let t = t.clamp(-1.0, 1.0);
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let a = t.abs();
        match self {
            Palette::BlueWhiteRed => {
                if t >= 0.0 {
                    [255, q(1.0 - a), q(1.0 - a)]
                } else {
                    [q(1.0 - a), q(1.0 - a), 255]
                }
            }
            Palette::BlueBlackRed => {
                if t >= 0.0 {
                    [q(a), 0, 0]
                } else {
                    [0, 0, q(a)]
                }
            }
        }
    }
}

/// Colour of masked and non-finite cells.
pub const SENTINEL: [u8; 3] = [0, 200, 0];

/// Encodes `field` as a binary PPM, one pixel per node, scaled by `max|W|`.
pub fn render_ppm(field: &ScalarField, palette: Palette) -> Vec<u8> {
    let (nx, np) = field.grid().shape();
    let scale = field.max_abs();
    let mut out = format!("P6\n{nx} {np}\n255\n").into_bytes();
    out.reserve(3 * nx * np);
    for j in (0..np).rev() {
        for i in 0..nx {
            let v = field.get(i, j);
            let rgb = if field.is_masked(i, j) || !v.is_finite() {
                SENTINEL
            } else if scale > 0.0 {
                palette.color(v / scale)
            } else {
                palette.color(0.0)
            };
            out.extend_from_slice(&rgb);
        }
    }
    out
}

pub fn export_heatmap(field: &ScalarField, out_path: &Path, palette: Palette) -> Result<()> {
    let bytes = render_ppm(field, palette);
    let mut f = std::fs::File::create(out_path)?;
    f.write_all(&bytes)?;
    Ok(())
}
