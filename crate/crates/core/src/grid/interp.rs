use super::{PhaseGrid, ScalarField, VectorField};
use ndarray::{Array2, Axis as NdAxis};
use rayon::prelude::*;

/// Keys cubic-convolution kernel weights (`a = -1/2`) for fractional offset `t ∈ [0, 1)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

/// Bicubic point sampler over a field. Samples outside the node span read 0,
/// as do stencil nodes that fall off the grid.
#[derive(Debug, Clone, Copy)]
pub struct CubicSampler<'a> {
    field: &'a ScalarField,
}

/// A sampled value and whether its stencil touched a masked node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub masked: bool,
}

impl<'a> CubicSampler<'a> {
    pub fn new(field: &'a ScalarField) -> Self {
        Self { field }
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.field.grid()
    }

    pub fn sample(&self, x: f64, p: f64) -> Sample {
        let g = self.field.grid();
        if !x.is_finite() || !p.is_finite() || !g.contains(x, p) {
            return Sample {
                value: 0.0,
                masked: false,
            };
        }
        let (x0, _) = g.x_range();
        let (p0, _) = g.p_range();
        let u = (x - x0) / g.dx();
        let v = (p - p0) / g.dp();
        let iu = u.floor();
        let iv = v.floor();
        let wx = cubic_weights(u - iu);
        let wp = cubic_weights(v - iv);
        let (nx, np) = g.shape();
        let values = self.field.values();
        let mut acc = 0.0;
        let mut masked = false;
        for (a, wa) in wx.iter().enumerate() {
            let i = iu as isize - 1 + a as isize;
            if i < 0 || i >= nx as isize {
                continue;
            }
            let mut row = 0.0;
            for (b, wb) in wp.iter().enumerate() {
                let j = iv as isize - 1 + b as isize;
                if j < 0 || j >= np as isize {
                    continue;
                }
                let (i, j) = (i as usize, j as usize);
                masked |= self.field.is_masked(i, j);
                row += wb * values[[i, j]];
            }
            acc += wa * row;
        }
        Sample { value: acc, masked }
    }

    pub fn value(&self, x: f64, p: f64) -> f64 {
        self.sample(x, p).value
    }
}

/// Bicubic value of `field` at an arbitrary point.
pub fn sample_point(field: &ScalarField, x: f64, p: f64) -> f64 {
    CubicSampler::new(field).value(x, p)
}

/// Resamples `field` at `r - displacement(r)` for every node `r`.
///
/// Nodes where the displacement is singular, or whose stencil touches a
/// masked source node, are masked in the result (value 0).
pub fn sample_displaced(field: &ScalarField, displacement: &VectorField) -> ScalarField {
    let grid = *field.grid();
    assert!(
        grid.same_as(displacement.grid()),
        "displacement grid must match field grid"
    );
    let xs = grid.xs();
    let ps = grid.ps();
    let sampler = CubicSampler::new(field);
    let mut values = Array2::zeros(grid.shape());
    let mut mask = Array2::from_elem(grid.shape(), false);
    values
        .axis_iter_mut(NdAxis(0))
        .into_par_iter()
        .zip(mask.axis_iter_mut(NdAxis(0)).into_par_iter())
        .enumerate()
        .for_each(|(i, (mut row, mut mrow))| {
            for j in 0..row.len() {
                if displacement.is_singular(i, j) {
                    mrow[j] = true;
                    continue;
                }
                let sx = xs[i] - displacement.x_component.get(i, j);
                let sp = ps[j] - displacement.p_component.get(i, j);
                let s = sampler.sample(sx, sp);
                row[j] = if s.masked { 0.0 } else { s.value };
                mrow[j] = s.masked;
            }
        });
    ScalarField::with_mask(grid, values, mask)
}
