use super::{Axis, ScalarField};
use crate::error::{Result, WflowError};
use ndarray::{Array2, ArrayViewMut1, Axis as NdAxis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Highest derivative order supported by [`partial_derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 7;

/// How partial derivatives are discretized.
///
/// `SpectralPeriodic` multiplies Fourier coefficients by `(ik)^n`. The
/// optional `cutoff` zeroes every wavenumber with `|k| > cutoff`; explicit
/// time stepping of the `∂_p³` current term needs it, because roundoff in the
/// unresolved high modes otherwise grows by `|x|·k³·dt` per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DerivativeScheme {
    SpectralPeriodic { cutoff: Option<f64> },
    CentralFd { order: usize },
}

impl Default for DerivativeScheme {
    fn default() -> Self {
        DerivativeScheme::SpectralPeriodic { cutoff: None }
    }
}

impl DerivativeScheme {
    pub fn spectral() -> Self {
        DerivativeScheme::SpectralPeriodic { cutoff: None }
    }

    pub fn spectral_filtered(cutoff: f64) -> Result<Self> {
        let s = DerivativeScheme::SpectralPeriodic { cutoff: Some(cutoff) };
        s.validate()?;
        Ok(s)
    }

    pub fn central_fd(order: usize) -> Result<Self> {
        let s = DerivativeScheme::CentralFd { order };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DerivativeScheme::SpectralPeriodic { cutoff: Some(c) } if !(c > 0.0) => Err(
                WflowError::UnsupportedDerivative(format!("spectral cutoff must be positive, got {c}")),
            ),
            DerivativeScheme::CentralFd { order } if !matches!(order, 2 | 4 | 6) => Err(
                WflowError::UnsupportedDerivative(format!("central difference order must be 2, 4 or 6, got {order}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, DerivativeScheme::SpectralPeriodic { .. })
    }

    /// Short text form (`spectral`, `spectral:12`, `fd4`), accepted by
    /// [`DerivativeScheme::parse`].
    pub fn label(&self) -> String {
        match self {
            DerivativeScheme::SpectralPeriodic { cutoff: None } => "spectral".into(),
            DerivativeScheme::SpectralPeriodic { cutoff: Some(c) } => format!("spectral:{c}"),
            DerivativeScheme::CentralFd { order } => format!("fd{order}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "spectral" {
            return Ok(Self::spectral());
        }
        if let Some(c) = s.strip_prefix("spectral:") {
            let c: f64 = c
                .parse()
                .map_err(|_| WflowError::Parse(format!("bad spectral cutoff '{c}'")))?;
            return Self::spectral_filtered(c);
        }
        if let Some(o) = s.strip_prefix("fd") {
            let o: usize = o
                .parse()
                .map_err(|_| WflowError::Parse(format!("bad difference order '{o}'")))?;
            return Self::central_fd(o);
        }
        Err(WflowError::Parse(format!("unknown derivative scheme '{s}'")))
    }
}

/// `∂^order field / ∂axis^order` under the given scheme.
///
/// Both schemes treat the grid as periodic. The field's mask, if any, is
/// carried over unchanged.
pub fn partial_derivative(
    field: &ScalarField,
    axis: Axis,
    order: usize,
    scheme: DerivativeScheme,
) -> Result<ScalarField> {
    if order == 0 || order > MAX_DERIVATIVE_ORDER {
        return Err(WflowError::UnsupportedDerivative(format!(
            "order {order} outside 1..={MAX_DERIVATIVE_ORDER}"
        )));
    }
    scheme.validate()?;
    let grid = *field.grid();
    let n = grid.nodes(axis);
    let h = grid.spacing(axis);
    let values = match scheme {
        DerivativeScheme::SpectralPeriodic { cutoff } => {
            let symbol = spectral_symbol(n, h, order, cutoff);
            let fwd = fft_plan(n, true);
            let inv = fft_plan(n, false);
            along_axis(field.values(), axis, |lane| {
                spectral_lane(lane, &symbol, fwd.as_ref(), inv.as_ref())
            })
        }
        DerivativeScheme::CentralFd { order: acc } => {
            let stencil = central_stencil(order, acc, h);
            along_axis(field.values(), axis, |lane| fd_lane(lane, &stencil))
        }
    };
    let mut out = ScalarField::new(grid, values);
    out.set_mask(field.mask().cloned());
    Ok(out)
}

/// Applies `op` to every lane of `values` running along `axis`.
pub(crate) fn along_axis(values: &Array2<f64>, axis: Axis, op: impl Fn(ArrayViewMut1<f64>) + Sync) -> Array2<f64> {
    match axis {
        Axis::P => {
            let mut out = values.to_owned();
            out.axis_iter_mut(NdAxis(0)).into_par_iter().for_each(|lane| op(lane));
            out
        }
        Axis::X => {
            let mut t = values.t().as_standard_layout().into_owned();
            t.axis_iter_mut(NdAxis(0)).into_par_iter().for_each(|lane| op(lane));
            t.t().as_standard_layout().into_owned()
        }
    }
}

/// Signed angular wavenumbers of an `n`-point periodic grid with spacing `h`
/// in FFT order.
pub(crate) fn wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let base = 2.0 * PI / (n as f64 * h);
    (0..n)
        .map(|m| {
            let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            m * base
        })
        .collect()
}

fn spectral_symbol(n: usize, h: f64, order: usize, cutoff: Option<f64>) -> Vec<Complex64> {
    let ks = wavenumbers(n, h);
    let unit = match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    let scale = 1.0 / n as f64;
    ks.iter()
        .enumerate()
        .map(|(m, &k)| {
            let nyquist = n % 2 == 0 && m == n / 2;
            let filtered = cutoff.is_some_and(|c| k.abs() > c);
            if filtered || (nyquist && order % 2 == 1) {
                Complex64::new(0.0, 0.0)
            } else {
                unit * k.powi(order as i32) * scale
            }
        })
        .collect()
}

fn spectral_lane(mut lane: ArrayViewMut1<f64>, symbol: &[Complex64], fwd: &dyn Fft<f64>, inv: &dyn Fft<f64>) {
    let mut buf: Vec<Complex64> = lane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    buf.iter_mut().zip(symbol).for_each(|(b, s)| *b *= s);
    inv.process(&mut buf);
    lane.iter_mut().zip(&buf).for_each(|(v, b)| *v = b.re);
}

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

/// Shared FFT plans keyed by `(length, forward)`.
pub(crate) fn fft_plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        })
        .clone()
}

struct Stencil {
    half_width: usize,
    weights: Vec<f64>,
}

fn central_stencil(order: usize, accuracy: usize, h: f64) -> Stencil {
    let half_width = (order + 1) / 2 - 1 + accuracy / 2;
    let offsets: Vec<f64> = (0..=2 * half_width).map(|k| k as f64 - half_width as f64).collect();
    let weights = fornberg_weights(&offsets, order)
        .into_iter()
        .map(|w| w / h.powi(order as i32))
        .collect();
    Stencil { half_width, weights }
}

/// Finite-difference weights at 0 for the `m`-th derivative on `nodes`.
fn fornberg_weights(nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    // c[j][k]: weight of node j for derivative k
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

fn fd_lane(mut lane: ArrayViewMut1<f64>, stencil: &Stencil) {
    let n = lane.len();
    let src: Vec<f64> = lane.to_vec();
    let hw = stencil.half_width as isize;
    for (i, out) in lane.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, w) in stencil.weights.iter().enumerate() {
            let idx = (i as isize + k as isize - hw).rem_euclid(n as isize) as usize;
            acc += w * src[idx];
        }
        *out = acc;
    }
}

/// Half-width of the central stencil used for derivative `order`.
pub(crate) fn stencil_half_width(order: usize, accuracy: usize) -> usize {
    (order + 1) / 2 - 1 + accuracy / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;

    fn gauss(g: PhaseGrid) -> ScalarField {
        ScalarField::from_fn(g, |x, p| (-(x * x + p * p)).exp())
    }

    #[test]
    fn fornberg_matches_textbook() {
        let w = fornberg_weights(&[-1.0, 0.0, 1.0], 1);
        assert_eq!(w, vec![-0.5, 0.0, 0.5]);
        let w = fornberg_weights(&[-1.0, 0.0, 1.0], 2);
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
        let w = fornberg_weights(&[-2.0, -1.0, 0.0, 1.0, 2.0], 3);
        let expect = [-0.5, 1.0, 0.0, -1.0, 0.5];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn first_p_derivative_of_gaussian() {
        let g = PhaseGrid::default_grid();
        let f = gauss(g);
        let d = partial_derivative(&f, Axis::P, 1, DerivativeScheme::spectral()).unwrap();
        // p = 1 lies between nodes; use the node p_j = -6 + 149·dp
        let j = 149;
        let p = g.p(j);
        let expect = -2.0 * p * f.get(128, j);
        assert!((d.get(128, j) - expect).abs() < 1e-12);
    }

    #[test]
    fn third_p_derivative_spectral_accuracy() {
        let g = PhaseGrid::default_grid();
        let f = gauss(g);
        let d = partial_derivative(&f, Axis::P, 3, DerivativeScheme::spectral()).unwrap();
        let exact = ScalarField::from_fn(g, |x, p| (12.0 * p - 8.0 * p.powi(3)) * (-(x * x + p * p)).exp());
        let err = d.sub(&exact).unwrap().max_abs();
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn fd_second_derivative_of_cubic_interior() {
        let g = PhaseGrid::square(2.0, 64).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x.powi(3));
        for order in [2, 4, 6] {
            let d = partial_derivative(&f, Axis::X, 2, DerivativeScheme::central_fd(order).unwrap()).unwrap();
            for i in 8..56 {
                let expect = 6.0 * g.x(i);
                assert!((d.get(i, 3) - expect).abs() < 1e-9, "order {order} i {i}");
            }
        }
    }

    #[test]
    fn rejects_bad_orders() {
        let g = PhaseGrid::square(1.0, 16).unwrap();
        let f = ScalarField::zeros(g);
        assert!(partial_derivative(&f, Axis::X, 8, DerivativeScheme::spectral()).is_err());
        assert!(partial_derivative(&f, Axis::X, 0, DerivativeScheme::spectral()).is_err());
        assert!(DerivativeScheme::central_fd(3).is_err());
        assert!(DerivativeScheme::spectral_filtered(0.0).is_err());
    }

    #[test]
    fn spectral_and_fd_agree_on_interior() {
        let g = PhaseGrid::default_grid();
        let f = gauss(g);
        for axis in [Axis::X, Axis::P] {
            let a = partial_derivative(&f, axis, 1, DerivativeScheme::spectral()).unwrap();
            let b = partial_derivative(&f, axis, 1, DerivativeScheme::central_fd(6).unwrap()).unwrap();
            let mut worst = 0.0_f64;
            for i in 26..230 {
                for j in 26..230 {
                    worst = worst.max((a.get(i, j) - b.get(i, j)).abs());
                }
            }
            assert!(worst < 1e-4, "worst {worst}");
        }
    }

    #[test]
    fn cutoff_removes_high_modes() {
        let g = PhaseGrid::square(std::f64::consts::PI, 64).unwrap();
        // sin(20 p) has k = 20
        let f = ScalarField::from_fn(g, |_, p| (20.0 * p).sin());
        let d = partial_derivative(&f, Axis::P, 1, DerivativeScheme::spectral_filtered(10.0).unwrap()).unwrap();
        assert!(d.max_abs() < 1e-10);
        let d = partial_derivative(&f, Axis::P, 1, DerivativeScheme::spectral()).unwrap();
        assert!((d.get(0, 5) - 20.0 * (20.0 * g.p(5)).cos()).abs() < 1e-9);
    }

    #[test]
    fn scheme_labels_round_trip() {
        for s in ["spectral", "spectral:12", "fd2", "fd4", "fd6"] {
            assert_eq!(DerivativeScheme::parse(s).unwrap().label(), s);
        }
        assert!(DerivativeScheme::parse("fd3").is_err());
        assert!(DerivativeScheme::parse("upwind").is_err());
    }
}
