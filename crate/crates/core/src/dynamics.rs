//! Potentials, the Wigner current `J`, the velocity field `w = J/W` and
//! their divergences.

use crate::error::{Result, WflowError};
use crate::grid::derivative::{stencil_half_width, MAX_DERIVATIVE_ORDER};
use crate::grid::{partial_derivative, Axis, DerivativeScheme, PhaseGrid, ScalarField, VectorField};
use crate::states::{SystemParams, WignerState};
use crate::VELOCITY_CAP;
use ndarray::{Array2, Zip};

/// `V(x) = Σ c_k x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPotential {
    coefficients: Vec<f64>,
}

impl PolynomialPotential {
    /// Trailing zero coefficients are dropped so that the leading one is nonzero.
    pub fn new(mut coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(WflowError::InvalidParameter("non-finite potential coefficient".into()));
        }
        while coefficients.len() > 1 && *coefficients.last().unwrap() == 0.0 {
            coefficients.pop();
        }
        if coefficients.is_empty() {
            coefficients.push(0.0);
        }
        Ok(Self { coefficients })
    }

    pub fn free() -> Self {
        Self {
            coefficients: vec![0.0],
        }
    }

    /// `K x⁴`.
    pub fn quartic(k: f64) -> Self {
        Self::new(vec![0.0, 0.0, 0.0, 0.0, k]).expect("finite coefficient")
    }

    /// `(K/2) x²`.
    pub fn harmonic(k: f64) -> Self {
        Self::quadratic(k, 0.0, 0.0)
    }

    /// `(K/2) x² + a x + b`.
    pub fn quadratic(k: f64, a: f64, b: f64) -> Self {
        Self::new(vec![b, a, 0.5 * k]).expect("finite coefficients")
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0.0)
    }

    /// Degree at most two: the quantum correction to the current vanishes.
    pub fn is_quadratic(&self) -> bool {
        self.degree() <= 2
    }

    /// `Some(K)` when the potential is exactly `K x⁴`.
    pub fn as_pure_quartic(&self) -> Option<f64> {
        let c = &self.coefficients;
        (c.len() == 5 && c[..4].iter().all(|&v| v == 0.0)).then(|| c[4])
    }

    pub fn value(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Exact `order`-th derivative; the zero polynomial once `order > degree`.
    pub fn derivative(&self, order: usize) -> PolynomialPotential {
        if order > self.degree() {
            return Self::free();
        }
        let coefficients = self.coefficients[order..]
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let n = k + order;
                let falling: f64 = ((n - order + 1)..=n).map(|m| m as f64).product();
                c * falling
            })
            .collect();
        Self::new(coefficients).expect("finite coefficients")
    }

    /// Terms `l = 1..=L` of the current series; `L = ⌊(d − 1)/2⌋`.
    pub fn quantum_series_len(&self) -> usize {
        self.degree().saturating_sub(1) / 2
    }
}

/// Free particle with linear friction `ṗ = −γ p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionParams {
    pub gamma: f64,
    pub mass: f64,
}

impl FrictionParams {
    pub fn new(gamma: f64, mass: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(WflowError::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(WflowError::InvalidParameter(format!("mass must be > 0, got {mass}")));
        }
        Ok(Self { gamma, mass })
    }

    /// Velocity field `(p/m, −γ p)`.
    pub fn velocity(&self, grid: &PhaseGrid) -> VectorField {
        let (m, g) = (self.mass, self.gamma);
        VectorField::from_fn(*grid, |_, p| (p / m, -g * p))
    }
}

/// Hamiltonian velocity `v = (p/M, −∂_x V)`.
pub fn classical_velocity(grid: &PhaseGrid, potential: &PolynomialPotential, params: SystemParams) -> VectorField {
    let force = potential.derivative(1);
    let m = params.mass();
    VectorField::from_fn(*grid, |x, p| (p / m, -force.value(x)))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Quantum part of `J_p`:
/// `−Σ_{l≥1} (iħ/2)^{2l}/(2l+1)! ∂_p^{2l}W ∂_x^{2l+1}V`, with
/// `(iħ/2)^{2l} = (−1)^l (ħ/2)^{2l}`. The sum is finite for polynomials.
pub fn quantum_current(
    state: &WignerState,
    potential: &PolynomialPotential,
    scheme: DerivativeScheme,
) -> Result<ScalarField> {
    let grid = *state.grid();
    let terms = potential.quantum_series_len();
    if 2 * terms > MAX_DERIVATIVE_ORDER {
        return Err(WflowError::UnsupportedPotential(format!(
            "degree {} needs ∂_p^{} which exceeds the supported order",
            potential.degree(),
            2 * terms
        )));
    }
    let half_hbar = 0.5 * state.params.hbar();
    let xs = grid.xs();
    let mut out = Array2::zeros(grid.shape());
    for l in 1..=terms {
        let coeff = -(-1.0_f64).powi(l as i32) * half_hbar.powi(2 * l as i32) / factorial(2 * l + 1);
        let vd = potential.derivative(2 * l + 1);
        let dw = partial_derivative(&state.field, Axis::P, 2 * l, scheme)?;
        Zip::indexed(&mut out).and(dw.values()).for_each(|(i, _), o, &d| {
            *o += coeff * d * vd.value(xs[i]);
        });
    }
    Ok(ScalarField::new(grid, out))
}

/// Wigner current `J = W v + (0, quantum series)`.
pub fn wigner_current(
    state: &WignerState,
    potential: &PolynomialPotential,
    scheme: DerivativeScheme,
) -> Result<VectorField> {
    let v = classical_velocity(state.grid(), potential, state.params);
    let jx = state.field.zip_with(&v.x_component, |w, vx| w * vx)?;
    let classical_p = state.field.zip_with(&v.p_component, |w, vp| w * vp)?;
    let jp = if potential.quantum_series_len() == 0 {
        classical_p
    } else {
        classical_p.add(&quantum_current(state, potential, scheme)?)?
    };
    VectorField::new(jx, jp)
}

/// Nodes with `|W| < epsilon_rel · max|W|`.
pub fn small_density_mask(field: &ScalarField, epsilon_rel: f64) -> Array2<bool> {
    let floor = epsilon_rel * field.max_abs();
    field.values().mapv(|w| w.abs() < floor || !w.is_finite())
}

fn signed_cap(num: f64, den: f64) -> f64 {
    let s = if den == 0.0 { num.signum() } else { (num * den).signum() };
    if s == 0.0 {
        VELOCITY_CAP
    } else {
        s * VELOCITY_CAP
    }
}

/// Velocity field `w = J / W`.
///
/// Where `|W| < epsilon_rel · max|W|` the `p` component is replaced by the
/// signed cap and the node is flagged in `singular_mask`. `w_x = p/M`
/// everywhere.
pub fn velocity_field(
    state: &WignerState,
    potential: &PolynomialPotential,
    epsilon_rel: f64,
    scheme: DerivativeScheme,
) -> Result<VectorField> {
    if !(epsilon_rel > 0.0) {
        return Err(WflowError::InvalidParameter(format!(
            "epsilon_rel must be > 0, got {epsilon_rel}"
        )));
    }
    let j = wigner_current(state, potential, scheme)?;
    let grid = *state.grid();
    let m = state.params.mass();
    let wx = ScalarField::from_fn(grid, |_, p| p / m);
    let mut mask = small_density_mask(&state.field, epsilon_rel);
    let mut wp = Array2::zeros(grid.shape());
    Zip::from(&mut wp)
        .and(&mut mask)
        .and(state.field.values())
        .and(j.p_component.values())
        .for_each(|out, masked, &w, &jp| {
            if *masked {
                *out = signed_cap(jp, w);
                return;
            }
            let v = jp / w;
            if v.abs() > VELOCITY_CAP || !v.is_finite() {
                *out = signed_cap(jp, w);
                *masked = true;
            } else {
                *out = v;
            }
        });
    VectorField::with_mask(wx, ScalarField::new(grid, wp), mask)
}

/// `∂_x F_x + ∂_p F_p`.
///
/// Unmasked fields use `scheme` directly. When the field carries singular
/// entries a local central stencil is used instead (the scheme's order, or
/// fourth order for spectral schemes) so capped values cannot leak across the
/// grid; every node whose stencil touches a singular entry is masked.
pub fn divergence(vfield: &VectorField, scheme: DerivativeScheme) -> Result<ScalarField> {
    let grid = *vfield.grid();
    if !vfield.has_singular() {
        let dx = partial_derivative(&vfield.x_component, Axis::X, 1, scheme)?;
        let dp = partial_derivative(&vfield.p_component, Axis::P, 1, scheme)?;
        return dx.add(&dp);
    }
    let accuracy = match scheme {
        DerivativeScheme::CentralFd { order } => order,
        DerivativeScheme::SpectralPeriodic { .. } => 4,
    };
    let local = DerivativeScheme::central_fd(accuracy)?;
    let mask = &vfield.singular_mask;
    let zeroed = |f: &ScalarField| {
        let mut v = f.values().clone();
        Zip::from(&mut v).and(mask).for_each(|v, &m| {
            if m {
                *v = 0.0
            }
        });
        ScalarField::new(grid, v)
    };
    let dx = partial_derivative(&zeroed(&vfield.x_component), Axis::X, 1, local)?;
    let dp = partial_derivative(&zeroed(&vfield.p_component), Axis::P, 1, local)?;
    let hw = stencil_half_width(1, accuracy);
    let out_mask = dilate_cross(mask, hw);
    let mut values = dx.add(&dp)?.into_values();
    Zip::from(&mut values).and(&out_mask).for_each(|v, &m| {
        if m {
            *v = 0.0
        }
    });
    Ok(ScalarField::with_mask(grid, values, out_mask))
}

/// Marks every node within `reach` steps of a marked node along either axis
/// (periodic).
fn dilate_cross(mask: &Array2<bool>, reach: usize) -> Array2<bool> {
    let (nx, np) = mask.dim();
    let mut out = mask.clone();
    for ((i, j), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        for d in 1..=reach {
            out[[(i + d) % nx, j]] = true;
            out[[(i + nx - d % nx) % nx, j]] = true;
            out[[i, (j + d) % np]] = true;
            out[[i, (j + np - d % np) % np]] = true;
        }
    }
    out
}

/// Smooth ingredients of the velocity field: `W`, `J`, `∇·J` and `∇W`.
#[derive(Debug, Clone)]
pub struct CurrentFields {
    pub density: ScalarField,
    pub current: VectorField,
    pub div_current: ScalarField,
    pub grad_x: ScalarField,
    pub grad_p: ScalarField,
}

impl CurrentFields {
    pub fn compute(state: &WignerState, potential: &PolynomialPotential, scheme: DerivativeScheme) -> Result<Self> {
        let current = wigner_current(state, potential, scheme)?;
        let div_current = divergence(&current, scheme)?;
        let grad_x = partial_derivative(&state.field, Axis::X, 1, scheme)?;
        let grad_p = partial_derivative(&state.field, Axis::P, 1, scheme)?;
        Ok(Self {
            density: state.field.clone(),
            current,
            div_current,
            grad_x,
            grad_p,
        })
    }
}

/// `∇·(J/W) = ∇·J / W − (J·∇W) / W²` given the values at one point.
pub fn quotient_divergence(w: f64, jx: f64, jp: f64, div_j: f64, gx: f64, gp: f64) -> f64 {
    div_j / w - (jx * gx + jp * gp) / (w * w)
}

/// `∇·w` for `w = J/W`, evaluated by the quotient rule from smooth fields.
///
/// Differentiating the capped velocity field directly would spread the caps
/// through any global scheme; the quotient form only divides pointwise.
/// Nodes with `|W| < epsilon_rel · max|W|` are masked and read 0.
pub fn velocity_divergence(
    state: &WignerState,
    potential: &PolynomialPotential,
    epsilon_rel: f64,
    scheme: DerivativeScheme,
) -> Result<ScalarField> {
    let parts = CurrentFields::compute(state, potential, scheme)?;
    Ok(velocity_divergence_from(&parts, epsilon_rel))
}

pub fn velocity_divergence_from(parts: &CurrentFields, epsilon_rel: f64) -> ScalarField {
    let grid = *parts.density.grid();
    let mask = small_density_mask(&parts.density, epsilon_rel);
    let out = Array2::from_shape_fn(grid.shape(), |idx| {
        if mask[idx] {
            return 0.0;
        }
        quotient_divergence(
            parts.density.values()[idx],
            parts.current.x_component.values()[idx],
            parts.current.p_component.values()[idx],
            parts.div_current.values()[idx],
            parts.grad_x.values()[idx],
            parts.grad_p.values()[idx],
        )
    });
    ScalarField::with_mask(grid, out, mask)
}

/// A zero of both current components inside one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagnationPoint {
    pub x: f64,
    pub p: f64,
    /// Lower-left node of the cell the point was found in.
    pub cell: (usize, usize),
    /// Whether the bilinear Newton solve converged inside the cell.
    pub refined: bool,
}

fn straddles(vals: [f64; 4]) -> bool {
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo <= 0.0 && hi >= 0.0
}

/// Cells in which both components of `j` take both signs (or vanish) at the
/// four corners.
pub fn stagnation_cells(j: &VectorField) -> Vec<(usize, usize)> {
    let (nx, np) = j.grid().shape();
    let a = j.x_component.values();
    let b = j.p_component.values();
    let mut cells = Vec::new();
    for i in 0..nx - 1 {
        for k in 0..np - 1 {
            let fa = [a[[i, k]], a[[i + 1, k]], a[[i, k + 1]], a[[i + 1, k + 1]]];
            let fb = [b[[i, k]], b[[i + 1, k]], b[[i, k + 1]], b[[i + 1, k + 1]]];
            if straddles(fa) && straddles(fb) {
                cells.push((i, k));
            }
        }
    }
    cells
}

/// Locates stagnation points of `j`: candidate cells from
/// [`stagnation_cells`], refined by Newton iteration on the bilinear model of
/// each component (tolerance `1e-3·min(dx, dp)`). Cells whose model is
/// degenerate report the corner with the smallest `|J|`. Points closer than
/// half a cell are merged.
pub fn stagnation_points(j: &VectorField) -> Vec<StagnationPoint> {
    let g = *j.grid();
    let (dx, dp) = (g.dx(), g.dp());
    let tol = 1e-3 * dx.min(dp);
    let a = j.x_component.values();
    let b = j.p_component.values();
    let mut found: Vec<StagnationPoint> = Vec::new();
    for (i, k) in stagnation_cells(j) {
        let fa = [a[[i, k]], a[[i + 1, k]], a[[i, k + 1]], a[[i + 1, k + 1]]];
        let fb = [b[[i, k]], b[[i + 1, k]], b[[i, k + 1]], b[[i + 1, k + 1]]];
        let (pt, refined) = match bilinear_root(fa, fb, tol / dx.max(dp)) {
            Some((s, t)) => ((g.x(i) + s * dx, g.p(k) + t * dp), true),
            None => {
                let corners = [(0, 0), (1, 0), (0, 1), (1, 1)];
                let best = (0..4)
                    .min_by(|&u, &v| {
                        let nu = fa[u].hypot(fb[u]);
                        let nv = fa[v].hypot(fb[v]);
                        nu.partial_cmp(&nv).unwrap()
                    })
                    .unwrap();
                let (ci, ck) = corners[best];
                ((g.x(i + ci), g.p(k + ck)), false)
            }
        };
        let dup = found
            .iter()
            .any(|q| (q.x - pt.0).abs() < 0.5 * dx && (q.p - pt.1).abs() < 0.5 * dp);
        if !dup {
            found.push(StagnationPoint {
                x: pt.0,
                p: pt.1,
                cell: (i, k),
                refined,
            });
        }
    }
    found
}

/// Root of two bilinear interpolants on the unit square, corners ordered
/// `(0,0), (1,0), (0,1), (1,1)`.
fn bilinear_root(fa: [f64; 4], fb: [f64; 4], tol: f64) -> Option<(f64, f64)> {
    let eval = |f: &[f64; 4], s: f64, t: f64| {
        f[0] * (1.0 - s) * (1.0 - t) + f[1] * s * (1.0 - t) + f[2] * (1.0 - s) * t + f[3] * s * t
    };
    let ds = |f: &[f64; 4], t: f64| (f[1] - f[0]) * (1.0 - t) + (f[3] - f[2]) * t;
    let dt = |f: &[f64; 4], s: f64| (f[2] - f[0]) * (1.0 - s) + (f[3] - f[1]) * s;
    let (mut s, mut t) = (0.5, 0.5);
    for _ in 0..50 {
        let (u, v) = (eval(&fa, s, t), eval(&fb, s, t));
        let (a11, a12, a21, a22) = (ds(&fa, t), dt(&fa, s), ds(&fb, t), dt(&fb, s));
        let det = a11 * a22 - a12 * a21;
        let scale = a11.abs().max(a12.abs()).max(a21.abs()).max(a22.abs());
        if !(det.abs() > 1e-14 * scale * scale) {
            return None;
        }
        let step_s = (u * a22 - v * a12) / det;
        let step_t = (a11 * v - a21 * u) / det;
        s -= step_s;
        t -= step_t;
        if !s.is_finite() || !t.is_finite() {
            return None;
        }
        if step_s.abs() < tol && step_t.abs() < tol {
            let slack = 1e-9;
            return ((-slack..=1.0 + slack).contains(&s) && (-slack..=1.0 + slack).contains(&t))
                .then_some((s.clamp(0.0, 1.0), t.clamp(0.0, 1.0)));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{coherent_state, gaussian_ground_state, wigner_from_wavefunction, Wavefunction};

    fn w0() -> WignerState {
        gaussian_ground_state(&PhaseGrid::default_grid(), SystemParams::natural()).unwrap()
    }

    #[test]
    fn potential_derivatives() {
        let v = PolynomialPotential::quartic(1.0);
        assert_eq!(v.derivative(3).coefficients(), &[0.0, 24.0]);
        assert!(v.derivative(5).is_zero());
        let q = PolynomialPotential::quadratic(2.0, 0.5, -1.0);
        assert!(q.derivative(3).is_zero());
        assert_eq!(q.derivative(1).coefficients(), &[0.5, 2.0]);
        assert_eq!(v.derivative(0), v);
        assert_eq!(PolynomialPotential::new(vec![1.0, 0.0, 0.0]).unwrap().degree(), 0);
        assert_eq!(PolynomialPotential::quartic(3.0).as_pure_quartic(), Some(3.0));
        assert_eq!(PolynomialPotential::harmonic(1.0).as_pure_quartic(), None);
    }

    #[test]
    fn classical_velocity_formula() {
        let g = PhaseGrid::new((-4.0, 4.0), (-4.0, 4.0), 16, 16).unwrap();
        let v = classical_velocity(&g, &PolynomialPotential::quartic(1.0), SystemParams::natural());
        let (i, j) = (10, 12); // x = 1, p = 2
        assert_eq!((g.x(i), g.p(j)), (1.0, 2.0));
        assert_eq!(v.x_component.get(i, j), 2.0);
        assert_eq!(v.p_component.get(i, j), -4.0);
        let free = classical_velocity(&g, &PolynomialPotential::free(), SystemParams::natural());
        assert_eq!(free.p_component.max_abs(), 0.0);
        assert_eq!(free.x_component.get(3, j), 2.0);
    }

    #[test]
    fn classical_velocity_is_divergence_free() {
        let g = PhaseGrid::default_grid();
        for v in [PolynomialPotential::quartic(1.0), PolynomialPotential::harmonic(2.0)] {
            let f = classical_velocity(&g, &v, SystemParams::natural());
            let d = divergence(&f, DerivativeScheme::central_fd(2).unwrap()).unwrap();
            assert!(d.max_abs() < 1e-10);
        }
    }

    #[test]
    fn friction_divergence_is_minus_gamma() {
        let g = PhaseGrid::default_grid();
        let f = FrictionParams::new(0.3, 1.0).unwrap().velocity(&g);
        let d = divergence(&f, DerivativeScheme::central_fd(4).unwrap()).unwrap();
        // the periodic wrap of p breaks linearity only at the p boundary
        for i in 0..256 {
            for j in 3..253 {
                assert!((d.get(i, j) + 0.3).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quartic_current_closed_form() {
        let s = w0();
        let g = *s.grid();
        let j = wigner_current(&s, &PolynomialPotential::quartic(1.0), DerivativeScheme::spectral()).unwrap();
        let (i, k) = g.nearest(1.0, 0.0);
        let x = g.x(i);
        let expect = (-4.0 * x.powi(3) - 2.0 * x) * s.field.get(i, k);
        assert!((j.p_component.get(i, k) - expect).abs() < 1e-12);
        // full field: -4x³W + x ∂_p² W with ∂_p²W₀ = (4p² - 2) W₀
        let exact = s
            .field
            .map_with_coords(|x, p, w| -4.0 * x.powi(3) * w + x * (4.0 * p * p - 2.0) * w);
        assert!(j.p_component.sub(&exact).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn quantum_term_scales_with_hbar_squared() {
        let g = PhaseGrid::default_grid();
        let v = PolynomialPotential::quartic(1.0);
        let base = gaussian_ground_state(&g, SystemParams::natural()).unwrap();
        let big = WignerState::evolved(base.field.clone(), SystemParams::new(2.0, 1.0).unwrap(), "w");
        let q1 = quantum_current(&base, &v, DerivativeScheme::spectral()).unwrap();
        let q2 = quantum_current(&big, &v, DerivativeScheme::spectral()).unwrap();
        assert!(q2.sub(&q1.scale(4.0)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn velocity_matches_quartic_formula() {
        let s = w0();
        let w = velocity_field(
            &s,
            &PolynomialPotential::quartic(1.0),
            1e-8,
            DerivativeScheme::spectral(),
        )
        .unwrap();
        let g = *s.grid();
        for i in (0..256).step_by(5) {
            for k in (0..256).step_by(5) {
                if w.is_singular(i, k) {
                    continue;
                }
                let (x, p) = (g.x(i), g.p(k));
                let expect = -4.0 * x.powi(3) + x * (4.0 * p * p - 2.0);
                let err = (w.p_component.get(i, k) - expect).abs();
                assert!(err < 1e-5 * (1.0 + expect.abs()), "({x},{p}) err {err}");
            }
        }
    }

    #[test]
    fn velocity_times_density_is_current() {
        let g = PhaseGrid::default_grid();
        let psi = Wavefunction::harmonic(&g, SystemParams::natural(), 1.0, 1).unwrap();
        let s = wigner_from_wavefunction(&psi, &g).unwrap();
        let v = PolynomialPotential::quartic(1.0);
        let scheme = DerivativeScheme::spectral();
        let j = wigner_current(&s, &v, scheme).unwrap();
        let w = velocity_field(&s, &v, 1e-8, scheme).unwrap();
        for ((i, k), &m) in w.singular_mask.indexed_iter() {
            if m {
                continue;
            }
            let lhs = s.field.get(i, k) * w.p_component.get(i, k);
            let rhs = j.p_component.get(i, k);
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-300));
        }
    }

    #[test]
    fn fock_zero_ring_is_masked() {
        let g = PhaseGrid::default_grid();
        let psi = Wavefunction::harmonic(&g, SystemParams::natural(), 1.0, 1).unwrap();
        let s = wigner_from_wavefunction(&psi, &g).unwrap();
        let w = velocity_field(
            &s,
            &PolynomialPotential::quartic(1.0),
            1e-2,
            DerivativeScheme::spectral(),
        )
        .unwrap();
        // masked nodes inside r < 2 sit on the ring r² = 1/2
        let mut ring = 0;
        for ((i, k), &m) in w.singular_mask.indexed_iter() {
            let r2 = g.x(i).powi(2) + g.p(k).powi(2);
            if m && r2 < 4.0 {
                ring += 1;
                assert!((r2.sqrt() - 0.5f64.sqrt()).abs() < 2.0 * g.dx(), "r2 {r2}");
            }
        }
        assert!(ring > 0);
    }

    #[test]
    fn quadratic_velocity_is_classical() {
        let g = PhaseGrid::default_grid();
        let s = coherent_state(&g, SystemParams::natural(), 1.0, -0.5).unwrap();
        let v = PolynomialPotential::quadratic(1.5, 0.3, 2.0);
        let w = velocity_field(&s, &v, 1e-8, DerivativeScheme::spectral()).unwrap();
        let cv = classical_velocity(&g, &v, SystemParams::natural());
        for ((i, k), &m) in w.singular_mask.indexed_iter() {
            if !m {
                assert!((w.p_component.get(i, k) - cv.p_component.get(i, k)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quartic_velocity_divergence_closed_form() {
        let s = w0();
        let d = velocity_divergence(
            &s,
            &PolynomialPotential::quartic(1.0),
            1e-8,
            DerivativeScheme::spectral(),
        )
        .unwrap();
        let g = *s.grid();
        let floor = 1e-6 * s.field.max_abs();
        let mut worst = 0.0_f64;
        for ((i, k), &w) in s.field.values().indexed_iter() {
            if w.abs() > floor {
                worst = worst.max((d.get(i, k) - 8.0 * g.x(i) * g.p(k)).abs());
            }
        }
        assert!(worst < 1e-5, "worst {worst}");
    }

    #[test]
    fn masked_divergence_uses_local_stencil() {
        let g = PhaseGrid::square(3.0, 32).unwrap();
        let mut v = VectorField::from_fn(g, |x, p| (x, p));
        v.singular_mask[[16, 16]] = true;
        v.p_component.values_mut()[[16, 16]] = 1e12;
        let d = divergence(&v, DerivativeScheme::spectral()).unwrap();
        assert!(d.is_masked(16, 16) && d.is_masked(18, 16) && d.is_masked(16, 14));
        assert!(!d.is_masked(19, 16));
        assert!((d.get(8, 8) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn harmonic_ground_state_stagnates_at_origin() {
        let s = w0();
        let j = wigner_current(&s, &PolynomialPotential::harmonic(1.0), DerivativeScheme::spectral()).unwrap();
        let pts = stagnation_points(&j);
        assert_eq!(pts.len(), 1, "{pts:?}");
        let g = s.grid();
        assert!(pts[0].x.abs() <= g.dx() && pts[0].p.abs() <= g.dp());
    }

    #[test]
    fn no_sign_change_no_points() {
        let g = PhaseGrid::square(1.0, 16).unwrap();
        let j = VectorField::uniform(g, 1.0, -1.0);
        assert!(stagnation_points(&j).is_empty());
    }

    #[test]
    fn bilinear_root_solves_cell() {
        // f = s - 0.3, g = t - 0.6
        let fa = [-0.3, 0.7, -0.3, 0.7];
        let fb = [-0.6, -0.6, 0.4, 0.4];
        let (s, t) = bilinear_root(fa, fb, 1e-12).unwrap();
        assert!((s - 0.3).abs() < 1e-10 && (t - 0.6).abs() < 1e-10);
    }
}
