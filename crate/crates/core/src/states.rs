//! Wigner states and the position-space wavefunctions they are built from.

use crate::error::{Result, WflowError};
use crate::grid::{integrate, PhaseGrid, ScalarField};
use ndarray::{Array2, Axis as NdAxis};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

/// Normalization tolerance enforced when a state is constructed.
pub const STATE_NORM_TOL: f64 = 1e-6;
/// Normalization tolerance for wavefunctions.
pub const WAVEFUNCTION_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    hbar: f64,
    mass: f64,
}

impl SystemParams {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(WflowError::InvalidParameter(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(WflowError::InvalidParameter(format!(
                "mass must be positive, got {mass}"
            )));
        }
        Ok(Self { hbar, mass })
    }

    /// `ħ = M = 1`.
    pub fn natural() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::natural()
    }
}

/// A Wigner distribution on a grid together with the physical constants it
/// was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerState {
    pub field: ScalarField,
    pub params: SystemParams,
    pub label: String,
}

impl WignerState {
    /// Wraps an initial-condition field; rejects it unless `∬W = 1` within
    /// [`STATE_NORM_TOL`].
    pub fn new_normalized(field: ScalarField, params: SystemParams, label: impl Into<String>) -> Result<Self> {
        let integral = integrate(&field);
        if (integral - 1.0).abs() > STATE_NORM_TOL || !integral.is_finite() {
            return Err(WflowError::NotNormalized {
                integral,
                tolerance: STATE_NORM_TOL,
            });
        }
        Ok(Self {
            field,
            params,
            label: label.into(),
        })
    }

    /// Wraps an evolved field. Normalization is a measured property of
    /// evolved states and is not enforced here.
    pub fn evolved(field: ScalarField, params: SystemParams, label: impl Into<String>) -> Self {
        Self {
            field,
            params,
            label: label.into(),
        }
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.field.grid()
    }

    pub fn norm(&self) -> f64 {
        integrate(&self.field)
    }

    pub fn with_field(&self, field: ScalarField, label: impl Into<String>) -> Self {
        Self::evolved(field, self.params, label)
    }
}

/// The ground-state Gaussian `(ħπ)⁻¹ exp[-(x² + p²/ħ²)]`.
///
/// At `ħ = 1` this is the harmonic-oscillator ground state; for other values
/// of `ħ` it differs from `(πħ)⁻¹ exp[-(x² + p²)/ħ]` and a warning is logged.
pub fn gaussian_ground_state(grid: &PhaseGrid, params: SystemParams) -> Result<WignerState> {
    check_resolution(grid, params)?;
    let hbar = params.hbar();
    if (hbar - 1.0).abs() > 1e-12 {
        log::warn!("gaussian_ground_state uses exp[-(x^2 + p^2/hbar^2)]; at hbar = {hbar} this is not the harmonic ground state");
    }
    let field = ScalarField::from_fn(*grid, ground_state_fn(0.0, 0.0, hbar));
    WignerState::new_normalized(field, params, "gaussian_ground")
}

fn ground_state_fn(x0: f64, p0: f64, hbar: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, p| (-((x - x0).powi(2) + (p - p0).powi(2) / (hbar * hbar))).exp() / (PI * hbar)
}

fn check_resolution(grid: &PhaseGrid, params: SystemParams) -> Result<()> {
    if grid.dx() > 0.125 || grid.dp() > 0.125 * params.hbar() {
        return Err(WflowError::InvalidGrid(format!(
            "grid spacing ({}, {}) does not resolve a unit-width Gaussian",
            grid.dx(),
            grid.dp()
        )));
    }
    Ok(())
}

/// The ground-state Gaussian displaced to `(x0, p0)`.
pub fn coherent_state(grid: &PhaseGrid, params: SystemParams, x0: f64, p0: f64) -> Result<WignerState> {
    check_resolution(grid, params)?;
    let field = ScalarField::from_fn(*grid, ground_state_fn(x0, p0, params.hbar()));
    let integral = integrate(&field);
    if (integral - 1.0).abs() > STATE_NORM_TOL {
        return Err(WflowError::InvalidParameter(format!(
            "coherent state at ({x0}, {p0}) leaves mass {:.3e} outside the grid",
            1.0 - integral
        )));
    }
    WignerState::new_normalized(field, params, format!("coherent({x0},{p0})"))
}

/// First excited harmonic state `(πħ)⁻¹ (2r²/ħ − 1) e^{−r²/ħ}`, `r² = x² + p²`,
/// whose zero set is the circle `r² = ħ/2`.
pub fn fock1_state(grid: &PhaseGrid, params: SystemParams) -> Result<WignerState> {
    check_resolution(grid, params)?;
    let hbar = params.hbar();
    let field = ScalarField::from_fn(*grid, move |x, p| {
        let r2 = (x * x + p * p) / hbar;
        (2.0 * r2 - 1.0) * (-r2).exp() / (PI * hbar)
    });
    WignerState::new_normalized(field, params, "fock1")
}

/// Uniform position axis shared with a [`PhaseGrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XAxis {
    pub x_min: f64,
    pub dx: f64,
    pub n: usize,
}

impl XAxis {
    pub fn of(grid: &PhaseGrid) -> Self {
        Self {
            x_min: grid.x_range().0,
            dx: grid.dx(),
            n: grid.nx(),
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn matches(&self, grid: &PhaseGrid) -> bool {
        let other = XAxis::of(grid);
        self.n == other.n
            && (self.x_min - other.x_min).abs() <= 1e-9 * (1.0 + self.x_min.abs())
            && (self.dx - other.dx).abs() <= 1e-9 * self.dx
    }
}

/// Complex amplitudes `ψ(x_i)` on the x-axis of a phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    axis: XAxis,
    amplitudes: Vec<Complex64>,
    params: SystemParams,
}

impl Wavefunction {
    /// Rejects amplitudes with `Σ|ψ|² dx` farther than 1e-8 from 1.
    pub fn new(axis: XAxis, amplitudes: Vec<Complex64>, params: SystemParams) -> Result<Self> {
        if amplitudes.len() != axis.n {
            return Err(WflowError::GridMismatch(format!(
                "{} amplitudes for {} nodes",
                amplitudes.len(),
                axis.n
            )));
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(WflowError::InvalidParameter("non-finite amplitude".into()));
        }
        let psi = Self {
            axis,
            amplitudes,
            params,
        };
        let norm = psi.norm_sqr();
        if (norm - 1.0).abs() > WAVEFUNCTION_NORM_TOL {
            return Err(WflowError::NotNormalized {
                integral: norm,
                tolerance: WAVEFUNCTION_NORM_TOL,
            });
        }
        Ok(psi)
    }

    /// Samples `f` on the grid's x-axis and rescales to unit norm.
    pub fn from_fn(grid: &PhaseGrid, params: SystemParams, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let axis = XAxis::of(grid);
        let amps: Vec<Complex64> = (0..axis.n).map(|i| f(axis.x(i))).collect();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * axis.dx;
        if !(norm > 0.0) {
            return Err(WflowError::InvalidParameter("wavefunction vanishes on the grid".into()));
        }
        let s = 1.0 / norm.sqrt();
        Self::new(axis, amps.into_iter().map(|a| a * s).collect(), params)
    }

    /// Harmonic-oscillator eigenstate `n ∈ {0, 1}` of frequency `omega`.
    pub fn harmonic(grid: &PhaseGrid, params: SystemParams, omega: f64, n: usize) -> Result<Self> {
        let a = params.mass() * omega / params.hbar();
        match n {
            0 => Self::from_fn(grid, params, |x| {
                Complex64::new((a / PI).powf(0.25) * (-0.5 * a * x * x).exp(), 0.0)
            }),
            1 => Self::from_fn(grid, params, |x| {
                Complex64::new(
                    (a / PI).powf(0.25) * (2.0 * a).sqrt() * x * (-0.5 * a * x * x).exp(),
                    0.0,
                )
            }),
            _ => Err(WflowError::InvalidParameter(format!(
                "only the n = 0 and n = 1 eigenstates are built in, got {n}"
            ))),
        }
    }

    /// Harmonic ground state displaced to `(x0, p0)`.
    pub fn coherent(grid: &PhaseGrid, params: SystemParams, omega: f64, x0: f64, p0: f64) -> Result<Self> {
        let a = params.mass() * omega / params.hbar();
        let hbar = params.hbar();
        Self::from_fn(grid, params, |x| {
            let amp = (a / PI).powf(0.25) * (-0.5 * a * (x - x0).powi(2)).exp();
            Complex64::from_polar(amp, p0 * x / hbar)
        })
    }

    pub fn axis(&self) -> XAxis {
        self.axis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn params(&self) -> SystemParams {
        self.params
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.axis.dx
    }

    /// `|ψ(x_i)|²`.
    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &Wavefunction) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.axis.dx
    }

    /// Same wavefunction multiplied by `e^{iφ}`.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let f = Complex64::from_polar(1.0, phi);
        Self {
            axis: self.axis,
            amplitudes: self.amplitudes.iter().map(|a| a * f).collect(),
            params: self.params,
        }
    }

    /// Replaces the amplitudes without a normalization check; used by
    /// propagators that preserve the norm to roundoff.
    pub(crate) fn with_amplitudes_unchecked(&self, amplitudes: Vec<Complex64>) -> Self {
        Self {
            axis: self.axis,
            amplitudes,
            params: self.params,
        }
    }

    /// CSV with header `x,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,re,im")?;
        for (i, a) in self.amplitudes.iter().enumerate() {
            writeln!(out, "{},{},{}", self.axis.x(i), a.re, a.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, params: SystemParams) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| WflowError::Parse("empty wavefunction csv".into()))??;
        if header.trim() != "x,re,im" {
            return Err(WflowError::Parse(format!("unexpected header '{header}'")));
        }
        let mut xs = Vec::new();
        let mut amps = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| WflowError::Parse(format!("line {}: bad number", n + 2)))?;
            if cols.len() != 3 {
                return Err(WflowError::Parse(format!("line {}: expected 3 columns", n + 2)));
            }
            xs.push(cols[0]);
            amps.push(Complex64::new(cols[1], cols[2]));
        }
        if xs.len() < 2 {
            return Err(WflowError::Parse("wavefunction csv needs at least two rows".into()));
        }
        let axis = XAxis {
            x_min: xs[0],
            dx: xs[1] - xs[0],
            n: xs.len(),
        };
        Self::new(axis, amps, params)
    }
}

/// Result of the Wigner transform before the imaginary part is discarded.
#[derive(Debug, Clone)]
pub struct WignerTransform {
    pub field: ScalarField,
    /// Largest `|Im W|` over the grid.
    pub max_imag_residue: f64,
}

/// Wigner transform of a pure state,
/// `W(x, p) = (πħ)⁻¹ ∫ dy ψ(x − y) ψ*(x + y) e^{2ipy/ħ}`.
///
/// The `y` integral runs over the symmetric window `x ± y` inside the grid
/// (ψ is zero outside) with step `dx`, and is evaluated directly at the grid
/// momenta.
pub fn wigner_transform(psi: &Wavefunction, grid: &PhaseGrid) -> Result<WignerTransform> {
    if !psi.axis.matches(grid) {
        return Err(WflowError::GridMismatch(
            "wavefunction x-axis does not match the phase grid".into(),
        ));
    }
    let hbar = psi.params.hbar();
    let nx = grid.nx();
    let np = grid.np();
    let dx = grid.dx();
    let kmax = (nx - 1) / 2;
    // phase[j][k] = exp(2 i p_j k dx / ħ) for k = 0..=kmax
    let ps = grid.ps();
    let phase: Vec<Vec<Complex64>> = ps
        .iter()
        .map(|&p| {
            (0..=kmax)
                .map(|k| Complex64::from_polar(1.0, 2.0 * p * k as f64 * dx / hbar))
                .collect()
        })
        .collect();
    let amps = psi.amplitudes();
    let scale = dx / (PI * hbar);
    let mut values = Array2::zeros((nx, np));
    let mut residues = vec![0.0_f64; nx];
    values
        .axis_iter_mut(NdAxis(0))
        .into_par_iter()
        .zip(residues.par_iter_mut())
        .enumerate()
        .for_each(|(i, (mut row, res))| {
            let reach = i.min(nx - 1 - i);
            // corr[k] = ψ(x_i - y_k) ψ*(x_i + y_k), neg[k] for -y_k
            let corr: Vec<Complex64> = (0..=reach).map(|k| amps[i - k] * amps[i + k].conj()).collect();
            let neg: Vec<Complex64> = (0..=reach).map(|k| amps[i + k] * amps[i - k].conj()).collect();
            for (j, out) in row.iter_mut().enumerate() {
                let ph = &phase[j];
                let mut s = corr[0];
                for k in 1..=reach {
                    s += corr[k] * ph[k] + neg[k] * ph[k].conj();
                }
                let w = s * scale;
                *out = w.re;
                *res = res.max(w.im.abs());
            }
        });
    let max_imag_residue = residues.into_iter().fold(0.0, f64::max);
    Ok(WignerTransform {
        field: ScalarField::new(*grid, values),
        max_imag_residue,
    })
}

/// Wigner state of a pure wavefunction; see [`wigner_transform`].
pub fn wigner_from_wavefunction(psi: &Wavefunction, grid: &PhaseGrid) -> Result<WignerState> {
    let norm = psi.norm_sqr();
    if (norm - 1.0).abs() > WAVEFUNCTION_NORM_TOL {
        return Err(WflowError::NotNormalized {
            integral: norm,
            tolerance: WAVEFUNCTION_NORM_TOL,
        });
    }
    let t = wigner_transform(psi, grid)?;
    let integral = integrate(&t.field);
    if (integral - 1.0).abs() > STATE_NORM_TOL {
        log::warn!("Wigner transform integrates to {integral}; mass lies outside the momentum window");
    }
    Ok(WignerState::evolved(t.field, psi.params, "wigner(psi)"))
}
