//! Split-operator Schrödinger propagation on the x-axis of a phase grid,
//! followed by a Wigner transform. This is the reference solution that the
//! phase-space evolvers are measured against.

use crate::dynamics::PolynomialPotential;
use crate::error::{Result, WflowError};
use crate::grid::derivative::{fft_plan, wavenumbers};
use crate::grid::PhaseGrid;
use crate::states::{wigner_from_wavefunction, SystemParams, Wavefunction, WignerState};
use num_complex::Complex64;

/// Default oracle time step.
pub const ORACLE_DT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    /// Half kinetic, full potential, half kinetic.
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOperatorConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub ordering: Splitting,
}

impl SplitOperatorConfig {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(WflowError::InvalidParameter(format!("oracle dt must be > 0, got {dt}")));
        }
        if n_steps == 0 {
            return Err(WflowError::InvalidParameter("oracle needs at least one step".into()));
        }
        Ok(Self {
            dt,
            n_steps,
            ordering: Splitting::Strang,
        })
    }

    /// Steps of at most `max_dt` covering `t` exactly. `t = 0` yields no config.
    pub fn covering(t: f64, max_dt: f64) -> Result<Option<Self>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(WflowError::InvalidParameter(format!(
                "oracle time must be >= 0, got {t}"
            )));
        }
        if t == 0.0 {
            return Ok(None);
        }
        if !(max_dt > 0.0) {
            return Err(WflowError::InvalidParameter(format!(
                "oracle dt must be > 0, got {max_dt}"
            )));
        }
        let n = (t / max_dt - 1e-9).ceil().max(1.0) as usize;
        Self::new(t / n as f64, n).map(Some)
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

fn kinetic_energies(n: usize, dx: f64, params: SystemParams) -> Vec<f64> {
    wavenumbers(n, dx)
        .into_iter()
        .map(|k| (params.hbar() * k).powi(2) / (2.0 * params.mass()))
        .collect()
}

/// Propagates `psi` by `config.n_steps` Strang steps of `config.dt`.
pub fn split_operator_propagate(
    psi: &Wavefunction,
    potential: &PolynomialPotential,
    params: SystemParams,
    config: SplitOperatorConfig,
) -> Result<Wavefunction> {
    let axis = psi.axis();
    let n = axis.n;
    let hbar = params.hbar();
    let dt = config.dt;
    let half_kinetic: Vec<Complex64> = kinetic_energies(n, axis.dx, params)
        .into_iter()
        .map(|t| Complex64::from_polar(1.0 / n as f64, -0.5 * dt * t / hbar))
        .collect();
    let potential_phase: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, -dt * potential.value(axis.x(i)) / hbar))
        .collect();
    let forward = fft_plan(n, true);
    let inverse = fft_plan(n, false);

    let mut buf = psi.amplitudes().to_vec();
    let kick = |buf: &mut Vec<Complex64>| {
        forward.process(buf);
        for (a, f) in buf.iter_mut().zip(&half_kinetic) {
            *a *= f;
        }
        inverse.process(buf);
    };
    for step in 0..config.n_steps {
        match config.ordering {
            Splitting::Strang => {
                kick(&mut buf);
                for (a, f) in buf.iter_mut().zip(&potential_phase) {
                    *a *= f;
                }
                kick(&mut buf);
            }
        }
        if buf.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(WflowError::NonFinite { step: step + 1 });
        }
    }
    Ok(psi.with_amplitudes_unchecked(buf))
}

/// `⟨ψ|p²/2M + V|ψ⟩`, kinetic part evaluated spectrally.
pub fn energy_expectation(psi: &Wavefunction, potential: &PolynomialPotential, params: SystemParams) -> f64 {
    let axis = psi.axis();
    let n = axis.n;
    let mut buf = psi.amplitudes().to_vec();
    fft_plan(n, true).process(&mut buf);
    let kinetic: f64 = buf
        .iter()
        .zip(kinetic_energies(n, axis.dx, params))
        .map(|(a, t)| a.norm_sqr() * t)
        .sum::<f64>()
        * axis.dx
        / n as f64;
    let potential_part: f64 = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| a.norm_sqr() * potential.value(axis.x(i)))
        .sum::<f64>()
        * axis.dx;
    kinetic + potential_part
}

/// Reference Wigner state at time `t`: split-operator propagation with steps
/// no longer than `dt`, then the Wigner transform on `grid`.
pub fn oracle_wigner_evolution(
    psi0: &Wavefunction,
    potential: &PolynomialPotential,
    params: SystemParams,
    grid: &PhaseGrid,
    t: f64,
    dt: f64,
) -> Result<WignerState> {
    let psi_t = oracle_wavefunction(psi0, potential, params, t, dt)?;
    let mut state = wigner_from_wavefunction(&psi_t, grid)?;
    state.label = format!("oracle t={t}");
    Ok(state)
}

/// The propagated wavefunction behind [`oracle_wigner_evolution`].
pub fn oracle_wavefunction(
    psi0: &Wavefunction,
    potential: &PolynomialPotential,
    params: SystemParams,
    t: f64,
    dt: f64,
) -> Result<Wavefunction> {
    match SplitOperatorConfig::covering(t, dt)? {
        None => Ok(psi0.clone()),
        Some(config) => split_operator_propagate(psi0, potential, params, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PhaseGrid, SystemParams) {
        (PhaseGrid::default_grid(), SystemParams::natural())
    }

    #[test]
    fn harmonic_ground_state_is_stationary() {
        let (grid, params) = setup();
        let psi = Wavefunction::harmonic(&grid, params, 1.0, 0).unwrap();
        let cfg = SplitOperatorConfig::new(1e-3, 2000).unwrap();
        let out = split_operator_propagate(&psi, &PolynomialPotential::harmonic(1.0), params, cfg).unwrap();
        assert!((psi.overlap(&out).norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn norm_is_preserved() {
        let (grid, params) = setup();
        let psi = Wavefunction::coherent(&grid, params, 1.0, 0.5, -0.3).unwrap();
        let cfg = SplitOperatorConfig::new(1e-4, 10_000).unwrap();
        let out = split_operator_propagate(&psi, &PolynomialPotential::quartic(1.0), params, cfg).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quartic_energy_is_conserved() {
        let (grid, params) = setup();
        let pot = PolynomialPotential::quartic(1.0);
        let psi = Wavefunction::harmonic(&grid, params, 1.0, 0).unwrap();
        let e0 = energy_expectation(&psi, &pot, params);
        let out = oracle_wavefunction(&psi, &pot, params, 0.05, ORACLE_DT).unwrap();
        let e1 = energy_expectation(&out, &pot, params);
        assert!((e1 - e0).abs() / e0.abs() < 1e-6, "{e0} {e1}");
    }

    #[test]
    fn harmonic_energy_matches_ground_value() {
        let (grid, params) = setup();
        let psi = Wavefunction::harmonic(&grid, params, 1.0, 0).unwrap();
        let e = energy_expectation(&psi, &PolynomialPotential::harmonic(1.0), params);
        assert!((e - 0.5).abs() < 1e-10, "{e}");
    }

    #[test]
    fn zero_time_is_the_plain_transform() {
        let (grid, params) = setup();
        let psi = Wavefunction::coherent(&grid, params, 1.0, 0.4, 0.2).unwrap();
        let a =
            oracle_wigner_evolution(&psi, &PolynomialPotential::quartic(1.0), params, &grid, 0.0, ORACLE_DT).unwrap();
        let b = wigner_from_wavefunction(&psi, &grid).unwrap();
        assert_eq!(a.field.values(), b.field.values());
    }

    #[test]
    fn covering_splits_exactly() {
        let c = SplitOperatorConfig::covering(0.05, 1e-4).unwrap().unwrap();
        assert_eq!(c.n_steps, 500);
        assert!((c.total_time() - 0.05).abs() < 1e-15);
        assert!(SplitOperatorConfig::covering(0.0, 1e-4).unwrap().is_none());
        assert!(SplitOperatorConfig::new(0.0, 3).is_err());
    }
}
