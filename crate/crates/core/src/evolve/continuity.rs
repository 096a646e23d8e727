use super::{ensure_finite, rk4_step, EvolutionConfig, EvolutionRecord, Method, RecordBuilder};
use crate::dynamics::{divergence, velocity_divergence, wigner_current, PolynomialPotential};
use crate::error::{Result, WflowError};
use crate::grid::{partial_derivative, Axis, DerivativeScheme, PhaseGrid, ScalarField};
use crate::states::{SystemParams, WignerState};
use ndarray::{Array2, Zip};

/// `−∇·J` for the given state.
pub fn continuity_rhs(
    state: &WignerState,
    potential: &PolynomialPotential,
    scheme: DerivativeScheme,
) -> Result<ScalarField> {
    let j = wigner_current(state, potential, scheme)?;
    Ok(divergence(&j, scheme)?.scale(-1.0))
}

/// One explicit step `W(t + dt) = W(t) − dt ∇·J`, without renormalization.
pub fn euler_step_continuity(
    state: &WignerState,
    potential: &PolynomialPotential,
    dt: f64,
    scheme: DerivativeScheme,
) -> Result<WignerState> {
    if !(dt >= 0.0) {
        return Err(WflowError::InvalidParameter(format!("dt must be >= 0, got {dt}")));
    }
    let rhs = continuity_rhs(state, potential, scheme)?;
    let field = state.field.axpy(dt, &rhs)?;
    Ok(state.with_field(field, format!("{} +euler({dt})", state.label)))
}

/// `[1 + Δt(−ħ²K x ∂_p³ + 4K x³ ∂_p − (p/M) ∂_x)] W` for `V = K x⁴`.
pub fn quartic_one_step_operator(
    state: &WignerState,
    potential: &PolynomialPotential,
    dt: f64,
    scheme: DerivativeScheme,
) -> Result<WignerState> {
    let k = potential
        .as_pure_quartic()
        .ok_or_else(|| WflowError::UnsupportedPotential("the one-step quartic operator needs V = K x^4".into()))?;
    let hbar = state.params.hbar();
    let m = state.params.mass();
    let grid = *state.grid();
    let d3p = partial_derivative(&state.field, Axis::P, 3, scheme)?;
    let d1p = partial_derivative(&state.field, Axis::P, 1, scheme)?;
    let d1x = partial_derivative(&state.field, Axis::X, 1, scheme)?;
    let xs = grid.xs();
    let ps = grid.ps();
    let mut out = state.field.values().clone();
    Zip::indexed(&mut out)
        .and(d3p.values())
        .and(d1p.values())
        .and(d1x.values())
        .for_each(|(i, j), w, &a, &b, &c| {
            let x = xs[i];
            let op = -hbar * hbar * k * x * a + 4.0 * k * x.powi(3) * b - ps[j] / m * c;
            *w += dt * op;
        });
    Ok(state.with_field(
        ScalarField::new(grid, out),
        format!("{} +quartic_op({dt})", state.label),
    ))
}

/// Explicit-stepping bound `0.5·min(dx·M/p_max, dp/max|∂_xV|)`.
pub fn stability_bound(grid: &PhaseGrid, potential: &PolynomialPotential, params: SystemParams) -> f64 {
    let p_max = grid.p_range().0.abs().max(grid.p_range().1.abs());
    let force = potential.derivative(1);
    let f_max = grid.xs().iter().fold(0.0_f64, |m, &x| m.max(force.value(x).abs()));
    let a = grid.dx() * params.mass() / p_max;
    let b = if f_max > 0.0 { grid.dp() / f_max } else { f64::INFINITY };
    0.5 * a.min(b)
}

/// Iterates the continuity equation for `config.n_steps` steps.
///
/// A warning is logged when an Euler run exceeds [`stability_bound`]; the run
/// proceeds regardless. Non-finite values abort with the step index.
pub fn evolve_continuity(
    state: &WignerState,
    potential: &PolynomialPotential,
    config: &EvolutionConfig,
) -> Result<EvolutionRecord> {
    config.validate()?;
    let bound = stability_bound(state.grid(), potential, state.params);
    if config.method == Method::Euler && config.dt >= bound {
        log::warn!(
            "euler dt = {} exceeds the explicit stability bound {bound:.3e}",
            config.dt
        );
    }
    let scheme = config.scheme;
    let eps = config.epsilon_rel;
    let max_div = |s: &WignerState| -> Result<f64> {
        let d = velocity_divergence(s, potential, eps, scheme)?;
        Ok(d.max_abs())
    };
    let mut builder = RecordBuilder::new(*config);
    builder.push(0, state, max_div(state)?);
    let mut current = state.clone();
    let grid = *state.grid();
    let params = state.params;
    for step in 1..=config.n_steps {
        let next = match config.method {
            Method::Euler => euler_step_continuity(&current, potential, config.dt, scheme)?.field,
            Method::Rk4 => {
                let rhs = |w: &Array2<f64>| -> Result<Array2<f64>> {
                    let s = WignerState::evolved(ScalarField::new(grid, w.clone()), params, "");
                    Ok(continuity_rhs(&s, potential, scheme)?.into_values())
                };
                ScalarField::new(grid, rk4_step(current.field.values(), config.dt, rhs)?)
            }
        };
        ensure_finite(&next, step)?;
        current = WignerState::evolved(next, params, format!("{} @t={}", state.label, step as f64 * config.dt));
        builder.push(step, &current, max_div(&current)?);
    }
    Ok(builder.finish())
}
