use super::{ensure_finite, rk4_step, EvolutionConfig, EvolutionRecord, Method, RecordBuilder};
use crate::dynamics::FrictionParams;
use crate::error::Result;
use crate::grid::{partial_derivative, Axis, DerivativeScheme, PhaseGrid, ScalarField};
use crate::states::WignerState;
use ndarray::{Array2, Zip};

/// Exact friction solution
/// `W(x, p, t) = e^{γt} W₀(x − p(e^{γt} − 1)/(γm), p e^{γt})`,
/// reducing to free streaming `W₀(x − pt/m, p)` at `γ = 0`.
pub fn friction_evolve_analytic(
    grid: &PhaseGrid,
    initial: impl Fn(f64, f64) -> f64,
    friction: FrictionParams,
    t: f64,
) -> ScalarField {
    let FrictionParams { gamma, mass } = friction;
    if gamma == 0.0 {
        return ScalarField::from_fn(*grid, |x, p| initial(x - p * t / mass, p));
    }
    let growth = (gamma * t).exp();
    ScalarField::from_fn(*grid, |x, p| {
        growth * initial(x - p * (growth - 1.0) / (gamma * mass), p * growth)
    })
}

/// `[−(p/m)∂_x + γp∂_p + γ] W`.
pub fn friction_rhs(field: &ScalarField, friction: FrictionParams, scheme: DerivativeScheme) -> Result<ScalarField> {
    let grid = *field.grid();
    let dx = partial_derivative(field, Axis::X, 1, scheme)?;
    let dp = partial_derivative(field, Axis::P, 1, scheme)?;
    let ps = grid.ps();
    let FrictionParams { gamma, mass } = friction;
    let mut out = Array2::zeros(grid.shape());
    Zip::indexed(&mut out)
        .and(field.values())
        .and(dx.values())
        .and(dp.values())
        .for_each(|(_, j), o, &w, &a, &b| {
            let p = ps[j];
            *o = -p / mass * a + gamma * p * b + gamma * w;
        });
    Ok(ScalarField::new(grid, out))
}

/// Numerical integration of the friction evolution equation.
pub fn friction_evolve_numeric(
    state: &WignerState,
    friction: FrictionParams,
    config: &EvolutionConfig,
) -> Result<EvolutionRecord> {
    config.validate()?;
    let scheme = config.scheme;
    let grid = *state.grid();
    let params = state.params;
    let mut builder = RecordBuilder::new(*config);
    builder.push(0, state, friction.gamma);
    let mut current = state.field.clone();
    for step in 1..=config.n_steps {
        let next = match config.method {
            Method::Euler => current.axpy(config.dt, &friction_rhs(&current, friction, scheme)?)?,
            Method::Rk4 => {
                let rhs = |w: &Array2<f64>| -> Result<Array2<f64>> {
                    Ok(friction_rhs(&ScalarField::new(grid, w.clone()), friction, scheme)?.into_values())
                };
                ScalarField::new(grid, rk4_step(current.values(), config.dt, rhs)?)
            }
        };
        ensure_finite(&next, step)?;
        current = next;
        let s = WignerState::evolved(current.clone(), params, format!("{} friction", state.label));
        builder.push(step, &s, friction.gamma);
    }
    Ok(builder.finish())
}
