use crate::dynamics::{velocity_divergence, velocity_field, PolynomialPotential};
use crate::error::{Result, WflowError};
use crate::grid::{sample_displaced, DerivativeScheme, ScalarField, VectorField};
use crate::states::WignerState;
use ndarray::Array2;

/// Semi-Lagrangian realization of the transport form
/// `W(r + dt·w, t + dt) = e^{−dt ∇·w} W(r, t)`:
///
/// `result(r) = exp[−dt·(∇·w)(r̃)] · W(r̃)` with `r̃ = r − dt·w(r)`.
///
/// Nodes whose velocity is singular, or whose source point samples a masked
/// divergence, keep their old value and are flagged in the result's mask.
/// Nothing corrects the method's errors.
pub fn lagrangian_transport_step(
    state: &WignerState,
    potential: &PolynomialPotential,
    dt: f64,
    epsilon_rel: f64,
    scheme: DerivativeScheme,
) -> Result<WignerState> {
    if !(dt >= 0.0) {
        return Err(WflowError::InvalidParameter(format!("dt must be >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(state.with_field(state.field.clone(), state.label.clone()));
    }
    let w = velocity_field(state, potential, epsilon_rel, scheme)?;
    let div_w = velocity_divergence(state, potential, epsilon_rel, scheme)?;
    let shift = w.scale(dt);
    let source = sample_displaced(&state.field, &shift);
    let source_div = sample_displaced(&div_w, &shift);
    let grid = *state.grid();
    let mut mask = Array2::from_elem(grid.shape(), false);
    let values = Array2::from_shape_fn(grid.shape(), |idx| {
        let masked = w.singular_mask[idx] || source.is_masked(idx.0, idx.1) || source_div.is_masked(idx.0, idx.1);
        if masked {
            mask[idx] = true;
            state.field.values()[idx]
        } else {
            (-dt * source_div.values()[idx]).exp() * source.values()[idx]
        }
    });
    let field = ScalarField::with_mask(grid, values, mask);
    Ok(state.with_field(field, format!("{} +lagrangian({dt})", state.label)))
}

/// Forward convective shift `W(r + dt·w(r))`.
pub fn convective_shift(state: &WignerState, w_field: &VectorField, dt: f64) -> Result<ScalarField> {
    state.grid().ensure_same(w_field.grid())?;
    if dt == 0.0 {
        return Ok(state.field.clone());
    }
    Ok(sample_displaced(&state.field, &w_field.scale(-dt)))
}
