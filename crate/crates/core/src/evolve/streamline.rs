//! Streamlines of the velocity field `w` and the transported density
//! `W(r(t)) = e^{−∫₀ᵗ ∇·w dτ} W(r(0))`.

use super::continuity::continuity_rhs;
use super::rk4_step;
use crate::dynamics::{quotient_divergence, CurrentFields, FrictionParams, PolynomialPotential};
use crate::error::{Result, WflowError};
use crate::grid::{CubicSampler, DerivativeScheme, PhaseGrid, ScalarField};
use crate::states::WignerState;
use ndarray::Array2;

/// Largest accepted `|∫∇·w dτ|`; beyond it `e^{±50}` carries no information.
pub const EXPONENT_GUARD: f64 = 50.0;

const CROSSING_BISECTIONS: usize = 60;

/// Velocity, divergence and density at one phase-space point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub velocity: (f64, f64),
    pub divergence: f64,
    pub density: f64,
    pub singular: bool,
}

/// Something a streamline can be integrated through.
pub trait PhaseFlow {
    fn grid(&self) -> &PhaseGrid;
    fn sample(&self, x: f64, p: f64) -> FlowSample;
}

/// `w = J / W` of a Wigner state, interpolated bicubically from the smooth
/// fields `W`, `J`, `∇·J` and `∇W`. A point is singular when the interpolated
/// `|W|` is below `epsilon_rel · max|W|`.
pub struct QuantumFlow {
    parts: CurrentFields,
    threshold: f64,
    mass: f64,
}

impl QuantumFlow {
    pub fn new(
        state: &WignerState,
        potential: &PolynomialPotential,
        epsilon_rel: f64,
        scheme: DerivativeScheme,
    ) -> Result<Self> {
        if !(epsilon_rel > 0.0) {
            return Err(WflowError::InvalidParameter("epsilon_rel must be > 0".into()));
        }
        let parts = CurrentFields::compute(state, potential, scheme)?;
        Ok(Self {
            threshold: epsilon_rel * state.field.max_abs(),
            parts,
            mass: state.params.mass(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

impl PhaseFlow for QuantumFlow {
    fn grid(&self) -> &PhaseGrid {
        self.parts.density.grid()
    }

    fn sample(&self, x: f64, p: f64) -> FlowSample {
        let at = |f: &ScalarField| CubicSampler::new(f).value(x, p);
        let w = at(&self.parts.density);
        if !(w.abs() >= self.threshold) {
            return FlowSample {
                velocity: (p / self.mass, 0.0),
                divergence: 0.0,
                density: w,
                singular: true,
            };
        }
        let jx = at(&self.parts.current.x_component);
        let jp = at(&self.parts.current.p_component);
        let div_j = at(&self.parts.div_current);
        let gx = at(&self.parts.grad_x);
        let gp = at(&self.parts.grad_p);
        FlowSample {
            velocity: (p / self.mass, jp / w),
            divergence: quotient_divergence(w, jx, jp, div_j, gx, gp),
            density: w,
            singular: false,
        }
    }
}

/// The friction velocity field `(p/m, −γp)` with `∇·w = −γ`, carrying a
/// density field for sign tracking.
pub struct FrictionFlow {
    pub friction: FrictionParams,
    pub density: ScalarField,
}

impl PhaseFlow for FrictionFlow {
    fn grid(&self) -> &PhaseGrid {
        self.density.grid()
    }

    fn sample(&self, x: f64, p: f64) -> FlowSample {
        FlowSample {
            velocity: (p / self.friction.mass, -self.friction.gamma * p),
            divergence: -self.friction.gamma,
            density: CubicSampler::new(&self.density).value(x, p),
            singular: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowupReason {
    /// The start point is singular.
    StartMasked,
    /// The trajectory entered the singular set.
    Singular,
    /// The trajectory crossed a zero of `W`; the crossing was bisected to a
    /// singular point.
    ZeroCrossing,
    /// `|∫∇·w dτ|` exceeded [`EXPONENT_GUARD`].
    ExponentGuard,
}

/// Whether the velocity field is frozen at `t₀` or re-evaluated from an
/// Eulerian evolution of the state at every streamline step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamlineMode {
    Frozen,
    Evolving {
        /// Largest RK4 sub-step used to advance the field.
        field_dt: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub times: Vec<f64>,
    pub points: Vec<(f64, f64)>,
    /// `W(r₀)·e^{−∫∇·w}` at each recorded point.
    pub transported: Vec<f64>,
    /// The density field sampled at each recorded point.
    pub sampled: Vec<f64>,
    /// `∫₀ᵗ ∇·w dτ`.
    pub exponent: Vec<f64>,
    pub blowup: Option<BlowupReason>,
    /// Where the blowup was detected: the bisected zero crossing, or the
    /// last point reached before the singular set.
    pub blowup_point: Option<(f64, f64)>,
    /// Density sampled at `blowup_point`.
    pub blowup_density: Option<f64>,
    pub exited_domain: bool,
}

impl Streamline {
    pub fn blowup(&self) -> bool {
        self.blowup.is_some()
    }

    /// Whether the density met along the streamline, including the point
    /// where it blew up, ever took the opposite sign of its starting value.
    /// `None` when the start point is singular.
    pub fn sign_changed(&self) -> Option<bool> {
        if self.blowup == Some(BlowupReason::StartMasked) {
            return None;
        }
        let s0 = self.sampled[0].signum();
        Some(
            self.sampled
                .iter()
                .chain(self.blowup_density.iter())
                .any(|v| v.signum() != s0 && *v != 0.0),
        )
    }

    fn start(r0: (f64, f64), s: FlowSample) -> Self {
        Self {
            times: vec![0.0],
            points: vec![r0],
            transported: vec![s.density],
            sampled: vec![s.density],
            exponent: vec![0.0],
            blowup: None,
            blowup_point: None,
            blowup_density: None,
            exited_domain: false,
        }
    }

    fn blow_up(&mut self, reason: BlowupReason, at: (f64, f64), density: f64) {
        self.blowup = Some(reason);
        self.blowup_point = Some(at);
        self.blowup_density = Some(density);
    }

    fn push(&mut self, t: f64, r: (f64, f64), density: f64, exponent: f64) {
        self.times.push(t);
        self.points.push(r);
        self.transported.push(self.transported[0] * (-exponent).exp());
        self.sampled.push(density);
        self.exponent.push(exponent);
    }
}

enum Stage {
    Ok(f64, f64, f64),
    Singular(f64),
    Outside,
}

fn stage(flow: &dyn PhaseFlow, x: f64, p: f64) -> Stage {
    if !flow.grid().contains(x, p) {
        return Stage::Outside;
    }
    let s = flow.sample(x, p);
    if s.singular {
        Stage::Singular(s.density)
    } else {
        Stage::Ok(s.velocity.0, s.velocity.1, s.divergence)
    }
}

enum StepOutcome {
    Moved((f64, f64), f64),
    /// A stage point fell into the singular set.
    Singular((f64, f64), f64),
    Outside,
}

/// RK4 step of `(r, A)` with `dr/dτ = w(r)`, `dA/dτ = ∇·w(r)`.
fn rk4_flow_step(flow: &dyn PhaseFlow, r: (f64, f64), h: f64) -> StepOutcome {
    let mut k = [(0.0, 0.0, 0.0); 4];
    let offsets = [0.0, 0.5, 0.5, 1.0];
    for s in 0..4 {
        let (px, pp) = if s == 0 {
            r
        } else {
            (r.0 + offsets[s] * h * k[s - 1].0, r.1 + offsets[s] * h * k[s - 1].1)
        };
        match stage(flow, px, pp) {
            Stage::Ok(a, b, c) => k[s] = (a, b, c),
            Stage::Singular(d) => return StepOutcome::Singular((px, pp), d),
            Stage::Outside => return StepOutcome::Outside,
        }
    }
    let comb = |f: fn(&(f64, f64, f64)) -> f64| h / 6.0 * (f(&k[0]) + 2.0 * f(&k[1]) + 2.0 * f(&k[2]) + f(&k[3]));
    StepOutcome::Moved((r.0 + comb(|v| v.0), r.1 + comb(|v| v.1)), comb(|v| v.2))
}

/// Bisects the segment `a → b`, across which the density changes sign, for a
/// singular point. `None` when no sampled point on the segment is singular.
fn bisect_crossing(flow: &dyn PhaseFlow, a: (f64, f64), b: (f64, f64)) -> Option<((f64, f64), f64)> {
    let da = flow.sample(a.0, a.1).density;
    let (mut lo, mut hi) = (0.0, 1.0);
    let point = |s: f64| (a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1));
    for _ in 0..CROSSING_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let m = point(mid);
        let s = flow.sample(m.0, m.1);
        if s.singular {
            return Some((m, s.density));
        }
        if s.density.signum() == da.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    None
}

/// One streamline step; `false` once the trajectory has ended.
fn advance(flow: &dyn PhaseFlow, line: &mut Streamline, t: f64, dt: f64) -> bool {
    let r = *line.points.last().unwrap();
    let a = *line.exponent.last().unwrap();
    let d_prev = *line.sampled.last().unwrap();
    match rk4_flow_step(flow, r, dt) {
        StepOutcome::Singular(at, density) => {
            line.blow_up(BlowupReason::Singular, at, density);
            false
        }
        StepOutcome::Outside => {
            line.exited_domain = true;
            false
        }
        StepOutcome::Moved(next, da) => {
            if !flow.grid().contains(next.0, next.1) {
                line.exited_domain = true;
                return false;
            }
            let s = flow.sample(next.0, next.1);
            let exponent = a + da;
            let crossed = s.density.signum() != d_prev.signum() && s.density != 0.0 && d_prev != 0.0;
            line.push(t + dt, next, s.density, exponent);
            if crossed {
                if let Some((at, density)) = bisect_crossing(flow, r, next) {
                    log::debug!("streamline crossed a zero of W near {at:?}");
                    line.blow_up(BlowupReason::ZeroCrossing, at, density);
                    return false;
                }
            }
            if s.singular {
                line.blow_up(BlowupReason::Singular, next, s.density);
                return false;
            }
            if exponent.abs() > EXPONENT_GUARD {
                line.blow_up(BlowupReason::ExponentGuard, next, s.density);
                return false;
            }
            true
        }
    }
}

/// Streamline through an arbitrary frozen flow.
pub fn integrate_flow(flow: &dyn PhaseFlow, r0: (f64, f64), t_final: f64, dt: f64) -> Result<Streamline> {
    check_args(flow.grid(), r0, t_final, dt)?;
    let s0 = flow.sample(r0.0, r0.1);
    let mut line = Streamline::start(r0, s0);
    if s0.singular {
        line.blow_up(BlowupReason::StartMasked, r0, s0.density);
        return Ok(line);
    }
    let n = (t_final / dt).round() as usize;
    for step in 0..n {
        if !advance(flow, &mut line, step as f64 * dt, dt) {
            break;
        }
    }
    Ok(line)
}

fn check_args(grid: &PhaseGrid, r0: (f64, f64), t_final: f64, dt: f64) -> Result<()> {
    if !grid.contains(r0.0, r0.1) {
        return Err(WflowError::InvalidParameter(format!(
            "seed {r0:?} lies outside the grid"
        )));
    }
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(WflowError::InvalidParameter(
            "streamline needs dt > 0 and t_final >= 0".into(),
        ));
    }
    Ok(())
}

/// Streamline of `w = J/W` from `r0`, blowing up on singular points, zero
/// crossings or an exponent beyond [`EXPONENT_GUARD`].
///
/// In [`StreamlineMode::Evolving`] the state is advanced by the Eulerian
/// continuity equation (RK4 sub-steps no longer than `field_dt`) between
/// streamline steps and `w` is rebuilt from it.
pub fn integrate_along_streamline(
    state_t0: &WignerState,
    potential: &PolynomialPotential,
    r0: (f64, f64),
    t_final: f64,
    dt: f64,
    epsilon_rel: f64,
    scheme: DerivativeScheme,
    mode: StreamlineMode,
) -> Result<Streamline> {
    match mode {
        StreamlineMode::Frozen => {
            let flow = QuantumFlow::new(state_t0, potential, epsilon_rel, scheme)?;
            integrate_flow(&flow, r0, t_final, dt)
        }
        StreamlineMode::Evolving { field_dt } => {
            check_args(state_t0.grid(), r0, t_final, dt)?;
            if !(field_dt > 0.0) {
                return Err(WflowError::InvalidParameter("field_dt must be > 0".into()));
            }
            let mut state = state_t0.clone();
            let mut flow = QuantumFlow::new(&state, potential, epsilon_rel, scheme)?;
            let s0 = flow.sample(r0.0, r0.1);
            let mut line = Streamline::start(r0, s0);
            if s0.singular {
                line.blow_up(BlowupReason::StartMasked, r0, s0.density);
                return Ok(line);
            }
            let n = (t_final / dt).round() as usize;
            let subs = (dt / field_dt).ceil().max(1.0) as usize;
            let h = dt / subs as f64;
            let grid = *state.grid();
            let params = state.params;
            for step in 0..n {
                if !advance(&flow, &mut line, step as f64 * dt, dt) {
                    break;
                }
                let mut w: Array2<f64> = state.field.values().clone();
                for _ in 0..subs {
                    w = rk4_step(&w, h, |v| {
                        let s = WignerState::evolved(ScalarField::new(grid, v.clone()), params, "");
                        Ok(continuity_rhs(&s, potential, scheme)?.into_values())
                    })?;
                }
                state = WignerState::evolved(ScalarField::new(grid, w), params, state.label.clone());
                flow = QuantumFlow::new(&state, potential, epsilon_rel, scheme)?;
                // re-sample the density at the current point in the new field
                let r = *line.points.last().unwrap();
                let s = flow.sample(r.0, r.1);
                *line.sampled.last_mut().unwrap() = s.density;
                if s.singular {
                    line.blow_up(BlowupReason::Singular, r, s.density);
                    break;
                }
            }
            Ok(line)
        }
    }
}
