//! Time evolution of Wigner states.
//!
//! * [`euler_step_continuity`], [`evolve_continuity`]: Eulerian stepping of
//!   `∂_t W = −∇·J` (explicit Euler or classical RK4).
//! * [`quartic_one_step_operator`]: the expanded one-step operator for
//!   `V = K x⁴`.
//! * [`lagrangian_transport_step`], [`convective_shift`]: the transport forms
//!   built on `w = J/W`, implemented as written, flaws included.
//! * [`integrate_along_streamline`]: streamlines of `w` with the accumulated
//!   compression exponent.
//! * [`friction_evolve_analytic`], [`friction_evolve_numeric`]: the classical
//!   free particle with linear friction.

mod continuity;
mod friction;
mod streamline;
mod transport;

pub use continuity::{
    continuity_rhs, euler_step_continuity, evolve_continuity, quartic_one_step_operator, stability_bound,
};
pub use friction::{friction_evolve_analytic, friction_evolve_numeric, friction_rhs};
pub use streamline::{
    integrate_along_streamline, integrate_flow, BlowupReason, FlowSample, FrictionFlow, PhaseFlow, QuantumFlow,
    Streamline, StreamlineMode, EXPONENT_GUARD,
};
pub use transport::{convective_shift, lagrangian_transport_step};

use crate::error::{Result, WflowError};
use crate::grid::{integrate, DerivativeScheme, ScalarField};
use crate::states::WignerState;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Euler,
    Rk4,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(WflowError::Parse(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub method: Method,
    pub scheme: DerivativeScheme,
    /// Store every `record_stride`-th state (the final state is always kept).
    pub record_stride: usize,
    /// Floor used for the per-step `max |∇·w|` diagnostic.
    pub epsilon_rel: f64,
}

impl EvolutionConfig {
    pub fn new(dt: f64, n_steps: usize, method: Method, scheme: DerivativeScheme) -> Result<Self> {
        let c = Self {
            dt,
            n_steps,
            method,
            scheme,
            record_stride: 1,
            epsilon_rel: crate::DEFAULT_EPSILON_REL,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }

    pub fn with_epsilon_rel(mut self, eps: f64) -> Self {
        self.epsilon_rel = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(WflowError::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(WflowError::InvalidParameter("n_steps must be positive".into()));
        }
        if !(self.epsilon_rel > 0.0) {
            return Err(WflowError::InvalidParameter("epsilon_rel must be > 0".into()));
        }
        self.scheme.validate()
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Per-step measurements kept for every step (including `t = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub normalization: f64,
    pub min_value: f64,
    pub negativity_volume: f64,
    /// `max |∇·w|` over unmasked nodes.
    pub max_velocity_divergence: f64,
}

#[derive(Debug, Clone)]
pub struct RecordedState {
    pub step: usize,
    pub time: f64,
    pub state: WignerState,
}

#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    pub config: EvolutionConfig,
    pub states: Vec<RecordedState>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl EvolutionRecord {
    pub fn final_state(&self) -> &WignerState {
        &self.states.last().expect("record holds the initial state").state
    }

    pub fn initial_state(&self) -> &WignerState {
        &self.states[0].state
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| (d.normalization - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) struct RecordBuilder {
    record: EvolutionRecord,
}

impl RecordBuilder {
    pub(crate) fn new(config: EvolutionConfig) -> Self {
        Self {
            record: EvolutionRecord {
                config,
                states: Vec::new(),
                diagnostics: Vec::with_capacity(config.n_steps + 1),
            },
        }
    }

    pub(crate) fn push(&mut self, step: usize, state: &WignerState, max_div: f64) {
        let cfg = self.record.config;
        let time = step as f64 * cfg.dt;
        self.record.diagnostics.push(StepDiagnostics {
            step,
            time,
            normalization: integrate(&state.field),
            min_value: state.field.min_value(),
            negativity_volume: crate::diagnostics::negativity_volume(&state.field),
            max_velocity_divergence: max_div,
        });
        if step % cfg.record_stride == 0 || step == cfg.n_steps {
            self.record.states.push(RecordedState {
                step,
                time,
                state: state.clone(),
            });
        }
    }

    pub(crate) fn finish(self) -> EvolutionRecord {
        self.record
    }
}

/// Classical RK4 step of `dW/dt = rhs(W)`.
pub(crate) fn rk4_step(
    w: &Array2<f64>,
    dt: f64,
    rhs: impl Fn(&Array2<f64>) -> Result<Array2<f64>>,
) -> Result<Array2<f64>> {
    let k1 = rhs(w)?;
    let k2 = rhs(&(w + &(&k1 * (0.5 * dt))))?;
    let k3 = rhs(&(w + &(&k2 * (0.5 * dt))))?;
    let k4 = rhs(&(w + &(&k3 * dt)))?;
    Ok(w + &((k1 + &(k2 * 2.0) + &(k3 * 2.0) + k4) * (dt / 6.0)))
}

pub(crate) fn ensure_finite(field: &ScalarField, step: usize) -> Result<()> {
    if field.all_finite() {
        Ok(())
    } else {
        Err(WflowError::NonFinite { step })
    }
}
