//! Quantum phase-space flow of one-dimensional conservative systems.
//!
//! The crate propagates Wigner distributions with the Eulerian continuity
//! equation `∂_t W = -∇·J`, cross-checks them against a split-operator
//! Schrödinger oracle, and implements the Lagrangian transport forms built on
//! the velocity field `w = J / W` so that their failure at Wigner zeros can be
//! measured.
//!
//! Module map:
//!
//! * [`grid`]: phase-space grid, fields, derivative kernels, quadrature,
//!   interpolation and field serialization.
//! * [`states`]: Wigner states and position-space wavefunctions.
//! * [`dynamics`]: potentials, Wigner current, velocity field, divergences.
//! * [`evolve`]: Eulerian, Lagrangian and friction evolvers, streamlines.
//! * [`oracle`]: split-operator propagation followed by a Wigner transform.
//! * [`diagnostics`]: negativity, zero contours, singularity census, audits.
//! * [`scenario`]: scenario description, presets and the run driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod heatmap;
pub mod oracle;
pub mod scenario;
pub mod states;

pub use diagnostics::{
    compare_fields, negativity_volume, singularity_census, streamline_sign_audit, zero_contours, AuditEntry,
    DiagnosticsReport, FieldComparison, SingularityCensus,
};
pub use dynamics::{
    classical_velocity, divergence, stagnation_points, velocity_divergence, velocity_field, wigner_current,
    FrictionParams, PolynomialPotential, StagnationPoint,
};
pub use error::{Result, WflowError};
pub use evolve::{
    convective_shift, euler_step_continuity, evolve_continuity, friction_evolve_analytic, friction_evolve_numeric,
    integrate_along_streamline, lagrangian_transport_step, quartic_one_step_operator, EvolutionConfig, EvolutionRecord,
    Method, StepDiagnostics, Streamline, StreamlineMode,
};
pub use grid::{
    integrate, partial_derivative, sample_displaced, Axis, DerivativeScheme, PhaseGrid, ScalarField, VectorField,
};
pub use oracle::{oracle_wigner_evolution, split_operator_propagate, SplitOperatorConfig};
pub use states::{
    coherent_state, fock1_state, gaussian_ground_state, wigner_from_wavefunction, SystemParams, Wavefunction,
    WignerState,
};

/// Default relative floor on `|W|` below which the velocity field is flagged singular.
pub const DEFAULT_EPSILON_REL: f64 = 1e-8;
/// Signed magnitude substituted for velocity entries at singular points.
pub const VELOCITY_CAP: f64 = 1e12;
