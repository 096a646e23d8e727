//! Fixtures shared by the kernel benchmarks.

use wflow_core::{gaussian_ground_state, PhaseGrid, PolynomialPotential, SystemParams, WignerState};

/// Ground state on an `n × n` grid over `[-6, 6]²` and the quartic potential.
pub fn quartic_fixture(n: usize) -> (WignerState, PolynomialPotential) {
    let grid = PhaseGrid::square(6.0, n).expect("valid grid");
    let state = gaussian_ground_state(&grid, SystemParams::natural()).expect("resolved grid");
    (state, PolynomialPotential::quartic(1.0))
}
