use std::f64::consts::FRAC_PI_2;

use wflow_core::oracle::{oracle_wavefunction, ORACLE_DT};
use wflow_core::{
    coherent_state, compare_fields, evolve_continuity, gaussian_ground_state, negativity_volume,
    oracle_wigner_evolution, wigner_from_wavefunction, Axis, DerivativeScheme, EvolutionConfig, Method, PhaseGrid,
    PolynomialPotential, SystemParams, Wavefunction,
};

fn setup() -> (PhaseGrid, SystemParams) {
    (PhaseGrid::default_grid(), SystemParams::natural())
}

#[test]
fn quarter_period_is_a_rigid_rotation() {
    let (grid, params) = setup();
    let psi0 = Wavefunction::coherent(&grid, params, 1.0, 2.0, 0.0).unwrap();
    let w = oracle_wigner_evolution(
        &psi0,
        &PolynomialPotential::harmonic(1.0),
        params,
        &grid,
        FRAC_PI_2,
        ORACLE_DT,
    )
    .unwrap();
    // (x, p) → (x cos t + p sin t, p cos t − x sin t) carries (2, 0) to (0, −2)
    let rotated = coherent_state(&grid, params, 0.0, -2.0).unwrap();
    let linf = compare_fields(&w.field, &rotated.field).unwrap().linf;
    assert!(linf < 1e-4, "L∞ {linf:e}");
}

#[test]
fn rk4_continuity_agrees_with_oracle() {
    let (grid, params) = setup();
    let quartic = PolynomialPotential::quartic(1.0);
    let psi0 = Wavefunction::harmonic(&grid, params, 1.0, 0).unwrap();
    let oracle = oracle_wigner_evolution(&psi0, &quartic, params, &grid, 1e-2, ORACLE_DT).unwrap();
    let w0 = gaussian_ground_state(&grid, params).unwrap();
    let cfg = EvolutionConfig::new(
        1e-4,
        100,
        Method::Rk4,
        DerivativeScheme::spectral_filtered(12.0).unwrap(),
    )
    .unwrap();
    let rec = evolve_continuity(&w0, &quartic, &cfg).unwrap();
    let linf = compare_fields(&rec.final_state().field, &oracle.field).unwrap().linf;
    assert!(linf < 1e-3, "L∞ {linf:e}");
}

#[test]
fn position_marginal_is_the_density() {
    // quartic momentum tails pass |p| = 6 by t = 0.05; integrate over a wider p range
    let grid = PhaseGrid::new((-6.0, 6.0), (-12.0, 12.0), 256, 256).unwrap();
    let params = SystemParams::natural();
    let quartic = PolynomialPotential::quartic(1.0);
    let psi0 = Wavefunction::harmonic(&grid, params, 1.0, 0).unwrap();
    for t in [0.0, 0.05, 0.5] {
        let psi = oracle_wavefunction(&psi0, &quartic, params, t, ORACLE_DT).unwrap();
        let w = wigner_from_wavefunction(&psi, &grid).unwrap();
        let dev = w
            .field
            .marginal(Axis::P)
            .iter()
            .zip(psi.density())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-5, "t = {t}: marginal deviation {dev:e}");
    }
}

#[test]
fn strang_splitting_is_second_order() {
    let (grid, params) = setup();
    let quartic = PolynomialPotential::quartic(1.0);
    let psi0 = Wavefunction::harmonic(&grid, params, 1.0, 0).unwrap();
    let t = 0.1;
    let dt = 2e-3;
    let reference = oracle_wavefunction(&psi0, &quartic, params, t, dt / 4.0).unwrap();
    let err = |dt: f64| {
        let psi = oracle_wavefunction(&psi0, &quartic, params, t, dt).unwrap();
        psi.amplitudes()
            .iter()
            .zip(reference.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    };
    let ratio = err(2.0 * dt) / err(dt);
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn quadratic_potentials_do_not_generate_negativity() {
    // wide enough that the displaced state's tails vanish at the x edges
    let grid = PhaseGrid::square(8.0, 256).unwrap();
    let params = SystemParams::natural();
    let v = PolynomialPotential::quadratic(1.0, 0.3, 0.0);
    let psi0 = Wavefunction::coherent(&grid, params, 1.0, 1.0, 0.5).unwrap();
    for t in [0.5, 1.5, 3.0] {
        let w = oracle_wigner_evolution(&psi0, &v, params, &grid, t, ORACLE_DT).unwrap();
        let neg = negativity_volume(&w.field);
        assert!(neg < 1e-6, "t = {t}: negativity {neg:e}");
    }
}

#[test]
fn zero_time_is_the_plain_transform() {
    let (grid, params) = setup();
    let psi0 = Wavefunction::harmonic(&grid, params, 1.0, 1).unwrap();
    let a = oracle_wigner_evolution(&psi0, &PolynomialPotential::quartic(1.0), params, &grid, 0.0, ORACLE_DT).unwrap();
    let b = wigner_from_wavefunction(&psi0, &grid).unwrap();
    assert_eq!(a.field.values(), b.field.values());
}
