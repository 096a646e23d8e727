use proptest::prelude::*;
use wflow_core::diagnostics::{audit_flow, seed_lattice, AuditSummary};
use wflow_core::evolve::{continuity_rhs, QuantumFlow};
use wflow_core::grid::io::{read_scalar_binary, read_scalar_csv, write_scalar_binary, write_scalar_csv};
use wflow_core::{
    compare_fields, integrate, negativity_volume, DerivativeScheme, PhaseGrid, PolynomialPotential, ScalarField,
    SystemParams, WignerState, DEFAULT_EPSILON_REL,
};

fn grid() -> PhaseGrid {
    PhaseGrid::square(6.0, 64).unwrap()
}

fn blob(x0: f64, p0: f64, sx: f64, sp: f64, amp: f64) -> ScalarField {
    ScalarField::from_fn(grid(), move |x, p| {
        amp * (-((x - x0) / sx).powi(2) - ((p - p0) / sp).powi(2)).exp()
    })
}

fn state(field: ScalarField) -> WignerState {
    WignerState::evolved(field, SystemParams::natural(), "blob")
}

fn blob_strategy() -> impl Strategy<Value = ScalarField> {
    (-1.5..1.5f64, -1.5..1.5f64, 0.8..1.4f64, 0.8..1.4f64, -1.0..1.0f64)
        .prop_map(|(x0, p0, sx, sp, a)| blob(x0, p0, sx, sp, a))
}

fn potential_strategy() -> impl Strategy<Value = PolynomialPotential> {
    (-0.5..0.5f64, 0.1..1.0f64, -0.3..0.3f64, 0.0..0.2f64)
        .prop_map(|(a, k, c, q)| PolynomialPotential::new(vec![0.0, a, 0.5 * k, c, q]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn continuity_rhs_is_linear(f in blob_strategy(), g in blob_strategy(), a in -2.0..2.0f64, v in potential_strategy()) {
        let scheme = DerivativeScheme::spectral();
        let combined = f.axpy(a, &g).unwrap();
        let lhs = continuity_rhs(&state(combined), &v, scheme).unwrap();
        let rf = continuity_rhs(&state(f), &v, scheme).unwrap();
        let rg = continuity_rhs(&state(g), &v, scheme).unwrap();
        let rhs = rf.axpy(a, &rg).unwrap();
        let scale = 1.0 + lhs.max_abs();
        prop_assert!(compare_fields(&lhs, &rhs).unwrap().linf < 1e-10 * scale);
    }

    #[test]
    fn continuity_rhs_carries_no_net_flux(f in blob_strategy(), v in potential_strategy()) {
        let rhs = continuity_rhs(&state(f), &v, DerivativeScheme::spectral()).unwrap();
        prop_assert!(integrate(&rhs).abs() < 1e-9 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn compare_fields_is_a_metric(f in blob_strategy(), g in blob_strategy(), h in blob_strategy()) {
        let d = |a: &ScalarField, b: &ScalarField| compare_fields(a, b).unwrap();
        let zero = d(&f, &f);
        prop_assert_eq!((zero.l2, zero.linf, zero.sign_disagreement_area), (0.0, 0.0, 0.0));
        prop_assert_eq!(d(&f, &g), d(&g, &f));
        let (fg, gh, fh) = (d(&f, &g), d(&g, &h), d(&f, &h));
        prop_assert!(fh.l2 <= fg.l2 + gh.l2 + 1e-12);
        prop_assert!(fh.linf <= fg.linf + gh.linf + 1e-12);
    }

    #[test]
    fn negativity_vanishes_exactly_for_nonnegative_fields(f in blob_strategy(), shift in -0.1..0.1f64) {
        let field = f.map(|v| v + shift);
        let neg = negativity_volume(&field);
        prop_assert_eq!(neg == 0.0, field.min_value() >= 0.0);
        prop_assert!(neg >= 0.0);
    }

    #[test]
    fn field_files_round_trip(values in proptest::collection::vec(-1e3..1e3f64, 64 * 64)) {
        let field = ScalarField::new(grid(), ndarray::Array2::from_shape_vec((64, 64), values).unwrap());
        let mut csv = Vec::new();
        write_scalar_csv(&field, &mut csv).unwrap();
        let back = read_scalar_csv(csv.as_slice()).unwrap();
        prop_assert_eq!(back.values(), field.values());
        let mut bin = Vec::new();
        write_scalar_binary(&field, &mut bin).unwrap();
        let back = read_scalar_binary(bin.as_slice()).unwrap();
        prop_assert_eq!(back.values(), field.values());
        prop_assert!(back.grid().same_as(field.grid()));
    }

    #[test]
    fn positive_states_in_quadratic_wells_never_blow_up(
        x0 in -0.5..0.5f64, p0 in -0.5..0.5f64, k in 0.5..2.0f64, a in -0.5..0.5f64,
    ) {
        let g = PhaseGrid::square(6.0, 128).unwrap();
        let field = ScalarField::from_fn(g, |x, p| (-(x - x0).powi(2) - (p - p0).powi(2)).exp() / std::f64::consts::PI);
        let s = WignerState::evolved(field, SystemParams::natural(), "coherent");
        let v = PolynomialPotential::quadratic(k, a, 0.0);
        let flow = QuantumFlow::new(&s, &v, DEFAULT_EPSILON_REL, DerivativeScheme::spectral()).unwrap();
        // every orbit through these seeds stays where W is far above the singular floor
        let entries = audit_flow(&flow, &seed_lattice((-1.0, 1.0), (-1.0, 1.0), 5), 0.5, 1e-2).unwrap();
        let summary = AuditSummary::of(&entries);
        prop_assert_eq!(summary.blowups, 0);
        prop_assert_eq!(summary.sign_changes, 0);
    }
}
