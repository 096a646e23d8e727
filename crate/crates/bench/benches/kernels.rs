use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use wflow_bench::quartic_fixture;
use wflow_core::evolve::continuity_rhs;
use wflow_core::grid::CubicSampler;
use wflow_core::{
    euler_step_continuity, lagrangian_transport_step, partial_derivative, split_operator_propagate,
    velocity_divergence, wigner_from_wavefunction, Axis, DerivativeScheme, PhaseGrid, SplitOperatorConfig,
    SystemParams, Wavefunction, DEFAULT_EPSILON_REL,
};

fn derivatives(c: &mut Criterion) {
    let mut group = c.benchmark_group("partial_derivative_p3");
    for n in [128, 256] {
        let (state, _) = quartic_fixture(n);
        for (name, scheme) in [
            ("spectral", DerivativeScheme::spectral()),
            ("fd4", DerivativeScheme::central_fd(4).unwrap()),
        ] {
            group.bench_with_input(BenchmarkId::new(name, n), &state, |b, s| {
                b.iter(|| partial_derivative(black_box(&s.field), Axis::P, 3, scheme).unwrap())
            });
        }
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    let (state, quartic) = quartic_fixture(256);
    let scheme = DerivativeScheme::spectral_filtered(12.0).unwrap();
    c.bench_function("continuity_rhs_256", |b| {
        b.iter(|| continuity_rhs(black_box(&state), &quartic, scheme).unwrap())
    });
    c.bench_function("euler_step_256", |b| {
        b.iter(|| euler_step_continuity(black_box(&state), &quartic, 1e-3, scheme).unwrap())
    });
    c.bench_function("velocity_divergence_256", |b| {
        b.iter(|| velocity_divergence(black_box(&state), &quartic, DEFAULT_EPSILON_REL, scheme).unwrap())
    });
    c.bench_function("lagrangian_step_256", |b| {
        b.iter(|| lagrangian_transport_step(black_box(&state), &quartic, 5e-2, DEFAULT_EPSILON_REL, scheme).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let grid = PhaseGrid::default_grid();
    let params = SystemParams::natural();
    let (_, quartic) = quartic_fixture(256);
    let psi = Wavefunction::harmonic(&grid, params, 1.0, 0).unwrap();
    let config = SplitOperatorConfig::new(1e-4, 100).unwrap();
    c.bench_function("split_operator_100_steps", |b| {
        b.iter(|| split_operator_propagate(black_box(&psi), &quartic, params, config).unwrap())
    });
    c.bench_function("wigner_transform_256", |b| {
        b.iter(|| wigner_from_wavefunction(black_box(&psi), &grid).unwrap())
    });
}

fn sampling(c: &mut Criterion) {
    let (state, _) = quartic_fixture(256);
    let sampler = CubicSampler::new(&state.field);
    let points: Vec<(f64, f64)> = (0..1000)
        .map(|k| {
            let t = k as f64 * 0.013;
            (3.0 * t.sin(), 3.0 * (1.7 * t).cos())
        })
        .collect();
    c.bench_function("bicubic_1000_points", |b| {
        b.iter(|| points.iter().map(|&(x, p)| sampler.value(x, p)).sum::<f64>())
    });
}

criterion_group!(benches, derivatives, steps, oracle, sampling);
criterion_main!(benches);
