use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use wignerphase::dynamics::{evolve_quantum, Schedule, ScheduleProfile};
use wignerphase::phasespace::{ActionQuadrature, ChartForm, ConstantProfile, WignerCurvatureField};
use wignerphase::quantum::OscillatorSystem;
use wignerphase::specfun::QuadratureRule;
use wignerphase::wigner::radial_reduce;
use wignerphase::{
    classical_two_form, curvature_from_wigner, eigenstates, make_cap_circuit, make_cap_surface,
    oscillator_radial_wigner, wigner_transform, Backend, ClassicalOptions, HilbertRoute, OscillatorChart, ParamPoint,
    SpatialGrid,
};

fn point() -> ParamPoint {
    ParamPoint::from([1.3, 0.2, 0.9])
}

fn curvature(c: &mut Criterion) {
    let x = point();
    let grid = SpatialGrid::for_oscillator(std::slice::from_ref(&x), 2, 1.0).unwrap();
    let opts = ClassicalOptions::default().with_periodic_order(64).unwrap();
    let mut g = c.benchmark_group("curvature");
    g.bench_function("plaquette_analytic", |b| {
        let route = HilbertRoute::new(Backend::AnalyticOscillator, grid, 1.0);
        b.iter(|| route.curvature(1, black_box(&x)).unwrap())
    });
    g.sample_size(10);
    g.bench_function("plaquette_grid", |b| {
        let route = HilbertRoute::new(Backend::Grid(&OscillatorSystem), grid, 1.0);
        b.iter(|| route.curvature(1, black_box(&x)).unwrap())
    });
    g.bench_function("classical_two_form", |b| {
        b.iter(|| classical_two_form(&OscillatorChart, 1.5, black_box(&x), &opts).unwrap())
    });
    g.bench_function("phase_space", |b| {
        let form = ChartForm::new(&OscillatorChart, opts.clone());
        let w = oscillator_radial_wigner(1, 1.0).unwrap();
        b.iter(|| curvature_from_wigner(&w, &form, black_box(&x), 1.0, &ActionQuadrature::default()).unwrap())
    });
    g.finish();
}

fn wigner(c: &mut Criterion) {
    let x = point();
    let grid = SpatialGrid::for_oscillator(std::slice::from_ref(&x), 2, 1.0).unwrap();
    let set = eigenstates(Backend::AnalyticOscillator, &x, 1.0, &grid, 2).unwrap();
    let mut g = c.benchmark_group("wigner");
    g.sample_size(10);
    g.bench_function("transform", |b| b.iter(|| wigner_transform(black_box(&set.states[1]), &grid, 1.0).unwrap()));
    let map = wigner_transform(&set.states[1], &grid, 1.0).unwrap();
    let actions = QuadratureRule::gauss_legendre(32, 0.0, 15.0).unwrap();
    let angles = QuadratureRule::periodic(32).unwrap();
    g.bench_function("radial_reduce", |b| {
        b.iter(|| radial_reduce(&map, &OscillatorChart, black_box(&x), &actions, &angles).unwrap())
    });
    g.finish();
}

fn phases(c: &mut Criterion) {
    let surface = make_cap_surface(1.0, 0.8).unwrap();
    let opts = ClassicalOptions::default().with_periodic_order(64).unwrap();
    let mut g = c.benchmark_group("phase");
    g.sample_size(10);
    g.bench_function("cap_phase_space", |b| {
        let form = ChartForm::new(&OscillatorChart, opts.clone());
        let source = ConstantProfile(oscillator_radial_wigner(0, 1.0).unwrap());
        let field = WignerCurvatureField {
            profiles: &source,
            form: &form,
            hbar: 1.0,
            quad: ActionQuadrature::default(),
        };
        b.iter(|| field.berry_phase(black_box(&surface), 8).unwrap())
    });
    let circuit = make_cap_circuit(1.0, 0.8, 64).unwrap();
    let grid = SpatialGrid::for_oscillator(&circuit.sample_points(), 1, 1.0).unwrap();
    let schedule = Schedule::new(circuit, 40.0, 200, ScheduleProfile::Smooth).unwrap();
    g.bench_function("evolve_quantum_200_steps", |b| {
        b.iter(|| evolve_quantum(Backend::AnalyticOscillator, 0, black_box(&schedule), &grid, 1.0).unwrap())
    });
    g.finish();
}

criterion_group!(benches, curvature, wigner, phases);
criterion_main!(benches);
