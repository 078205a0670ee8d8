use std::f64::consts::PI;

use num_complex::Complex64;

use wignerphase::classical::{
    classical_two_form, hannay_angle, ClassicalOptions, DisplacedAnharmonic, NumericChart, OscillatorChart,
    ShiftedOriginChart,
};
use wignerphase::dynamics::{
    ensemble_angles, evolve_classical, evolve_quantum_with, mixed_phase_numeric, DynamicalPhaseRule,
    QuantumOptions, Schedule, ScheduleProfile, TrajectoryOptions,
};
use wignerphase::geometry::{make_cap_circuit, make_cap_surface, ParamPoint};
use wignerphase::phasespace::{curvature_from_wigner, ActionQuadrature, ChartForm};
use wignerphase::quantum::{eigenstates, wz_connection_loop, Backend, HilbertRoute, OscillatorFrameFamily, SpatialGrid};
use wignerphase::specfun::QuadratureRule;
use wignerphase::wigner::{radial_reduce, wigner_transform};

fn p(x: f64, y: f64, z: f64) -> ParamPoint {
    ParamPoint::from([x, y, z])
}

fn opts64() -> ClassicalOptions {
    ClassicalOptions::default().with_periodic_order(64).unwrap()
}

#[test]
fn angle_origin_shift_leaves_two_form_and_hannay_angle_unchanged() {
    let shifted = ShiftedOriginChart {
        inner: &OscillatorChart,
        shift: |x: &ParamPoint| 0.7 * x[0] + 0.3 * x[2].sin() - 0.4 * x[1] * x[1],
    };
    for x in [p(1.0, 0.0, 1.0), p(1.7, 0.4, 0.9), p(0.8, -0.3, 1.5)] {
        for i in [0.5, 2.0] {
            let a = classical_two_form(&OscillatorChart, i, &x, &opts64()).unwrap();
            let b = classical_two_form(&shifted, i, &x, &opts64()).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-7 * a.max_abs().max(1.0), "{x}: {:?} vs {:?}", a.as_vector3(), b.as_vector3());
        }
    }
    let s = make_cap_surface(1.0, 0.8).unwrap();
    let ha = hannay_angle(&OscillatorChart, 1.0, &s, &opts64(), 8).unwrap();
    let hb = hannay_angle(&shifted, 1.0, &s, &opts64(), 8).unwrap();
    assert!((ha - hb).abs() < 1e-7);
}

#[test]
fn hannay_angle_is_independent_of_action() {
    let s = make_cap_surface(1.0, 0.6).unwrap();
    let want = PI * (0.6f64.cosh() - 1.0);
    for i in [0.3, 1.0, 4.0] {
        let h = hannay_angle(&OscillatorChart, i, &s, &opts64(), 8).unwrap();
        assert!((h - want).abs() < 1e-6, "I = {i}: {h} vs {want}");
    }
}

#[test]
fn anharmonic_two_form_is_minus_one_in_shift_plane() {
    let chart = NumericChart::new(DisplacedAnharmonic::default());
    for x in [p(0.2, 0.3, 0.05), p(-0.4, 0.1, 0.25), p(0.0, 0.0, 1.0)] {
        for i in [0.3, 1.0, 2.5] {
            let f = classical_two_form(&chart, i, &x, &opts64()).unwrap().as_vector3();
            assert!(f[0].abs() < 2e-5 && f[1].abs() < 1e-4, "{x} I={i}: {f:?}");
            assert!((f[2] + 1.0).abs() < 1e-6, "{x} I={i}: {f:?}");
        }
    }
}

#[test]
fn anharmonic_routes_agree() {
    let system = DisplacedAnharmonic::default();
    let chart = NumericChart::new(system);
    let x = p(0.2, 0.3, 0.1);
    for hbar in [1.0, 0.5] {
        let grid = SpatialGrid::centered(0.2, 9.0, 256).unwrap();
        let route = HilbertRoute::new(Backend::Grid(&system), grid, hbar);
        let states = eigenstates(Backend::Grid(&system), &x, hbar, &grid, 2).unwrap();
        let form = ChartForm::new(&chart, opts64());
        for n in 0..2 {
            let f = route.curvature(n, &x).unwrap().as_vector3();
            assert!(f[0].abs() < 2e-3 && f[1].abs() < 2e-3, "{f:?}");
            assert!((f[2] - 1.0 / hbar).abs() < 2e-3, "plaquette {f:?}");

            let map = wigner_transform(&states.states[n], &grid, hbar).unwrap();
            let actions = QuadratureRule::gauss_legendre(64, 0.0, 22.5 * hbar).unwrap();
            let angles = QuadratureRule::periodic(64).unwrap();
            let red = radial_reduce(&map, &chart, &x, &actions, &angles).unwrap();
            let ps = curvature_from_wigner(&red.profile, &form, &x, hbar, &ActionQuadrature::default())
                .unwrap()
                .as_vector3();
            assert!((ps[2] - 1.0 / hbar).abs() < 2e-3 && ps[0].abs() < 2e-3 && ps[1].abs() < 2e-3, "phase space {ps:?}");
        }
    }
}

#[test]
fn surface_and_loop_phases_agree() {
    let r = 0.8;
    let s = make_cap_surface(1.0, r).unwrap();
    let circuit = make_cap_circuit(1.0, r, 2048).unwrap();
    let grid = SpatialGrid::for_oscillator(&circuit.sample_points(), 1, 1.0).unwrap();
    let route = HilbertRoute::new(Backend::AnalyticOscillator, grid, 1.0).with_delta(2e-3);
    for n in 0..2 {
        let gamma = route.berry_phase(n, &s, 8).unwrap();
        let fam = OscillatorFrameFamily::constant_frame(n, 1.0, grid, 1).unwrap();
        let w = wz_connection_loop(&fam, &circuit).unwrap();
        assert!((w[(0, 0)] - Complex64::from_polar(1.0, gamma.wrapped)).norm() < 1e-4);
    }
}

fn cap_schedule(t: f64, steps: usize) -> Schedule {
    Schedule::new(make_cap_circuit(1.0, 1.0, 64).unwrap(), t, steps, ScheduleProfile::Smooth).unwrap()
}

fn cap_grid() -> SpatialGrid {
    SpatialGrid::for_oscillator(&make_cap_circuit(1.0, 1.0, 64).unwrap().sample_points(), 1, 1.0).unwrap()
}

#[test]
fn quantum_and_classical_transport_are_consistent() {
    let s = cap_schedule(640.0, 3200);
    let grid = cap_grid();
    let opts = QuantumOptions::default();
    let g0 = evolve_quantum_with(Backend::AnalyticOscillator, 0, &s, &grid, 1.0, &opts).unwrap();
    let g1 = evolve_quantum_with(Backend::AnalyticOscillator, 1, &s, &grid, 1.0, &opts).unwrap();
    assert!(g0.norm_defect < 1e-8 && g1.norm_defect < 1e-8);
    let cl = evolve_classical(&OscillatorChart, 1.0, &ensemble_angles(16), &cap_schedule(1000.0, 1000), &TrajectoryOptions::default())
        .unwrap();
    let diff = -(g1.gamma_extracted - g0.gamma_extracted);
    assert!((cl.delta_theta - diff).abs() < 3e-2, "{} vs {diff}", cl.delta_theta);
    assert!((g1.gamma_extracted + 1.5 * PI * (1f64.cosh() - 1.0)).abs() < 3e-2, "{} {}", g0.gamma_extracted, g1.gamma_extracted);
}

#[test]
fn trapezoid_phase_rule_agrees_with_scheme_phase() {
    let s = cap_schedule(320.0, 12800);
    let grid = cap_grid();
    let mut opts = QuantumOptions::default();
    let a = evolve_quantum_with(Backend::AnalyticOscillator, 0, &s, &grid, 1.0, &opts).unwrap();
    opts.phase_rule = DynamicalPhaseRule::Trapezoid;
    let b = evolve_quantum_with(Backend::AnalyticOscillator, 0, &s, &grid, 1.0, &opts).unwrap();
    assert!((a.gamma_extracted - b.gamma_extracted).abs() < 1e-2);
    assert!((a.dynamical_phase - 160.0).abs() < 1e-2 && (b.dynamical_phase - 160.0).abs() < 1e-9);
}

#[test]
fn mixed_phase_from_dynamics() {
    let s = cap_schedule(640.0, 3200);
    let grid = cap_grid();
    let k = PI * (1f64.cosh() - 1.0);
    let opts = QuantumOptions::default();
    let pure = mixed_phase_numeric(Backend::AnalyticOscillator, &[1.0], &s, &grid, 1.0, &opts).unwrap();
    let single = evolve_quantum_with(Backend::AnalyticOscillator, 0, &s, &grid, 1.0, &opts).unwrap();
    assert!((pure.geometric - single.gamma_extracted).abs() < 1e-12);

    let half = mixed_phase_numeric(Backend::AnalyticOscillator, &[0.5, 0.5], &s, &grid, 1.0, &opts).unwrap();
    let want = (Complex64::from_polar(0.5, -0.5 * k) + Complex64::from_polar(0.5, -1.5 * k)).arg();
    assert!((half.geometric - want).abs() < 2e-2, "{} vs {want}", half.geometric);
    let back = mixed_phase_numeric(Backend::AnalyticOscillator, &[0.5, 0.5], &s.reversed(), &grid, 1.0, &opts).unwrap();
    assert!((back.geometric + want).abs() < 2e-2, "{} {}", back.geometric, half.geometric);
    assert!(mixed_phase_numeric(Backend::AnalyticOscillator, &[0.5, 0.4], &s, &grid, 1.0, &opts).is_err());
}

#[test]
fn doubling_time_keeps_hannay_angle_and_doubles_dynamical_angle() {
    let angles = ensemble_angles(16);
    let a = evolve_classical(&OscillatorChart, 1.0, &angles, &cap_schedule(1000.0, 1000), &TrajectoryOptions::default()).unwrap();
    let b = evolve_classical(&OscillatorChart, 1.0, &angles, &cap_schedule(2000.0, 2000), &TrajectoryOptions::default()).unwrap();
    assert!((a.delta_theta - b.delta_theta).abs() < 2e-2);
    assert!((b.dynamical_angle - 2.0 * a.dynamical_angle).abs() < 1e-6);
    assert!(b.action_drift < 0.01 && b.max_action_excursion < 0.05);
}
