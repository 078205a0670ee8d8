use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use wignerphase::classical::{classical_two_form, oscillator_two_form_exact, ClassicalOptions, OscillatorChart};
use wignerphase::geometry::{make_cap_circuit, make_cap_surface, ParamPoint, TwoForm};
use wignerphase::phasespace::{curvature_from_wigner, mixed_curvature, mixed_phase, ActionQuadrature, OscillatorExactForm};
use wignerphase::quantum::{
    oscillator_curvature_exact, wrap_phase, wz_connection_loop, Backend, GaugedFamily, HilbertRoute,
    OscillatorFrameFamily, OscillatorSystem, SmoothGauge, SpatialGrid,
};
use wignerphase::specfun::QuadratureRule;
use wignerphase::wigner::{mixed_radial_wigner, oscillator_radial_wigner, thermal_weights};

/// Parameter points with `w` in `[0.5, 2]` and a moderate cross term.
fn param_point() -> impl Strategy<Value = ParamPoint> {
    (0.5f64..2.0, 0.7f64..1.4, -0.3f64..0.3).prop_map(|(w, zr, yr)| {
        let z = w * zr;
        let y = w * yr;
        ParamPoint::from([(w * w + y * y) / z, y, z])
    })
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn wrap_phase_lands_in_half_open_interval(a in -1e3f64..1e3) {
        let w = wrap_phase(a);
        prop_assert!(w > -PI && w <= PI);
        let k = ((a - w) / (2.0 * PI)).round();
        prop_assert!((a - w - 2.0 * PI * k).abs() < 1e-9);
    }

    #[test]
    fn two_form_vector_round_trip(a in -5f64..5.0, b in -5f64..5.0, c in -5f64..5.0) {
        let f = TwoForm::from_vector3([a, b, c]);
        prop_assert_eq!(f.as_vector3(), [a, b, c]);
        for i in 0..3 {
            prop_assert_eq!(f.get(i, i), 0.0);
            for j in 0..3 {
                prop_assert_eq!(f.get(i, j), -f.get(j, i));
            }
        }
    }

    #[test]
    fn legendre_rule_integrates_cubics(c in prop::array::uniform4(-3f64..3.0), a in -2f64..0.0, b in 0.1f64..3.0) {
        let rule = QuadratureRule::gauss_legendre(2, a, b).unwrap();
        let poly = |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        let prim = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0 + c[3] * x.powi(4) / 4.0;
        let exact = prim(b) - prim(a);
        prop_assert!((rule.integrate(poly) - exact).abs() < 1e-12 * exact.abs().max(1.0));
    }

    #[test]
    fn thermal_weights_are_normalized_and_decreasing(beta in 0.2f64..5.0, hbar in 0.3f64..2.0, w in 0.5f64..2.0) {
        let ws = thermal_weights(beta, hbar, w, 1e-12).unwrap();
        prop_assert!((ws.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(ws.windows(2).all(|p| p[1] < p[0]));
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn classical_form_is_linear_in_action(x in param_point(), i in 0.2f64..3.0) {
        let opts = ClassicalOptions::default().with_periodic_order(64).unwrap();
        let one = classical_two_form(&OscillatorChart, i, &x, &opts).unwrap();
        let two = classical_two_form(&OscillatorChart, 2.0 * i, &x, &opts).unwrap();
        prop_assert!(two.max_abs_diff(&one.scaled(2.0)) < 1e-7 * one.max_abs().max(1.0));
        let exact = oscillator_two_form_exact(i, &x).unwrap();
        prop_assert!(one.max_abs_diff(&exact) < 1e-7 * exact.max_abs().max(1.0));
    }

    #[test]
    fn phase_space_curvature_matches_closed_form(x in param_point(), n in 0usize..8, hbar in 0.3f64..2.5) {
        let w = oscillator_radial_wigner(n, hbar).unwrap();
        let f = curvature_from_wigner(&w, &OscillatorExactForm, &x, hbar, &ActionQuadrature::default()).unwrap();
        let exact = oscillator_curvature_exact(n, &x).unwrap();
        prop_assert!(f.max_abs_diff(&exact) < 1e-9);
    }

    #[test]
    fn plaquette_curvature_is_hbar_independent(x in param_point(), n in 0usize..3, hbar in 0.4f64..2.5) {
        let grid = SpatialGrid::for_oscillator(&[x.clone()], n, hbar).unwrap();
        let route = HilbertRoute::new(Backend::AnalyticOscillator, grid, hbar);
        let f = route.curvature(n, &x).unwrap();
        let exact = oscillator_curvature_exact(n, &x).unwrap();
        prop_assert!(f.max_abs_diff(&exact) < 2e-3);
    }

    #[test]
    fn mixed_curvature_is_linear_in_weights(x in param_point(), p0 in 0.0f64..1.0) {
        let q = ActionQuadrature::default();
        let w0 = oscillator_radial_wigner(0, 1.0).unwrap();
        let w1 = oscillator_radial_wigner(1, 1.0).unwrap();
        let mix = mixed_radial_wigner(&[p0, 1.0 - p0], &[w0.clone(), w1.clone()]).unwrap();
        let f = mixed_curvature(&mix, &OscillatorExactForm, &x, 1.0, &q).unwrap();
        let mut want = curvature_from_wigner(&w0, &OscillatorExactForm, &x, 1.0, &q).unwrap().scaled(p0);
        want.add_scaled(1.0 - p0, &curvature_from_wigner(&w1, &OscillatorExactForm, &x, 1.0, &q).unwrap());
        prop_assert!(f.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn surface_reversal_negates_phase(r in 0.05f64..1.2) {
        let s = make_cap_surface(1.0, r).unwrap();
        let w0 = oscillator_radial_wigner(0, 1.0).unwrap();
        let q = ActionQuadrature::default();
        let fwd = mixed_phase(&w0, &OscillatorExactForm, &s, 1.0, &q, 8).unwrap();
        let back = mixed_phase(&w0, &OscillatorExactForm, &s.reversed(), 1.0, &q, 8).unwrap();
        prop_assert!((fwd + back).abs() < 1e-8 * fwd.abs().max(1.0));
        prop_assert!((fwd - 0.5 * PI * (r.cosh() - 1.0)).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(config(6))]

    #[test]
    fn grid_and_closed_form_backends_agree(x in param_point()) {
        // the two backends fix eigenvector phases differently
        let grid = SpatialGrid::for_oscillator(&[x.clone()], 1, 1.0).unwrap();
        let a = HilbertRoute::new(Backend::AnalyticOscillator, grid, 1.0).curvature(1, &x).unwrap();
        let b = HilbertRoute::new(Backend::Grid(&OscillatorSystem), grid, 1.0).curvature(1, &x).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-6);
    }

    #[test]
    fn wz_loop_is_gauge_covariant(seed in 0u64..1000, strength in 0.1f64..0.8) {
        let circuit = make_cap_circuit(1.0, 0.6, 128).unwrap();
        let grid = SpatialGrid::for_oscillator(&circuit.sample_points(), 1, 1.0).unwrap();
        let fam = OscillatorFrameFamily::constant_frame(1, 1.0, grid, 2).unwrap();
        let gauge = SmoothGauge::random(2, 3, strength, seed);
        let u0 = gauge.at(&circuit.at(0.0));
        let gauged = GaugedFamily { inner: &fam, gauge: Arc::new(move |y| gauge.at(y)) };
        let w = wz_connection_loop(&fam, &circuit).unwrap();
        let wg = wz_connection_loop(&gauged, &circuit).unwrap();
        let want = &u0 * w * u0.adjoint();
        let d = (wg - want).iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert!(d < 1e-10, "{}", d);
    }
}
