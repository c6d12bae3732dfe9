mod common;

use buzz_ld::spectrum_theory::{
    legendre, q_grid, read_theory_csv, scgf, tilted_eigen, tilted_eigen_power, write_theory_csv,
};
use buzz_ld::{build_generator, steady_state, ModelParams};
use common::{small_params, two_state, two_state_rate_function, two_state_scgf};
use proptest::prelude::*;

#[test]
fn two_state_matches_closed_form_on_both_routes() {
    let gen = build_generator(&two_state(1.0, 1.0)).unwrap();
    let phi = gen.observable();
    for q in [-3.0, -1.0, -0.25, 0.5, 1.0, 2.5] {
        let want = two_state_scgf(q);
        let fast = tilted_eigen(&gen, &phi, q, None).unwrap();
        let slow = tilted_eigen_power(&gen, &phi, q, None).unwrap();
        assert!((fast.lambda - want).abs() < 1e-9, "q={q}");
        assert!((slow.lambda - want).abs() < 1e-8, "q={q}");
        let h = 1e-5;
        let slope = (two_state_scgf(q + h) - two_state_scgf(q - h)) / (2.0 * h);
        assert!((fast.dlambda - slope).abs() < 1e-7, "q={q}");
    }
}

#[test]
fn legendre_pairs_lie_on_the_rate_function() {
    let gen = build_generator(&two_state(1.0, 1.0)).unwrap();
    let spec = legendre(&scgf(&gen, &q_grid(-3.0, 3.0, 61).unwrap()).unwrap()).unwrap();
    for p in &spec.points {
        assert!(
            (p.f - two_state_rate_function(p.alpha)).abs() < 1e-8,
            "{p:?}"
        );
    }
    assert!((spec.alpha_as - 0.5).abs() < 1e-10);
}

#[test]
fn shift_invert_agrees_with_power_on_buzz_model() {
    let gen = build_generator(&ModelParams::buzz()).unwrap();
    let phi = gen.observable();
    for q in [-1.0, -0.1, 0.05, 0.3] {
        let fast = tilted_eigen(&gen, &phi, q, None).unwrap();
        let slow = tilted_eigen_power(&gen, &phi, q, None).unwrap();
        let scale = fast.lambda.abs().max(1.0);
        assert!(
            (fast.lambda - slow.lambda).abs() < 1e-8 * scale,
            "q={q}: {} {}",
            fast.lambda,
            slow.lambda
        );
        assert!(
            (fast.dlambda - slow.dlambda).abs() < 1e-5 * fast.dlambda.abs().max(1.0),
            "q={q}"
        );
    }
}

#[test]
fn theory_csv_roundtrip() {
    let gen = build_generator(&two_state(1.0, 3.0)).unwrap();
    let curve = scgf(&gen, &q_grid(-2.0, 2.0, 21).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_theory_csv(&path, "# x\n", &curve).unwrap();
    assert_eq!(read_theory_csv(&path).unwrap(), curve);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scgf_invariants(p in small_params()) {
        let gen = build_generator(&p).unwrap();
        let mean = steady_state(&gen).unwrap().mean_i;
        let grid = q_grid(-2.0, 2.0, 41).unwrap();
        let curve = scgf(&gen, &grid).unwrap();
        let zero = &curve.points[20];
        prop_assert_eq!(zero.q, 0.0);
        prop_assert!(zero.lambda.abs() < 1e-9);
        prop_assert!((zero.dlambda - mean).abs() < 1e-6 * mean);
        // Convex, slope nondecreasing and inside [0, i_max].
        for w in curve.points.windows(3) {
            let second = w[0].lambda - 2.0 * w[1].lambda + w[2].lambda;
            prop_assert!(second >= -1e-9);
            prop_assert!(w[1].dlambda >= w[0].dlambda - 1e-9);
        }
        for pt in &curve.points {
            prop_assert!(pt.dlambda >= -1e-12 && pt.dlambda <= p.i_max as f64 + 1e-9);
        }

        // Legendre duality: Λ(q) = max over the spectrum of qα + f(α).
        let spec = legendre(&curve).unwrap();
        for pt in &curve.points {
            let best = spec.points.iter().map(|s| pt.q * s.alpha + s.f).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((best - pt.lambda).abs() < 1e-7 * pt.lambda.abs().max(1.0), "q={}", pt.q);
        }
        prop_assert!(spec.points.iter().all(|s| s.f <= 0.0));
        prop_assert!((spec.f_at(spec.alpha_as).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn routes_agree_on_small_models(p in small_params(), q in -2.0f64..2.0) {
        let gen = build_generator(&p).unwrap();
        let phi = gen.observable();
        let fast = tilted_eigen(&gen, &phi, q, None).unwrap();
        let slow = tilted_eigen_power(&gen, &phi, q, None).unwrap();
        prop_assert!((fast.lambda - slow.lambda).abs() < 1e-7 * fast.lambda.abs().max(1.0));
    }
}
