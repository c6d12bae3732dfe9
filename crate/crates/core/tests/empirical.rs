mod common;

use buzz_ld::simulate::{sample, simulate, SampledSeries};
use buzz_ld::spectrum_empirical::{block_sums, estimate_spectrum, read_csv, write_csv};
use buzz_ld::spectrum_theory::{default_q_grid, q_grid};
use buzz_ld::{build_generator, ChainState, ModelParams};
use common::{two_state, two_state_rate_function};
use proptest::prelude::*;

#[test]
fn two_state_estimates_converge_to_the_rate_function() {
    let gen = build_generator(&two_state(1.0, 1.0)).unwrap();
    let series = sample(
        &simulate(&gen, 1e6, 21, ChainState::default()).unwrap(),
        0.1,
    )
    .unwrap();
    let grid = default_q_grid();
    let scales = [10.0, 20.0, 50.0, 100.0];
    let mut errors = Vec::new();
    for tau in scales {
        let est = estimate_spectrum(&block_sums(&series, tau).unwrap(), &grid).unwrap();
        let err = est
            .points
            .iter()
            .filter(|p| two_state_rate_function(p.alpha) >= -0.05)
            .map(|p| (p.f - two_state_rate_function(p.alpha)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors[3] < 0.01, "largest scale error {}", errors[3]);
    // The bias shrinks with the scale.
    assert!(errors[3] < errors[0]);
}

#[test]
fn apex_sits_at_the_trace_mean() {
    let gen = build_generator(&ModelParams::buzz_free()).unwrap();
    let series = sample(&simulate(&gen, 1e5, 3, ChainState::default()).unwrap(), 1.0).unwrap();
    let mean = series.mean();
    for tau in [25.0, 50.0, 100.0, 200.0, 400.0] {
        let spec = estimate_spectrum(&block_sums(&series, tau).unwrap(), &default_q_grid())
            .unwrap()
            .to_spectrum()
            .unwrap();
        assert!(
            (spec.alpha_as - mean).abs() < 0.05 * mean,
            "tau={tau}: {} vs {mean}",
            spec.alpha_as
        );
    }
}

#[test]
fn csv_roundtrip_is_exact() {
    let gen = build_generator(&two_state(1.0, 1.0)).unwrap();
    let series = sample(
        &simulate(&gen, 2e3, 1, ChainState::default()).unwrap(),
        0.25,
    )
    .unwrap();
    let spectra: Vec<_> = [5.0, 10.0]
        .iter()
        .map(|&tau| {
            estimate_spectrum(
                &block_sums(&series, tau).unwrap(),
                &q_grid(-2.0, 2.0, 9).unwrap(),
            )
            .unwrap()
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    write_csv(&path, "# h\n", &spectra).unwrap();
    assert_eq!(read_csv(&path).unwrap(), spectra);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimator_invariants(values in prop::collection::vec(0u32..20, 40..400), block in 2usize..4) {
        let series = SampledSeries { dt: 1.0, values: values.into_iter().map(f64::from).collect() };
        let tau = block as f64;
        let blocks = block_sums(&series, tau).unwrap();
        prop_assert_eq!(blocks.k_tau(), (series.duration() / tau).floor() as usize);
        let est = estimate_spectrum(&blocks, &default_q_grid()).unwrap();
        for p in &est.points {
            prop_assert!(p.epsilon >= 0.0);
            prop_assert!(p.f <= 1e-9);
        }
        for w in est.points.windows(2) {
            prop_assert!(w[1].q > w[0].q);
            prop_assert!(w[1].alpha >= w[0].alpha - 1e-9);
        }
        let lo = blocks.means().fold(f64::INFINITY, f64::min);
        let hi = blocks.means().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(est.points.iter().all(|p| p.alpha >= lo - 1e-9 && p.alpha <= hi + 1e-9));
    }
}
