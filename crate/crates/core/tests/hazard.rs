mod common;

use aft_xsect_core::hazard::{estimate_i1, weighted_hazard_error, BandwidthRule, HazardScore, ZeroHazard};
use aft_xsect_core::model::pseudo_responses;
use aft_xsect_core::{
    estimate_hazard, estimate_hazard_symmetrized, sample_direct, BaselineModel, CovariateModel, HazardFit,
    HazardOptions, ModelSpec, RegressionParam, SeedSpec, Variant,
};
use common::median;
use proptest::prelude::*;

fn ys(baseline: BaselineModel, n: usize, seed: u64) -> Vec<f64> {
    let spec =
        ModelSpec::new(RegressionParam::scalar(0.5), baseline, CovariateModel::standard_normal(1), Variant::KnownH)
            .unwrap();
    let data = sample_direct(&spec, n, SeedSpec::new(seed, 0)).unwrap();
    pseudo_responses(&spec.theta, &data).unwrap()
}

fn exp1() -> BaselineModel {
    BaselineModel::exponential(1.0).unwrap()
}

fn check_invariants(fit: &HazardFit) -> Result<(), TestCaseError> {
    let end = fit.grid_end();
    for i in 0..=400 {
        let y = end * i as f64 / 400.0;
        let (g, yl) = (fit.g_hat(y), fit.y_lambda(y));
        prop_assert!(g >= 0.0 && g.is_finite());
        prop_assert!(yl >= 0.0 && yl <= fit.clip_bound(), "yλ̂({y}) = {yl}");
        if g < fit.trim_floor() {
            prop_assert_eq!(yl, 0.0);
        }
    }
    prop_assert_eq!(fit.lambda_hat(0.0), 0.0);
    prop_assert_eq!(fit.g_hat(-1.0), 0.0);
    let m = fit.metadata();
    prop_assert!(m.trimmed_mass >= 0.0 && m.trimmed_mass <= 1.0);
    prop_assert!(fit.i1_hat() >= 0.0 && fit.i1_hat() <= fit.clip_bound().powi(2) * (1.0 + 1e-9));
    Ok(())
}

#[test]
fn density_estimate_at_one() {
    let fit = estimate_hazard(&ys(exp1(), 10_000, 1), &HazardOptions::default()).unwrap();
    let g = fit.g_hat(1.0);
    assert!((g - (-1.0f64).exp()).abs() < 0.05, "{g}");
}

#[test]
fn density_estimates_have_unit_mass() {
    let y = ys(exp1(), 2_000, 2);
    let opts = HazardOptions::default();
    let kernel = estimate_hazard(&y, &opts).unwrap();
    let sym = estimate_hazard_symmetrized(&y, SeedSpec::new(2, 9), &opts).unwrap();
    for fit in [kernel, sym] {
        assert!((fit.mass() - 1.0).abs() < 1e-6, "{:?}: {}", fit.metadata().method, fit.mass());
    }
}

#[test]
fn weighted_error_at_ten_thousand() {
    // a single draw exceeds 0.1 about one time in five; the median does not
    let mut errs: Vec<f64> = (0..9u64)
        .map(|s| {
            let fit = estimate_hazard(&ys(exp1(), 10_000, 300 + s), &HazardOptions::default()).unwrap();
            weighted_hazard_error(&fit, &exp1(), fit.grid_end()).unwrap()
        })
        .collect();
    let m = median(&mut errs);
    assert!(m < 0.1, "median weighted error {m}");
}

#[test]
fn exponential_information_at_ten_thousand() {
    let fit = estimate_hazard(&ys(exp1(), 10_000, 6), &HazardOptions::default()).unwrap();
    let i1 = estimate_i1(&fit).unwrap();
    assert!((1.6..=2.4).contains(&i1), "{i1}");
    assert_eq!(ZeroHazard.i1().unwrap(), 0.0);
}

#[test]
fn symmetrized_score_tracks_identity() {
    // for Exp(1), yλ(y) = y; check the pointwise median over seeds
    let opts = HazardOptions::default();
    let fits: Vec<HazardFit> = (0..50u64)
        .map(|s| estimate_hazard_symmetrized(&ys(exp1(), 10_000, 100 + s), SeedSpec::new(s, 1), &opts).unwrap())
        .collect();
    for y in (0..=15).map(|i| 0.5 + 0.1 * i as f64) {
        let mut at: Vec<f64> = fits.iter().map(|f| f.y_lambda(y)).collect();
        let m = median(&mut at);
        assert!((m - y).abs() < 0.15, "median yλ̂({y}) = {m}");
    }
}

#[test]
fn weibull_two_information() {
    // yλ(y) = 2y², E(2Y²)² = 3 under g_Y ∝ e^{-y²}
    let fit =
        estimate_hazard(&ys(BaselineModel::weibull(2.0, 1.0).unwrap(), 10_000, 4), &HazardOptions::default()).unwrap();
    let i1 = estimate_i1(&fit).unwrap();
    assert!((2.4..=3.6).contains(&i1), "{i1}");
}

#[test]
fn information_estimate_converges() {
    let spread = |n: usize| {
        let mut e: Vec<f64> = (0..20u64)
            .map(|s| {
                let fit = estimate_hazard(&ys(exp1(), n, 200 + s), &HazardOptions::default()).unwrap();
                (fit.i1_hat() - 2.0).abs()
            })
            .collect();
        median(&mut e)
    };
    let (small, large) = (spread(1_000), spread(16_000));
    assert!(large < small, "{small} → {large}");
}

#[test]
fn writes_grid_as_csv() {
    let fit = estimate_hazard(&ys(exp1(), 500, 5), &HazardOptions::default()).unwrap();
    let mut buf = Vec::new();
    fit.write_csv(&mut buf, 50).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "y,g_hat,lambda_hat");
    assert_eq!(lines.len(), 51);
    let last: Vec<f64> = lines[50].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - fit.grid_end()).abs() < 1e-9);
}

#[test]
fn single_observation_mode() {
    let opts = HazardOptions { bandwidth: BandwidthRule::Fixed { h: 0.2 }, ..HazardOptions::default() };
    let fit = estimate_hazard(&[1.0], &opts).unwrap();
    let peak = fit.g_hat(1.0);
    for y in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
        assert!(fit.g_hat(y) < peak, "ĝ({y}) ≥ ĝ(1)");
    }
}

#[test]
fn degenerate_samples_are_rejected() {
    let opts = HazardOptions::default();
    assert!(estimate_hazard(&[], &opts).is_err());
    assert!(estimate_hazard(&[1.0; 20], &opts).is_err());
    assert!(estimate_hazard(&[1.0, -2.0, 3.0], &opts).is_err());
    assert!(estimate_hazard(&[1.0, f64::NAN, 3.0], &opts).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trim_clip_and_sign_invariants(
        raw in prop::collection::vec(0.001f64..30.0, 20..300),
        seed in any::<u64>(),
    ) {
        prop_assume!(raw.iter().any(|v| (v - raw[0]).abs() > 1e-6));
        let opts = HazardOptions::default();
        check_invariants(&estimate_hazard(&raw, &opts).unwrap())?;
        check_invariants(&estimate_hazard_symmetrized(&raw, SeedSpec::new(seed, 0), &opts).unwrap())?;
    }
}
