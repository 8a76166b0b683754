mod common;

use aft_xsect_core::estimators::{
    efficient_score_known_h, efficient_score_unknown_h, mean_influence, one_step_with_hazard, preliminary_unknown_h,
};
use aft_xsect_core::hazard::{TrueHazard, ZeroHazard};
use aft_xsect_core::information::tilted_moments;
use aft_xsect_core::{
    fisher_for, one_step_plugin, one_step_split, sample_direct, BaselineModel, CovariateModel, Dataset, Error,
    EstimationTarget, EstimatorOptions, HazardMethod, ModelSpec, Observation, RegressionParam, Scheme, SeedSpec,
    UnknownHScore, Variant,
};
use common::median;
use nalgebra::DVector;
use proptest::prelude::*;

fn flagship_data(variant: Variant, n: usize, seed: u64) -> (ModelSpec, Dataset) {
    let spec = ModelSpec::flagship(variant);
    let data = sample_direct(&spec, n, SeedSpec::new(seed, 0)).unwrap();
    (spec, data)
}

fn target(spec: &ModelSpec) -> EstimationTarget<'_> {
    match spec.variant {
        Variant::KnownH => EstimationTarget::KnownH(&spec.covariates),
        Variant::UnknownHMeanZero => EstimationTarget::UnknownHMeanZero,
    }
}

fn records() -> impl Strategy<Value = Vec<Observation>> {
    prop::collection::vec((0.05f64..5.0, -2.0f64..2.0).prop_map(|(x, z)| Observation { x, z: vec![z] }), 12..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn preliminary_unknown_h_is_odd(recs in records()) {
        let data = Dataset::new(recs, None).unwrap();
        let flipped = data.negate_covariates();
        match (preliminary_unknown_h(&data), preliminary_unknown_h(&flipped)) {
            (Ok(a), Ok(b)) => prop_assert!((a[0] + b[0]).abs() < 1e-8, "{} vs {}", a[0], b[0]),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn one_step_is_odd_too(seed in 0u64..1000) {
        // Y = e^{θz}x is unchanged by (θ, z) → (−θ, −z), so the whole estimator flips sign
        let (_, data) = flagship_data(Variant::UnknownHMeanZero, 120, seed);
        let opts = EstimatorOptions::default();
        let a = one_step_split(&data, EstimationTarget::UnknownHMeanZero, &opts);
        let b = one_step_split(&data.negate_covariates(), EstimationTarget::UnknownHMeanZero, &opts);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.theta_hat[0] + b.theta_hat[0]).abs() < 1e-8);
            prop_assert!((a.info_hat[(0, 0)] - b.info_hat[(0, 0)]).abs() < 1e-8 * a.info_hat[(0, 0)]);
        }
    }

    #[test]
    fn estimated_information_is_symmetric_psd(seed in 0u64..1000, n in 40usize..300, known in any::<bool>()) {
        let cov = CovariateModel::gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.4], vec![0.4, 2.0]]).unwrap();
        let variant = if known { Variant::KnownH } else { Variant::UnknownHMeanZero };
        let spec = ModelSpec::new(
            RegressionParam::new(vec![0.4, -0.2]).unwrap(),
            BaselineModel::gamma(2.5, 1.0).unwrap(),
            cov,
            variant,
        )
        .unwrap();
        let data = sample_direct(&spec, n, SeedSpec::new(seed, 0)).unwrap();
        if let Ok(r) = one_step_plugin(&data, target(&spec), &EstimatorOptions::default()) {
            let i = &r.info_hat;
            prop_assert!((i - i.transpose()).amax() <= 1e-12 * i.amax());
            prop_assert!(i.clone().symmetric_eigenvalues().min() >= -1e-12 * i.amax());
            prop_assert!(r.stderr.iter().all(|s| *s > 0.0 && s.is_finite()));
        }
    }
}

#[test]
fn zero_hazard_makes_known_h_information_singular() {
    let (spec, data) = flagship_data(Variant::KnownH, 200, 1);
    for scheme in [Scheme::Split, Scheme::Plugin] {
        let err =
            one_step_with_hazard(&data, target(&spec), scheme, &EstimatorOptions::default(), &ZeroHazard).unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err}");
    }
}

#[test]
fn no_correction_at_score_roots() {
    // every z equals E Z at θ̃ = 0.5, so −(z − E Z)·yλ̂(y) vanishes identically
    let recs: Vec<Observation> = (1..=40).map(|i| Observation { x: 0.1 * i as f64, z: vec![-0.5] }).collect();
    let data = Dataset::new(recs, None).unwrap();
    let cov = CovariateModel::standard_normal(1);
    let opts = EstimatorOptions::default();
    let truth = TrueHazard::new(BaselineModel::exponential(1.0).unwrap());
    for scheme in [Scheme::Split, Scheme::Plugin] {
        let r = one_step_with_hazard(&data, EstimationTarget::KnownH(&cov), scheme, &opts, &truth).unwrap();
        assert_eq!(r.theta_hat, r.theta_prelim);
        assert!((r.theta_prelim[0] - 0.5).abs() < 1e-12);
    }
    let r = one_step_split(&data, EstimationTarget::KnownH(&cov), &opts).unwrap();
    assert_eq!(r.theta_hat, r.theta_prelim);
}

#[test]
fn plugin_step_is_the_mean_influence() {
    for variant in [Variant::KnownH, Variant::UnknownHMeanZero] {
        let (spec, data) = flagship_data(variant, 800, 2);
        let opts = EstimatorOptions::default();
        let r = one_step_plugin(&data, target(&spec), &opts).unwrap();
        let (step, info) = mean_influence(&r.theta_prelim, &data, &data, target(&spec), &opts).unwrap();
        assert!((r.theta_hat[0] - r.theta_prelim[0] - step[0]).abs() < 1e-12);
        assert!((r.info_hat[(0, 0)] - info[(0, 0)]).abs() < 1e-12);
    }
}

#[test]
fn true_scores_have_mean_zero() {
    let n = 100_000;
    let (spec, data) = flagship_data(Variant::UnknownHMeanZero, n, 3);
    let truth = TrueHazard::new(spec.baseline.clone());
    let theta = spec.theta.as_slice();
    let moments = tilted_moments(&spec.covariates, theta).unwrap();
    let mut known = DVector::zeros(1);
    for o in data.records() {
        known += efficient_score_known_h(theta, &moments, &truth, o).unwrap();
    }
    let info = fisher_for(&ModelSpec::flagship(Variant::KnownH), UnknownHScore::Orthogonal).unwrap().info;
    assert!((known / n as f64).norm() <= 4.0 * (info.trace() / n as f64).sqrt());
    for form in [UnknownHScore::Orthogonal, UnknownHScore::PlusOne] {
        let mut sum = DVector::zeros(1);
        for o in data.records() {
            sum += efficient_score_unknown_h(theta, &moments, &truth, o, form).unwrap();
        }
        let info = fisher_for(&spec, form).unwrap().info;
        let mean = sum.norm() / n as f64;
        assert!(mean <= 4.0 * (info.trace() / n as f64).sqrt(), "{form:?}: {mean}");
    }
}

#[test]
fn published_form_information_at_ten_thousand() {
    let (spec, data) = flagship_data(Variant::UnknownHMeanZero, 10_000, 4);
    let opts = EstimatorOptions { score_form: UnknownHScore::PlusOne, ..EstimatorOptions::default() };
    let r = one_step_plugin(&data, target(&spec), &opts).unwrap();
    let i = r.info_hat[(0, 0)];
    assert!((i / 5.6230 - 1.0).abs() < 0.15, "{i}");
}

#[test]
fn fisher_estimates_converge() {
    for variant in [Variant::KnownH, Variant::UnknownHMeanZero] {
        let spec = ModelSpec::flagship(variant);
        let truth = fisher_for(&spec, UnknownHScore::Orthogonal).unwrap().info[(0, 0)];
        let spread = |n: usize| {
            let mut dev: Vec<f64> = (0..20u64)
                .map(|s| {
                    let data = sample_direct(&spec, n, SeedSpec::new(500 + s, 0)).unwrap();
                    let r = one_step_plugin(&data, target(&spec), &EstimatorOptions::default()).unwrap();
                    (r.info_hat[(0, 0)] - truth).abs()
                })
                .collect();
            median(&mut dev)
        };
        let (small, large) = (spread(1_000), spread(16_000));
        assert!(large < small, "{variant:?}: {small} → {large}");
    }
}

#[test]
fn plugin_and_split_agree_to_root_n() {
    let spec = ModelSpec::flagship(Variant::KnownH);
    let n = 2_000;
    let opts = EstimatorOptions::default();
    let close = (0..200u64)
        .filter(|&s| {
            let data = sample_direct(&spec, n, SeedSpec::new(s, 7)).unwrap();
            let a = one_step_split(&data, target(&spec), &opts).unwrap();
            let b = one_step_plugin(&data, target(&spec), &opts).unwrap();
            (a.theta_hat[0] - b.theta_hat[0]).abs() <= 5.0 / (n as f64).sqrt()
        })
        .count();
    assert!(close >= 190, "{close}/200");
}

#[test]
fn deterministic_given_data_and_seed() {
    let (spec, data) = flagship_data(Variant::UnknownHMeanZero, 600, 5);
    let sym = |seed: u64| EstimatorOptions {
        method: HazardMethod::Symmetrized,
        sign_seed: SeedSpec::new(seed, 0),
        ..EstimatorOptions::default()
    };
    let a = one_step_split(&data, target(&spec), &sym(1)).unwrap();
    let b = one_step_split(&data, target(&spec), &sym(1)).unwrap();
    assert_eq!(a, b);
    let c = one_step_split(&data, target(&spec), &sym(2)).unwrap();
    assert_ne!(a.theta_hat, c.theta_hat);
    assert_eq!(a.diagnostics.hazard.len(), 2);
    assert!(a.diagnostics.hazard.iter().all(|m| m.sign_seed.is_some()));
}
