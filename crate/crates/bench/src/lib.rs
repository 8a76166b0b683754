//! Shared fixtures for the benchmarks in `benches/`.

use aft_xsect_core::model::pseudo_responses;
use aft_xsect_core::{sample_direct, Dataset, ModelSpec, SeedSpec, Variant};

/// A flagship dataset (Exp(1) baseline, N(0,1) covariate, θ = 0.5).
pub fn flagship_data(variant: Variant, n: usize, seed: u64) -> (ModelSpec, Dataset) {
    let spec = ModelSpec::flagship(variant);
    let data = sample_direct(&spec, n, SeedSpec::new(seed, 0)).expect("flagship spec is valid");
    (spec, data)
}

/// Pseudo-responses of a flagship dataset at the true θ.
pub fn flagship_responses(n: usize, seed: u64) -> Vec<f64> {
    let (spec, data) = flagship_data(Variant::KnownH, n, seed);
    pseudo_responses(&spec.theta, &data).expect("positive times")
}
