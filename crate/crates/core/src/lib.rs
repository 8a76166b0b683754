//! Efficient estimation of the regression parameter in the accelerated
//! failure time model `T = e^{-θᵀW} V` from cross-sectionally sampled data.
//!
//! Observed records are `(X, Z)` with `X = U·T`, where `T` is length biased
//! and `U` is uniform. The pseudo-response `Y = e^{θᵀZ} X` has density
//! `Ḡ/E V` whatever the covariates, which the estimators here exploit.

// `!(x <= bound)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod hazard;
pub mod information;
pub mod io;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod study;

pub use error::{Error, Result};
pub use estimators::{
    one_step_plugin, one_step_split, preliminary_estimate, EstimationResult, EstimationTarget, EstimatorOptions, Scheme,
};
pub use hazard::{estimate_hazard, estimate_hazard_symmetrized, HazardFit, HazardMethod, HazardOptions};
pub use information::{fisher_for, fisher_known_h, fisher_unknown_h, InformationBound, TiltedMoments, UnknownHScore};
pub use model::{
    validate_model, BaselineModel, CovariateModel, Dataset, ModelSpec, Observation, RegressionParam, Variant,
};
pub use rng::SeedSpec;
pub use sampler::{sample_direct, sample_mechanistic, simulate, SamplerKind};
pub use study::{run_study, StudyConfig, StudyReport};
