//! Model objects: the AFT model under cross-sectional sampling.
//!
//! A survival time is `T = e^{-θᵀW} V` with `W ~ h` and `V ~ G` independent.
//! Sampling an individual alive at a fixed instant selects `(T, W)` with
//! probability proportional to `T` and observes `X = U·T`, `U ~ Uniform(0, 1]`.
//! The pseudo-response `Y = e^{θᵀZ} X` then has density `Ḡ(y)/E V` and is
//! independent of `Z`.

pub mod baseline;
pub mod covariates;
pub mod validate;

use serde::{Deserialize, Serialize};

pub use baseline::{BaselineKind, BaselineModel};
pub use covariates::{CovariateKind, CovariateModel, ExpMoments, ScalarLaw};
pub use validate::{validate_model, ConditionCheck, ValidationReport};

use crate::error::{Error, Result};
use crate::rng::SeedSpec;

/// The regression parameter θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RegressionParam(Vec<f64>);

impl RegressionParam {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidModel("theta must have at least one coordinate".into()));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidModel("theta entries must be finite".into()));
        }
        Ok(Self(theta))
    }

    pub fn scalar(theta: f64) -> Self {
        Self::new(vec![theta]).expect("finite scalar")
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, z: &[f64]) -> f64 {
        self.0.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    pub fn negated(&self) -> Vec<f64> {
        self.0.iter().map(|t| -t).collect()
    }
}

impl TryFrom<Vec<f64>> for RegressionParam {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RegressionParam> for Vec<f64> {
    fn from(p: RegressionParam) -> Self {
        p.0
    }
}

/// Which nuisance model the covariate law belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Variant {
    /// `h` known.
    #[default]
    #[serde(rename = "known-h")]
    KnownH,
    /// `h` unknown but mean zero.
    #[serde(rename = "unknown-h", alias = "unknown-h-mean-zero")]
    UnknownHMeanZero,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known-h" => Ok(Variant::KnownH),
            "unknown-h" | "unknown-h-mean-zero" => Ok(Variant::UnknownHMeanZero),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?} (expected known-h or unknown-h)"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::KnownH => "known-h",
            Variant::UnknownHMeanZero => "unknown-h",
        })
    }
}

#[derive(Deserialize)]
struct RawSpec {
    theta: RegressionParam,
    baseline: BaselineModel,
    covariates: CovariateModel,
    #[serde(default)]
    variant: Variant,
}

/// A point `(θ, G, h)` of the model together with the nuisance variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ModelSpec {
    pub theta: RegressionParam,
    pub baseline: BaselineModel,
    pub covariates: CovariateModel,
    pub variant: Variant,
}

impl TryFrom<RawSpec> for ModelSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        Self::new(r.theta, r.baseline, r.covariates, r.variant)
    }
}

impl ModelSpec {
    pub fn new(
        theta: RegressionParam,
        baseline: BaselineModel,
        covariates: CovariateModel,
        variant: Variant,
    ) -> Result<Self> {
        if theta.dim() != covariates.dim() {
            return Err(Error::InvalidModel(format!(
                "theta has {} coordinates but covariates have dimension {}",
                theta.dim(),
                covariates.dim()
            )));
        }
        Ok(Self { theta, baseline, covariates, variant })
    }

    /// Exp(1) baseline, N(0,1) covariate, θ = 0.5.
    pub fn flagship(variant: Variant) -> Self {
        Self::new(
            RegressionParam::scalar(0.5),
            BaselineModel::exponential(1.0).expect("valid"),
            CovariateModel::standard_normal(1),
            variant,
        )
        .expect("valid")
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model specs serialize")
    }

    /// `E_h e^{-θᵀW}`.
    pub fn tilt_normalizer(&self) -> Result<f64> {
        Ok(self.covariates.exp_moments(&self.theta.negated())?.m0)
    }
}

/// One observed record `(X, Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub z: Vec<f64>,
}

/// An ordered sample plus the seed that generated it, if simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<SeedSpec>,
}

impl Dataset {
    pub fn new(records: Vec<Observation>, seed: Option<SeedSpec>) -> Result<Self> {
        let k = records.first().map(|r| r.z.len()).ok_or_else(|| Error::InvalidInput("dataset is empty".into()))?;
        if k == 0 {
            return Err(Error::InvalidInput("records need at least one covariate".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if !(r.x > 0.0 && r.x.is_finite()) {
                return Err(Error::Parse {
                    row: Some(i + 1),
                    message: format!("survival time must be positive and finite, got {}", r.x),
                });
            }
            if r.z.len() != k {
                return Err(Error::Parse {
                    row: Some(i + 1),
                    message: format!("expected {k} covariates, got {}", r.z.len()),
                });
            }
            if r.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse { row: Some(i + 1), message: "covariates must be finite".into() });
            }
        }
        Ok(Self { records, seed })
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.records[0].z.len()
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    /// The sub-sample at the given indices.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(idx.iter().map(|&i| self.records[i].clone()).collect(), None)
    }

    /// Records with every covariate vector negated.
    pub fn negate_covariates(&self) -> Self {
        let records =
            self.records.iter().map(|r| Observation { x: r.x, z: r.z.iter().map(|v| -v).collect() }).collect();
        Self { records, seed: self.seed }
    }
}

/// `y = e^{θᵀz} x`.
pub fn pseudo_response(theta: &RegressionParam, obs: &Observation) -> Result<f64> {
    pseudo_response_at(theta, obs, 0)
}

fn pseudo_response_at(theta: &RegressionParam, obs: &Observation, record: usize) -> Result<f64> {
    if !(obs.x > 0.0) {
        return Err(Error::InvalidInput(format!("record {record}: x must be positive")));
    }
    let scale = theta.dot(&obs.z).exp();
    let y = scale * obs.x;
    if !scale.is_finite() || !y.is_finite() {
        return Err(Error::Overflow { record });
    }
    Ok(y)
}

/// Pseudo-responses for a whole dataset; overflow names the record index.
pub fn pseudo_responses(theta: &RegressionParam, data: &Dataset) -> Result<Vec<f64>> {
    data.records.iter().enumerate().map(|(i, r)| pseudo_response_at(theta, r, i)).collect()
}

/// `g_Y(y) = Ḡ(y) / E_g V`, zero for `y < 0`.
pub fn density_gy(baseline: &BaselineModel, y: f64) -> f64 {
    if y < 0.0 {
        0.0
    } else {
        baseline.survival(y) / baseline.mean_v()
    }
}

/// `f_θ(x, z) = Ḡ(e^{θᵀz} x) h(z) / (E_g V · E_h e^{-θᵀW})`.
pub fn joint_density(spec: &ModelSpec, x: f64, z: &[f64]) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let h = spec.covariates.density(z);
    if h == 0.0 {
        return Ok(0.0);
    }
    let y = spec.theta.dot(z).exp() * x;
    Ok(spec.baseline.survival(y) * h / (spec.baseline.mean_v() * spec.tilt_normalizer()?))
}

/// `f_{θ,Z}(z) = e^{-θᵀz} h(z) / E_h e^{-θᵀW}`.
pub fn covariate_density(spec: &ModelSpec, z: &[f64]) -> Result<f64> {
    let h = spec.covariates.density(z);
    if h == 0.0 {
        return Ok(0.0);
    }
    Ok((-spec.theta.dot(z)).exp() * h / spec.tilt_normalizer()?)
}

/// `f_θ(x | z) = e^{θᵀz} Ḡ(e^{θᵀz} x) / E_g V`.
pub fn conditional_density(spec: &ModelSpec, x: f64, z: &[f64]) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let s = spec.theta.dot(z).exp();
    s * spec.baseline.survival(s * x) / spec.baseline.mean_v()
}

/// `λ(y) = g(y) / Ḡ(y)`.
pub fn true_hazard(baseline: &BaselineModel, y: f64) -> Result<f64> {
    baseline.hazard(y)
}
