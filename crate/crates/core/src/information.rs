//! Population information bounds and tilted covariate moments.
//!
//! With `N = E_h e^{-θᵀW}` the observed covariate `Z` has density
//! `e^{-θᵀz} h(z)/N`, so every moment of `Z` is a moment of `W` under an
//! exponential tilt:
//!
//! * `E Z = E_h W e^{-θᵀW} / N`, `E ZZᵀ = E_h WWᵀ e^{-θᵀW} / N`
//! * `M₁ = E ZZᵀ e^{θᵀZ} = E_h WWᵀ / N`
//! * `M₂ = E ZZᵀ e^{2θᵀZ} = E_h WWᵀ e^{θᵀW} / N`

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::{HazardScore, TrueHazard};
use crate::linalg::{self, checked_inverse, serde_rows, serde_vec};
use crate::model::validate::MEAN_ZERO_TOL;
use crate::model::{BaselineKind, BaselineModel, CovariateModel, ModelSpec, Variant};

/// Moments of the observed covariate `Z` at a given θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltedMoments {
    #[serde(with = "serde_vec")]
    pub e_z: DVector<f64>,
    #[serde(with = "serde_rows")]
    pub sigma_z: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub m1: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub m2: DMatrix<f64>,
    /// `E_h e^{-θᵀW}`.
    pub norm_const: f64,
}

impl TiltedMoments {
    /// Sample analogues: `Z̄`, `S_Z²` (divisor n), `M̂₁`, `M̂₂`; the
    /// normalizer is estimated by `1 / mean e^{θᵀZ}`.
    pub fn from_sample(zs: &[Vec<f64>], theta: &[f64]) -> Result<Self> {
        if zs.is_empty() {
            return Err(Error::InvalidInput("no covariates to average".into()));
        }
        let k = theta.len();
        let n = zs.len() as f64;
        let mut e_z = DVector::zeros(k);
        let mut second = DMatrix::zeros(k, k);
        let mut m1 = DMatrix::zeros(k, k);
        let mut m2 = DMatrix::zeros(k, k);
        let mut tilt = 0.0;
        for z in zs {
            let zv = DVector::from_column_slice(z);
            let e = zv.dot(&DVector::from_column_slice(theta)).exp();
            let outer = &zv * zv.transpose();
            e_z += &zv;
            second += &outer;
            m1 += &outer * e;
            m2 += &outer * (e * e);
            tilt += e;
        }
        e_z /= n;
        let sigma_z = second / n - &e_z * e_z.transpose();
        let out = Self { e_z, sigma_z, m1: m1 / n, m2: m2 / n, norm_const: n / tilt };
        if out.m2.iter().chain(out.m1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Overflow { record: 0 });
        }
        Ok(out)
    }

    /// `M₁ M₂⁻¹ M₁`.
    pub fn restriction_term(&self) -> Result<DMatrix<f64>> {
        let inv = checked_inverse(&self.m2, "M₂")?;
        Ok(linalg::symmetrize(&(&self.m1 * inv * &self.m1)))
    }
}

/// `E Z` and `Σ_Z` under the known law `h` at θ.
pub fn tilted_mean_cov(cov: &CovariateModel, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    let down = cov
        .exp_moments(&neg)
        .map_err(|e| Error::ConditionViolated { condition: "C4".into(), detail: e.to_string() })?;
    let norm = down.m0;
    if !(norm.is_finite() && norm > 0.0) || down.m2.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConditionViolated {
            condition: "C5".into(),
            detail: format!("tilted moments of h at theta = {theta:?} are not finite"),
        });
    }
    let e_z = &down.m1 / norm;
    let sigma = linalg::symmetrize(&(&down.m2 / norm - &e_z * e_z.transpose()));
    Ok((e_z, sigma, norm))
}

/// Population [`TiltedMoments`] of the observed covariate at θ.
pub fn tilted_moments(cov: &CovariateModel, theta: &[f64]) -> Result<TiltedMoments> {
    let (e_z, sigma_z, norm) = tilted_mean_cov(cov, theta)?;
    let plain = cov.exp_moments(&vec![0.0; theta.len()])?;
    let up = cov
        .exp_moments(theta)
        .map_err(|e| Error::ConditionViolated { condition: "H2".into(), detail: e.to_string() })?;
    if up.m2.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConditionViolated {
            condition: "H2".into(),
            detail: "E_h WWᵀ e^(θ'W) is not finite".into(),
        });
    }
    Ok(TiltedMoments { e_z, sigma_z, m1: plain.m2 / norm, m2: up.m2 / norm, norm_const: norm })
}

/// `E Yλ(Y)`, `E(Yλ(Y))²`, `E(1 + Yλ(Y))²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YLambdaMoments {
    pub m1: f64,
    pub m2: f64,
    pub m2p: f64,
}

/// `m1` always comes from quadrature; `m2` is exact where `Yλ(Y)` has a
/// closed form (`k (y/s)^k` for Weibull, so `E(Yλ)² = k + 1`).
pub fn expected_ylambda_moments(baseline: &BaselineModel) -> Result<YLambdaMoments> {
    let truth = TrueHazard::new(baseline.clone());
    let m1 = truth.expect(&|s| s)?;
    let m2 = match *baseline.kind() {
        BaselineKind::Exponential { .. } => 2.0,
        BaselineKind::Weibull { shape, .. } => shape + 1.0,
        _ => truth.i1()?,
    };
    Ok(YLambdaMoments { m1, m2, m2p: 1.0 + 2.0 * m1 + m2 })
}

/// Form of the efficient score for θ when `h` is only known to have mean zero.
///
/// `Orthogonal`: `l* = −(Z − EZ)(Yλ(Y) − 1) − M₁M₂⁻¹ Z e^{θᵀZ}`, with
/// information `Σ_Z E(Yλ − 1)² + M₁M₂⁻¹M₁`. This is the score for θ with
/// its projections on both nuisance tangent spaces removed; its second
/// moment equals its information.
///
/// `PlusOne`: `l* = −(Z − EZ)(1 + Yλ(Y)) + M₁M₂⁻¹ Z e^{θᵀZ}` with stated
/// information `Σ_Z E(1 + Yλ)² + M₁M₂⁻¹M₁`. The conditional score
/// `E(l̇ | Z)` equals `−(Z − EZ)`; this form takes it as `+(Z − EZ)`, so the
/// two signs differ from `Orthogonal`. Kept for comparison; its stated
/// information exceeds the known-h information, and its second moment is not
/// the stated value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownHScore {
    #[default]
    Orthogonal,
    PlusOne,
}

impl UnknownHScore {
    /// The scalar factor multiplying `−(Z − EZ)` given `s = yλ(y)`.
    pub fn hazard_factor(self, s: f64) -> f64 {
        match self {
            UnknownHScore::Orthogonal => s - 1.0,
            UnknownHScore::PlusOne => 1.0 + s,
        }
    }

    /// Sign of the `M₁M₂⁻¹ Z e^{θᵀZ}` term.
    pub fn restriction_sign(self) -> f64 {
        match self {
            UnknownHScore::Orthogonal => -1.0,
            UnknownHScore::PlusOne => 1.0,
        }
    }

    /// `E(hazard_factor(Yλ))²` from the moments of `Yλ`.
    pub fn hazard_second_moment(self, m: &YLambdaMoments) -> f64 {
        match self {
            UnknownHScore::Orthogonal => m.m2 - 2.0 * m.m1 + 1.0,
            UnknownHScore::PlusOne => m.m2p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationBound {
    #[serde(with = "serde_rows")]
    pub info: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub bound: DMatrix<f64>,
    pub variant: Variant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_form: Option<UnknownHScore>,
    pub condition_number: f64,
}

impl InformationBound {
    fn new(info: DMatrix<f64>, variant: Variant, score_form: Option<UnknownHScore>) -> Result<Self> {
        let info = linalg::symmetrize(&info);
        let bound = checked_inverse(&info, "information matrix")?;
        Ok(Self { condition_number: linalg::condition_number(&info), info, bound, variant, score_form })
    }
}

/// `I = Σ_Z E(Yλ(Y))²` for known `h`.
pub fn fisher_known_h(spec: &ModelSpec) -> Result<InformationBound> {
    let (_, sigma_z, _) = tilted_mean_cov(&spec.covariates, spec.theta.as_slice())?;
    checked_inverse(&sigma_z, "Σ_Z").map_err(|e| Error::ConditionViolated {
        condition: "C3".into(),
        detail: format!("covariance of Z is singular: {e}"),
    })?;
    let m = expected_ylambda_moments(&spec.baseline)?;
    InformationBound::new(sigma_z * m.m2, Variant::KnownH, None)
}

/// Information for θ when `h` is unknown with mean zero.
pub fn fisher_unknown_h(spec: &ModelSpec, form: UnknownHScore) -> Result<InformationBound> {
    let mean = spec.covariates.mean();
    if mean.amax() > MEAN_ZERO_TOL {
        return Err(Error::ConditionViolated {
            condition: "H1".into(),
            detail: format!("E_h W = {:?} is not zero", mean.as_slice()),
        });
    }
    let t = tilted_moments(&spec.covariates, spec.theta.as_slice())?;
    let m = expected_ylambda_moments(&spec.baseline)?;
    let info = &t.sigma_z * form.hazard_second_moment(&m) + t.restriction_term()?;
    InformationBound::new(info, Variant::UnknownHMeanZero, Some(form))
}

/// The bound appropriate to `spec.variant` (unknown-h uses `form`).
pub fn fisher_for(spec: &ModelSpec, form: UnknownHScore) -> Result<InformationBound> {
    match spec.variant {
        Variant::KnownH => fisher_known_h(spec),
        Variant::UnknownHMeanZero => fisher_unknown_h(spec, form),
    }
}
