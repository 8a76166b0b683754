//! Regularity conditions of the model.
//!
//! * C1: `E_g V < ∞`
//! * C2: `∫ v² g²(v)/Ḡ(v) dv < ∞`
//! * C3: `Σ_W` exists and is nonsingular
//! * C4: `E_h e^{-θᵀW} < ∞`
//! * C5: `E_h |W|² e^{-θᵀW} < ∞`
//! * H1 (unknown-h only): `E_h W = 0`
//! * H2 (unknown-h only): `E_h |W|² e^{θᵀW} < ∞`

use serde::Serialize;

use super::baseline::BaselineKind;
use super::{ModelSpec, Variant};
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::quad::Quadrature;

/// Per-coordinate tolerance for the mean-zero restriction.
pub const MEAN_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub description: String,
    /// The evaluated quantity (infinite or NaN when it could not be computed).
    pub quantity: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, condition: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }

    /// The first failed condition as an error.
    pub fn into_result(self) -> Result<()> {
        match self.checks.into_iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(Error::ConditionViolated {
                detail: c.detail.unwrap_or_else(|| format!("{} = {}", c.description, c.quantity)),
                condition: c.condition,
            }),
        }
    }
}

fn finite_check(condition: &str, description: &str, value: Result<f64>) -> ConditionCheck {
    match value {
        Ok(v) if v.is_finite() => ConditionCheck {
            condition: condition.into(),
            description: description.into(),
            quantity: v,
            passed: true,
            detail: None,
        },
        Ok(v) => ConditionCheck {
            condition: condition.into(),
            description: description.into(),
            quantity: v,
            passed: false,
            detail: Some(format!("{description} diverges")),
        },
        Err(e) => ConditionCheck {
            condition: condition.into(),
            description: description.into(),
            quantity: f64::NAN,
            passed: false,
            detail: Some(e.to_string()),
        },
    }
}

/// Evaluate every condition that applies to the spec's variant.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let b = &spec.baseline;
    let cov = &spec.covariates;
    let mut checks = Vec::new();

    checks.push(finite_check("C1", "E_g V", Ok(b.mean_v())));

    let c2 = match b.kind() {
        BaselineKind::Gamma { .. } => {
            b.integrate(&Quadrature::default(), |v| v * v * b.density_times_hazard(v), "∫ v² g(v)²/Ḡ(v) dv")
        }
        _ => Ok(b.c2_integral()),
    };
    checks.push(finite_check("C2", "∫ v² g(v)²/Ḡ(v) dv", c2));

    let sigma = cov.covariance();
    checks.push(match &sigma {
        Ok(s) => {
            let ev = min_eigenvalue(s);
            ConditionCheck {
                condition: "C3".into(),
                description: "smallest eigenvalue of Σ_W".into(),
                quantity: ev,
                passed: ev > 0.0 && ev.is_finite(),
                detail: (!(ev > 0.0)).then(|| "Σ_W is singular".to_string()),
            }
        }
        Err(e) => ConditionCheck {
            condition: "C3".into(),
            description: "smallest eigenvalue of Σ_W".into(),
            quantity: f64::NAN,
            passed: false,
            detail: Some(e.to_string()),
        },
    });

    let down = cov.exp_moments(&spec.theta.negated());
    checks.push(finite_check("C4", "E_h e^(-θ'W)", down.as_ref().map(|m| m.m0).map_err(Clone::clone)));
    checks.push(finite_check("C5", "E_h |W|² e^(-θ'W)", down.map(|m| m.m2.trace())));

    if spec.variant == Variant::UnknownHMeanZero {
        let mean = cov.mean();
        let worst = mean.amax();
        checks.push(ConditionCheck {
            condition: "H1".into(),
            description: "max_j |E_h W_j|".into(),
            quantity: worst,
            passed: worst <= MEAN_ZERO_TOL,
            detail: (worst > MEAN_ZERO_TOL).then(|| format!("E_h W = {:?} is not zero", mean.as_slice())),
        });
        let up = cov.exp_moments(spec.theta.as_slice()).map(|m| m.m2.trace());
        checks.push(finite_check("H2", "E_h |W|² e^(θ'W)", up));
    }

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { checks, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BaselineModel, CovariateModel, RegressionParam, ScalarLaw};
    use approx::assert_relative_eq;

    #[test]
    fn flagship_passes_every_condition() {
        let spec = ModelSpec::flagship(Variant::KnownH);
        let r = validate_model(&spec);
        assert!(r.passed);
        assert_eq!(r.checks.len(), 5);
        let q = Quadrature::high_precision();
        // C1 and C2 by direct quadrature of their defining integrals
        let ev = q.integrate_to_infinity(|v| v * (-v).exp(), 0.0, 1.0).unwrap().value;
        assert_relative_eq!(r.check("C1").unwrap().quantity, ev, max_relative = 1e-10);
        let c2 = q.integrate_to_infinity(|v| v * v * (-v).exp(), 0.0, 1.0).unwrap().value;
        assert_relative_eq!(r.check("C2").unwrap().quantity, c2, max_relative = 1e-10);
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let c4 = q.integrate(|z| (-0.5 * z).exp() * phi(z), -40.0, 40.0).unwrap().value;
        assert_relative_eq!(r.check("C4").unwrap().quantity, c4, max_relative = 1e-10);
        let c5 = q.integrate(|z| z * z * (-0.5 * z).exp() * phi(z), -40.0, 40.0).unwrap().value;
        assert_relative_eq!(r.check("C5").unwrap().quantity, c5, max_relative = 1e-10);
        assert_relative_eq!(r.check("C3").unwrap().quantity, 1.0);
    }

    #[test]
    fn pareto_table_fails_c1() {
        let b = BaselineModel::tabulate_log_spaced(|v| v.powi(-2), 1.0, 1e3, 200, false).unwrap();
        let spec = ModelSpec::new(RegressionParam::scalar(0.5), b, CovariateModel::standard_normal(1), Variant::KnownH)
            .unwrap();
        let r = validate_model(&spec);
        assert!(!r.passed);
        let c1 = r.check("C1").unwrap();
        assert!(!c1.passed);
        assert_eq!(c1.quantity, f64::INFINITY);
        assert!(matches!(r.into_result(), Err(Error::ConditionViolated { condition, .. }) if condition == "C1"));
    }

    #[test]
    fn single_point_covariate_fails_c3() {
        let spec = ModelSpec::new(
            RegressionParam::scalar(0.5),
            BaselineModel::exponential(1.0).unwrap(),
            CovariateModel::discrete(vec![vec![1.0]], vec![1.0]).unwrap(),
            Variant::KnownH,
        )
        .unwrap();
        let r = validate_model(&spec);
        let c3 = r.check("C3").unwrap();
        assert!(!c3.passed);
        assert_eq!(c3.quantity, 0.0);
        assert!(r.check("C1").unwrap().passed);
    }

    #[test]
    fn mean_zero_restriction() {
        let mut spec = ModelSpec::flagship(Variant::UnknownHMeanZero);
        let r = validate_model(&spec);
        assert!(r.passed);
        assert_eq!(r.checks.len(), 7);
        assert_relative_eq!(r.check("H2").unwrap().quantity, 1.25 * 0.125f64.exp(), max_relative = 1e-12);
        spec.covariates = CovariateModel::gaussian(vec![0.1], vec![vec![1.0]]).unwrap();
        assert!(!validate_model(&spec).check("H1").unwrap().passed);
    }

    #[test]
    fn divergent_laplace_tilt_fails_c4() {
        let spec = ModelSpec::new(
            RegressionParam::scalar(1.5),
            BaselineModel::exponential(1.0).unwrap(),
            CovariateModel::product(vec![ScalarLaw::Laplace { location: 0.0, scale: 1.0 }]).unwrap(),
            Variant::KnownH,
        )
        .unwrap();
        let r = validate_model(&spec);
        assert!(!r.check("C4").unwrap().passed);
        assert!(!r.check("C5").unwrap().passed);
    }
}
