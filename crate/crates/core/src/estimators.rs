//! Preliminary and one-step efficient estimators of θ.
//!
//! A one-step estimator adds the average estimated efficient influence
//! function to a √n-consistent preliminary estimate `θ̃`:
//! `θ̂ = θ̃ + (1/n) Σ Î⁻¹ l̂*(θ̃; X_i, Z_i)`.
//!
//! With sample splitting the hazard (and, for unknown `h`, the covariate
//! moments) are fitted on one half and the correction averaged over the
//! other, then the roles are swapped and the two corrections averaged.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::{
    estimate_hazard, estimate_hazard_symmetrized, HazardMetadata, HazardMethod, HazardOptions, HazardScore,
};
use crate::information::{tilted_mean_cov, TiltedMoments, UnknownHScore};
use crate::linalg::{self, checked_inverse, serde_rows, MAX_CONDITION};
use crate::model::{pseudo_responses, CovariateModel, Dataset, Observation, RegressionParam, Variant};
use crate::rng::SeedSpec;

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 100;
/// Scalar fallback searches `θ ∈ [−BISECTION_RANGE, BISECTION_RANGE]`.
pub const BISECTION_RANGE: f64 = 20.0;
const MAX_HALVINGS: usize = 60;
const MIN_ONE_STEP_N: usize = 8;

/// What is known about the covariate law.
#[derive(Debug, Clone, Copy)]
pub enum EstimationTarget<'a> {
    KnownH(&'a CovariateModel),
    UnknownHMeanZero,
}

impl EstimationTarget<'_> {
    pub fn variant(&self) -> Variant {
        match self {
            EstimationTarget::KnownH(_) => Variant::KnownH,
            EstimationTarget::UnknownHMeanZero => Variant::UnknownHMeanZero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    pub hazard: HazardOptions,
    pub method: HazardMethod,
    pub score_form: UnknownHScore,
    /// Seed for the random signs of the symmetrized hazard estimator.
    pub sign_seed: SeedSpec,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            hazard: HazardOptions::default(),
            method: HazardMethod::Kernel,
            score_form: UnknownHScore::default(),
            sign_seed: SeedSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Even/odd halves, swap and average.
    Split,
    /// Nuisances fitted and the correction averaged on the full sample.
    Plugin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub variant: Variant,
    pub scheme: Scheme,
    pub newton_iterations: usize,
    pub hazard_method: HazardMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_form: Option<UnknownHScore>,
    /// One entry per hazard fit (two under splitting).
    pub hazard: Vec<HazardMetadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta_hat: Vec<f64>,
    pub theta_prelim: Vec<f64>,
    pub stderr: Vec<f64>,
    #[serde(with = "serde_rows")]
    pub info_hat: DMatrix<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug)]
struct NewtonOutcome {
    x: DVector<f64>,
    iterations: usize,
}

/// Damped Newton on `r(x) = 0` with merit `|r|²`; `eval` returns the
/// residual and Jacobian or an error at points where they are undefined.
fn newton(
    x0: DVector<f64>,
    eval: impl Fn(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
) -> Result<NewtonOutcome> {
    let mut x = x0;
    let (mut r, mut j) = eval(&x)?;
    let mut trace = vec![r.norm()];
    for iter in 0..NEWTON_MAX_ITER {
        if r.norm() <= NEWTON_TOL {
            return Ok(NewtonOutcome { x, iterations: iter });
        }
        let cond = linalg::condition_number(&j);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Singular(format!("Jacobian of the estimating equation (condition number {cond:e})")));
        }
        let step =
            j.clone().lu().solve(&r).ok_or_else(|| Error::Singular("Jacobian of the estimating equation".into()))?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &x - &step * scale;
            if let Ok((rt, jt)) = eval(&trial) {
                if rt.iter().all(|v| v.is_finite()) && rt.norm() < r.norm() {
                    accepted = Some((trial, rt, jt));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((xn, rn, jn)) => {
                x = xn;
                r = rn;
                j = jn;
                trace.push(r.norm());
            }
            None => return Err(Error::Divergence { iterations: iter, residual: r.norm(), trace }),
        }
    }
    if r.norm() <= NEWTON_TOL {
        return Ok(NewtonOutcome { x, iterations: NEWTON_MAX_ITER });
    }
    Err(Error::Divergence { iterations: NEWTON_MAX_ITER, residual: r.norm(), trace })
}

/// Root of a monotone scalar function on `[lo, hi]`; `None` without a sign change.
fn bisect(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<Option<(f64, usize)>> {
    let (mut a, mut b) = (lo, hi);
    let fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(Some((a, 0)));
    }
    if fb == 0.0 {
        return Ok(Some((b, 0)));
    }
    if fa.signum() == fb.signum() {
        return Ok(None);
    }
    let rising = fb > fa;
    let mut iterations = 0;
    while b - a > 1e-14 * (1.0 + a.abs().max(b.abs())) && iterations < 200 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        iterations += 1;
        if fm.abs() <= NEWTON_TOL {
            return Ok(Some((m, iterations)));
        }
        if (fm > 0.0) == rising {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(Some((0.5 * (a + b), iterations)))
}

fn covariate_mean(data: &Dataset) -> DVector<f64> {
    let k = data.dim();
    data.records().iter().fold(DVector::zeros(k), |acc, r| acc + DVector::from_column_slice(&r.z)) / data.len() as f64
}

/// Preliminary θ̃ for known `h`: solve `E_θ Z = Z̄_n`, with iteration count.
fn preliminary_known_h_iter(data: &Dataset, cov: &CovariateModel) -> Result<(DVector<f64>, usize)> {
    let k = cov.dim();
    if data.dim() != k {
        return Err(Error::InvalidInput(format!("data have {} covariates, the covariate law has {k}", data.dim())));
    }
    let zbar = covariate_mean(data);
    for (j, (lo, hi)) in cov.coordinate_bounds().into_iter().enumerate() {
        if !(zbar[j] > lo && zbar[j] < hi) {
            return Err(Error::NoSolution(format!(
                "mean of covariate {j} ({}) is outside the open range ({lo}, {hi}) of E_θ Z",
                zbar[j]
            )));
        }
    }
    if let crate::model::CovariateKind::Gaussian { mean, cov: sigma } = cov.kind() {
        // E_θ Z = mean − Σθ
        let s = DMatrix::from_fn(k, k, |i, j| sigma[i][j]);
        let rhs = DVector::from_column_slice(mean) - &zbar;
        let inv = checked_inverse(&s, "Σ_W")?;
        return Ok((inv * rhs, 0));
    }
    let eval = |t: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (ez, sigma, _) = tilted_mean_cov(cov, t.as_slice())?;
        Ok((ez - &zbar, -sigma))
    };
    match newton(DVector::zeros(k), eval) {
        Ok(o) => Ok((o.x, o.iterations)),
        Err(e @ Error::Divergence { .. }) if k == 1 => {
            let f = |t: f64| eval(&DVector::from_element(1, t)).map(|(r, _)| r[0]);
            match bisect(f, -BISECTION_RANGE, BISECTION_RANGE)? {
                Some((t, it)) if t.abs() < BISECTION_RANGE => Ok((DVector::from_element(1, t), it)),
                _ => Err(Error::NoSolution(format!(
                    "E_θ Z = {} has no solution in [-{BISECTION_RANGE}, {BISECTION_RANGE}] ({e})",
                    zbar[0]
                ))),
            }
        }
        Err(e) => Err(e),
    }
}

/// Preliminary θ̃ for known `h`: the moment estimator solving `E_θ Z = Z̄_n`.
pub fn preliminary_known_h(data: &Dataset, cov: &CovariateModel) -> Result<Vec<f64>> {
    Ok(preliminary_known_h_iter(data, cov)?.0.as_slice().to_vec())
}

fn preliminary_unknown_h_iter(data: &Dataset) -> Result<(DVector<f64>, usize)> {
    let k = data.dim();
    for j in 0..k {
        let pos = data.records().iter().any(|r| r.z[j] > 0.0);
        let neg = data.records().iter().any(|r| r.z[j] < 0.0);
        if !(pos && neg) {
            return Err(Error::NoRoot { component: j });
        }
    }
    let n = data.len() as f64;
    let eval = |t: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut f = DVector::zeros(k);
        let mut jac = DMatrix::zeros(k, k);
        for r in data.records() {
            let z = DVector::from_column_slice(&r.z);
            let e = t.dot(&z).exp();
            f += &z * e;
            jac += &z * z.transpose() * e;
        }
        f /= n;
        jac /= n;
        if f.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Overflow { record: 0 });
        }
        Ok((f, jac))
    };
    match newton(DVector::zeros(k), eval) {
        Ok(o) => Ok((o.x, o.iterations)),
        Err(Error::Divergence { .. }) if k == 1 => {
            let f = |t: f64| eval(&DVector::from_element(1, t)).map(|(r, _)| r[0]);
            match bisect(f, -BISECTION_RANGE, BISECTION_RANGE)? {
                Some((t, it)) => Ok((DVector::from_element(1, t), it)),
                None => Err(Error::NoRoot { component: 0 }),
            }
        }
        Err(e) => Err(e),
    }
}

/// M-estimator for mean-zero `h`: the root of `(1/n) Σ Z_i e^{θᵀZ_i} = 0`.
pub fn preliminary_unknown_h(data: &Dataset) -> Result<Vec<f64>> {
    Ok(preliminary_unknown_h_iter(data)?.0.as_slice().to_vec())
}

fn pseudo(theta: &[f64], obs: &Observation) -> Result<f64> {
    let p = RegressionParam::new(theta.to_vec())?;
    crate::model::pseudo_response(&p, obs)
}

/// `−(z − E Z) · yλ̂(y)` with `y = e^{θᵀz} x`.
pub fn efficient_score_known_h(
    theta: &[f64],
    moments: &TiltedMoments,
    fit: &dyn HazardScore,
    obs: &Observation,
) -> Result<DVector<f64>> {
    let y = pseudo(theta, obs)?;
    Ok((DVector::from_column_slice(&obs.z) - &moments.e_z) * -fit.y_lambda(y))
}

/// `(Î₁ Σ_Z)⁻¹` times the known-h efficient score.
pub fn influence_known_h(
    theta: &[f64],
    moments: &TiltedMoments,
    fit: &dyn HazardScore,
    obs: &Observation,
) -> Result<DVector<f64>> {
    let info = &moments.sigma_z * fit.i1()?;
    let inv = checked_inverse(&info, "Î₁ Σ_Z")?;
    Ok(inv * efficient_score_known_h(theta, moments, fit, obs)?)
}

/// Efficient score for mean-zero `h` in the given form, with sample moments.
pub fn efficient_score_unknown_h(
    theta: &[f64],
    moments: &TiltedMoments,
    fit: &dyn HazardScore,
    obs: &Observation,
    form: UnknownHScore,
) -> Result<DVector<f64>> {
    let m2_inv = checked_inverse(&moments.m2, "M̂₂")?;
    let coef = &moments.m1 * m2_inv;
    unknown_h_score_with(theta, &moments.e_z, &coef, fit, obs, form)
}

fn unknown_h_score_with(
    theta: &[f64],
    e_z: &DVector<f64>,
    coef: &DMatrix<f64>,
    fit: &dyn HazardScore,
    obs: &Observation,
    form: UnknownHScore,
) -> Result<DVector<f64>> {
    let y = pseudo(theta, obs)?;
    let z = DVector::from_column_slice(&obs.z);
    let tilt: f64 = theta.iter().zip(&obs.z).map(|(a, b)| a * b).sum::<f64>().exp();
    let hazard_part = (&z - e_z) * -form.hazard_factor(fit.y_lambda(y));
    Ok(hazard_part + coef * &z * (form.restriction_sign() * tilt))
}

/// `Î = S_Z² Ê(factor)² + M̂₁M̂₂⁻¹M̂₁`, the expectation taken under `ĝ_Y`.
pub fn fisher_estimate_unknown_h(
    moments: &TiltedMoments,
    fit: &dyn HazardScore,
    form: UnknownHScore,
) -> Result<DMatrix<f64>> {
    let e2 = fit.expect(&|s| form.hazard_factor(s).powi(2))?;
    let info = &moments.sigma_z * e2 + moments.restriction_term()?;
    Ok(linalg::symmetrize(&info))
}

/// One nuisance fit applied to one evaluation set.
struct Correction {
    info: DMatrix<f64>,
    mean_influence: DVector<f64>,
}

type ScoreFn<'a> = Box<dyn Fn(&Observation) -> Result<DVector<f64>> + 'a>;

fn correction(
    theta: &[f64],
    fit_part: &Dataset,
    eval_part: &Dataset,
    target: EstimationTarget<'_>,
    hazard: &dyn HazardScore,
    form: UnknownHScore,
) -> Result<Correction> {
    let k = theta.len();
    let (info, score): (DMatrix<f64>, ScoreFn<'_>) = match target {
        EstimationTarget::KnownH(cov) => {
            let (e_z, sigma_z, _) = tilted_mean_cov(cov, theta)?;
            let info = &sigma_z * hazard.i1()?;
            let f = move |o: &Observation| -> Result<DVector<f64>> {
                let y = pseudo(theta, o)?;
                Ok((DVector::from_column_slice(&o.z) - &e_z) * -hazard.y_lambda(y))
            };
            (info, Box::new(f))
        }
        EstimationTarget::UnknownHMeanZero => {
            let zs: Vec<Vec<f64>> = fit_part.records().iter().map(|r| r.z.clone()).collect();
            let moments = TiltedMoments::from_sample(&zs, theta)?;
            let info = fisher_estimate_unknown_h(&moments, hazard, form)?;
            let coef = &moments.m1 * checked_inverse(&moments.m2, "M̂₂")?;
            let e_z = moments.e_z.clone();
            let f = move |o: &Observation| unknown_h_score_with(theta, &e_z, &coef, hazard, o, form);
            (info, Box::new(f))
        }
    };
    let inv = checked_inverse(&info, "estimated information")?;
    let mut total = DVector::zeros(k);
    for o in eval_part.records() {
        total += score(o)?;
    }
    Ok(Correction { mean_influence: inv * total / eval_part.len() as f64, info })
}

fn fit_hazard(data: &Dataset, theta: &[f64], opts: &EstimatorOptions, part: u64) -> Result<crate::hazard::HazardFit> {
    let ys = pseudo_responses(&RegressionParam::new(theta.to_vec())?, data)?;
    match opts.method {
        HazardMethod::Kernel => estimate_hazard(&ys, &opts.hazard),
        HazardMethod::Symmetrized => estimate_hazard_symmetrized(&ys, opts.sign_seed.child(part), &opts.hazard),
    }
}

/// The preliminary estimator θ̃ for the given target.
pub fn preliminary_estimate(data: &Dataset, target: EstimationTarget<'_>) -> Result<Vec<f64>> {
    Ok(preliminary(data, target)?.0.as_slice().to_vec())
}

fn preliminary(data: &Dataset, target: EstimationTarget<'_>) -> Result<(DVector<f64>, usize)> {
    match target {
        EstimationTarget::KnownH(cov) => preliminary_known_h_iter(data, cov),
        EstimationTarget::UnknownHMeanZero => preliminary_unknown_h_iter(data),
    }
}

/// Even and odd record indices.
pub fn split_halves(n: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n).step_by(2).collect(), (1..n).step_by(2).collect())
}

fn assemble(
    data: &Dataset,
    target: EstimationTarget<'_>,
    opts: &EstimatorOptions,
    scheme: Scheme,
    prelim: (DVector<f64>, usize),
    corrections: Vec<Correction>,
    hazard: Vec<HazardMetadata>,
) -> Result<EstimationResult> {
    let m = corrections.len() as f64;
    let k = prelim.0.len();
    let shift = corrections.iter().fold(DVector::zeros(k), |a, c| a + &c.mean_influence) / m;
    let info = linalg::symmetrize(&(corrections.iter().fold(DMatrix::zeros(k, k), |a, c| a + &c.info) / m));
    let inv = checked_inverse(&info, "estimated information")?;
    let n = data.len() as f64;
    Ok(EstimationResult {
        theta_hat: (&prelim.0 + shift).as_slice().to_vec(),
        theta_prelim: prelim.0.as_slice().to_vec(),
        stderr: (0..k).map(|i| (inv[(i, i)] / n).sqrt()).collect(),
        info_hat: info,
        diagnostics: Diagnostics {
            variant: target.variant(),
            scheme,
            newton_iterations: prelim.1,
            hazard_method: opts.method,
            score_form: matches!(target, EstimationTarget::UnknownHMeanZero).then_some(opts.score_form),
            hazard,
        },
    })
}

fn check_size(data: &Dataset) -> Result<()> {
    if data.len() < MIN_ONE_STEP_N {
        return Err(Error::InvalidInput(format!(
            "one-step estimation needs at least {MIN_ONE_STEP_N} records, got {}",
            data.len()
        )));
    }
    Ok(())
}

/// One-step estimator with sample splitting.
pub fn one_step_split(
    data: &Dataset,
    target: EstimationTarget<'_>,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    let prelim = preliminary(data, target)?;
    check_size(data)?;
    let theta = prelim.0.as_slice().to_vec();
    let (even, odd) = split_halves(data.len());
    let a = data.subset(&even)?;
    let b = data.subset(&odd)?;
    let fit_a = fit_hazard(&a, &theta, opts, 0)?;
    let fit_b = fit_hazard(&b, &theta, opts, 1)?;
    let corrections = vec![
        correction(&theta, &a, &b, target, &fit_a, opts.score_form)?,
        correction(&theta, &b, &a, target, &fit_b, opts.score_form)?,
    ];
    let meta = vec![fit_a.metadata().clone(), fit_b.metadata().clone()];
    assemble(data, target, opts, Scheme::Split, prelim, corrections, meta)
}

/// One-step estimator with nuisances fitted on the full sample.
pub fn one_step_plugin(
    data: &Dataset,
    target: EstimationTarget<'_>,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    let prelim = preliminary(data, target)?;
    check_size(data)?;
    let theta = prelim.0.as_slice().to_vec();
    let fit = fit_hazard(data, &theta, opts, 0)?;
    let corrections = vec![correction(&theta, data, data, target, &fit, opts.score_form)?];
    let meta = vec![fit.metadata().clone()];
    assemble(data, target, opts, Scheme::Plugin, prelim, corrections, meta)
}

/// One-step estimator with a fixed hazard score in place of a fitted one
/// (for oracle comparisons).
pub fn one_step_with_hazard(
    data: &Dataset,
    target: EstimationTarget<'_>,
    scheme: Scheme,
    opts: &EstimatorOptions,
    hazard: &dyn HazardScore,
) -> Result<EstimationResult> {
    let prelim = preliminary(data, target)?;
    check_size(data)?;
    let theta = prelim.0.as_slice().to_vec();
    let corrections = match scheme {
        Scheme::Plugin => vec![correction(&theta, data, data, target, hazard, opts.score_form)?],
        Scheme::Split => {
            let (even, odd) = split_halves(data.len());
            let a = data.subset(&even)?;
            let b = data.subset(&odd)?;
            vec![
                correction(&theta, &a, &b, target, hazard, opts.score_form)?,
                correction(&theta, &b, &a, target, hazard, opts.score_form)?,
            ]
        }
    };
    assemble(data, target, opts, scheme, prelim, corrections, Vec::new())
}

/// Average estimated influence over `eval` at a fixed θ, with nuisances
/// fitted on `fit_data` (independent of `eval`).
pub fn mean_influence(
    theta: &[f64],
    fit_data: &Dataset,
    eval: &Dataset,
    target: EstimationTarget<'_>,
    opts: &EstimatorOptions,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let fit = fit_hazard(fit_data, theta, opts, 0)?;
    let c = correction(theta, fit_data, eval, target, &fit, opts.score_form)?;
    Ok((c.mean_influence, c.info))
}
