//! The core covariate law `h` and its exponential-tilt moments.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::Quadrature;

/// Tolerance for matching a point of a discrete support.
const ATOM_TOL: f64 = 1e-12;

/// A one-dimensional covariate law used as a factor of a product law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum ScalarLaw {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    Laplace { location: f64, scale: f64 },
    Discrete { points: Vec<f64>, probs: Vec<f64> },
}

/// `E[e^{tW}]`, `E[W e^{tW}]`, `E[W² e^{tW}]` for a scalar law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarExpMoments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

impl ScalarLaw {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        match self {
            ScalarLaw::Normal { mean, sd } => {
                if !mean.is_finite() || !(*sd >= 0.0 && sd.is_finite()) {
                    return bad("normal law needs finite mean and sd >= 0");
                }
            }
            ScalarLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && high > low) {
                    return bad("uniform law needs finite low < high");
                }
            }
            ScalarLaw::Laplace { location, scale } => {
                if !(location.is_finite() && *scale > 0.0 && scale.is_finite()) {
                    return bad("laplace law needs finite location and scale > 0");
                }
            }
            ScalarLaw::Discrete { points, probs } => {
                validate_discrete(points.len(), probs, points.iter().all(|p| p.is_finite()))?
            }
        }
        Ok(())
    }

    fn density(&self, z: f64) -> f64 {
        match self {
            ScalarLaw::Normal { mean, sd } => {
                let u = (z - mean) / sd;
                (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            ScalarLaw::Uniform { low, high } => {
                if z >= *low && z <= *high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            ScalarLaw::Laplace { location, scale } => (-(z - location).abs() / scale).exp() / (2.0 * scale),
            ScalarLaw::Discrete { points, probs } => {
                points.iter().zip(probs).filter(|(p, _)| (*p - z).abs() <= ATOM_TOL).map(|(_, q)| q).sum()
            }
        }
    }

    fn mean(&self) -> f64 {
        match self {
            ScalarLaw::Normal { mean, .. } => *mean,
            ScalarLaw::Uniform { low, high } => 0.5 * (low + high),
            ScalarLaw::Laplace { location, .. } => *location,
            ScalarLaw::Discrete { points, probs } => points.iter().zip(probs).map(|(p, q)| p * q).sum(),
        }
    }

    fn exp_moments(&self, t: f64) -> Result<ScalarExpMoments> {
        match self {
            ScalarLaw::Normal { mean, sd } => {
                let m0 = (t * mean + 0.5 * t * t * sd * sd).exp();
                let shifted = mean + t * sd * sd;
                Ok(ScalarExpMoments { m0, m1: shifted * m0, m2: (shifted * shifted + sd * sd) * m0 })
            }
            ScalarLaw::Laplace { location, scale } => {
                let bt = scale * t;
                if bt.abs() >= 1.0 {
                    return Err(Error::Domain(format!(
                        "E e^(tW) diverges for a Laplace law with scale {scale} at t = {t}"
                    )));
                }
                let m0 = (t * location).exp() / (1.0 - bt * bt);
                let q = 2.0 * scale * bt / (1.0 - bt * bt);
                let dq = 2.0 * scale * scale * (1.0 + bt * bt) / (1.0 - bt * bt).powi(2);
                Ok(ScalarExpMoments { m0, m1: m0 * (location + q), m2: m0 * ((location + q).powi(2) + dq) })
            }
            ScalarLaw::Uniform { low, high } => {
                let q = Quadrature::default();
                let w = 1.0 / (high - low);
                let mut out = [0.0; 3];
                for (p, o) in out.iter_mut().enumerate() {
                    *o = q
                        .integrate(|z| z.powi(p as i32) * (t * z).exp() * w, *low, *high)
                        .map_err(|e| e.named("uniform exponential moment"))?
                        .value;
                }
                Ok(ScalarExpMoments { m0: out[0], m1: out[1], m2: out[2] })
            }
            ScalarLaw::Discrete { points, probs } => {
                let mut m = ScalarExpMoments { m0: 0.0, m1: 0.0, m2: 0.0 };
                for (z, p) in points.iter().zip(probs) {
                    let e = p * (t * z).exp();
                    m.m0 += e;
                    m.m1 += z * e;
                    m.m2 += z * z * e;
                }
                Ok(m)
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_tilted(0.0, rng)
    }

    /// Draw from the law with density proportional to `e^{-t z} h(z)`.
    fn sample_tilted<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        match self {
            ScalarLaw::Normal { mean, sd } => {
                let n: f64 = StandardNormal.sample(rng);
                mean - t * sd * sd + sd * n
            }
            ScalarLaw::Uniform { low, high } => {
                let u: f64 = rng.random();
                if t.abs() * (high - low) < 1e-12 {
                    return low + u * (high - low);
                }
                // truncated exponential measured from the heavier end
                let span = high - low;
                let rate = t.abs();
                let offset = -(1.0 - u * (1.0 - (-rate * span).exp())).ln() / rate;
                if t > 0.0 {
                    low + offset
                } else {
                    high - offset
                }
            }
            ScalarLaw::Laplace { location, scale } => {
                let right_rate = 1.0 / scale + t;
                let left_rate = 1.0 / scale - t;
                let p_right = (1.0 / right_rate) / (1.0 / right_rate + 1.0 / left_rate);
                let e: f64 = Exp1.sample(rng);
                if rng.random::<f64>() < p_right {
                    location + e / right_rate
                } else {
                    location - e / left_rate
                }
            }
            ScalarLaw::Discrete { points, probs } => {
                let w: Vec<f64> = points.iter().zip(probs).map(|(z, p)| p * (-t * z).exp()).collect();
                points[categorical(&w, rng)]
            }
        }
    }
}

fn validate_discrete(len: usize, probs: &[f64], finite: bool) -> Result<()> {
    if len == 0 || len != probs.len() {
        return Err(Error::InvalidModel("discrete law needs matching nonempty points and probs".into()));
    }
    if !finite || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidModel("discrete law needs finite points and probs >= 0".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidModel(format!("discrete probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Serialized form of a covariate law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum CovariateKind {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Discrete { points: Vec<Vec<f64>>, probs: Vec<f64> },
    Product { laws: Vec<ScalarLaw> },
}

/// `E_h e^{tᵀW}`, `E_h W e^{tᵀW}`, `E_h WWᵀ e^{tᵀW}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpMoments {
    pub m0: f64,
    pub m1: DVector<f64>,
    pub m2: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CovariateKind", into = "CovariateKind")]
pub struct CovariateModel {
    kind: CovariateKind,
    dim: usize,
    #[serde(skip)]
    chol: Option<Cholesky<f64, Dyn>>,
}

impl PartialEq for CovariateModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl From<CovariateModel> for CovariateKind {
    fn from(c: CovariateModel) -> Self {
        c.kind
    }
}

impl TryFrom<CovariateKind> for CovariateModel {
    type Error = Error;
    fn try_from(kind: CovariateKind) -> Result<Self> {
        CovariateModel::new(kind)
    }
}

impl CovariateModel {
    pub fn new(kind: CovariateKind) -> Result<Self> {
        let mut chol = None;
        let dim = match &kind {
            CovariateKind::Gaussian { mean, cov } => {
                let k = mean.len();
                if k == 0 || cov.len() != k || cov.iter().any(|r| r.len() != k) {
                    return Err(Error::InvalidModel("gaussian covariates need a k-vector mean and k×k cov".into()));
                }
                let m = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
                if mean.iter().chain(m.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("gaussian parameters must be finite".into()));
                }
                if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::InvalidModel("gaussian covariance must be symmetric".into()));
                }
                chol = m.cholesky();
                k
            }
            CovariateKind::Discrete { points, probs } => {
                let k = points.first().map_or(0, Vec::len);
                if k == 0 || points.iter().any(|p| p.len() != k) {
                    return Err(Error::InvalidModel("discrete support points must share a dimension k >= 1".into()));
                }
                validate_discrete(points.len(), probs, points.iter().flatten().all(|v| v.is_finite()))?;
                k
            }
            CovariateKind::Product { laws } => {
                if laws.is_empty() {
                    return Err(Error::InvalidModel("product law needs at least one factor".into()));
                }
                for l in laws {
                    l.validate()?;
                }
                laws.len()
            }
        };
        Ok(Self { kind, dim, chol })
    }

    pub fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(CovariateKind::Gaussian { mean, cov })
    }

    pub fn standard_normal(k: usize) -> Self {
        let cov = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::gaussian(vec![0.0; k], cov).expect("identity covariance is valid")
    }

    pub fn discrete(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        Self::new(CovariateKind::Discrete { points, probs })
    }

    /// Symmetric two-point law on `{-1, +1}`.
    pub fn binary_sign() -> Self {
        Self::discrete(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).expect("valid")
    }

    pub fn product(laws: Vec<ScalarLaw>) -> Result<Self> {
        Self::new(CovariateKind::Product { laws })
    }

    pub fn kind(&self) -> &CovariateKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether ν is counting measure in every coordinate.
    pub fn is_discrete(&self) -> bool {
        match &self.kind {
            CovariateKind::Discrete { .. } => true,
            CovariateKind::Product { laws } => laws.iter().all(|l| matches!(l, ScalarLaw::Discrete { .. })),
            CovariateKind::Gaussian { .. } => false,
        }
    }

    /// Density `h(z)` with respect to ν.
    pub fn density(&self, z: &[f64]) -> f64 {
        if z.len() != self.dim {
            return 0.0;
        }
        match &self.kind {
            CovariateKind::Gaussian { mean, .. } => {
                let Some(chol) = &self.chol else { return 0.0 };
                let d = DVector::from_iterator(self.dim, z.iter().zip(mean).map(|(a, b)| a - b));
                let sol = chol.l().solve_lower_triangular(&d).expect("nonsingular factor");
                let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum();
                (-0.5 * sol.norm_squared() - log_det - 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln()).exp()
            }
            CovariateKind::Discrete { points, probs } => points
                .iter()
                .zip(probs)
                .filter(|(p, _)| p.iter().zip(z).all(|(a, b)| (a - b).abs() <= ATOM_TOL))
                .map(|(_, q)| q)
                .sum(),
            CovariateKind::Product { laws } => laws.iter().zip(z).map(|(l, v)| l.density(*v)).product(),
        }
    }

    /// Per-coordinate bounds of the support (infinite when unbounded).
    pub fn coordinate_bounds(&self) -> Vec<(f64, f64)> {
        let hull = |vals: &mut dyn Iterator<Item = f64>| {
            vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        match &self.kind {
            CovariateKind::Gaussian { .. } => vec![(f64::NEG_INFINITY, f64::INFINITY); self.dim],
            CovariateKind::Discrete { points, probs } => (0..self.dim)
                .map(|j| hull(&mut points.iter().zip(probs).filter(|(_, p)| **p > 0.0).map(|(z, _)| z[j])))
                .collect(),
            CovariateKind::Product { laws } => laws
                .iter()
                .map(|l| match l {
                    ScalarLaw::Uniform { low, high } => (*low, *high),
                    ScalarLaw::Discrete { points, probs } => {
                        hull(&mut points.iter().zip(probs).filter(|(_, p)| **p > 0.0).map(|(z, _)| *z))
                    }
                    _ => (f64::NEG_INFINITY, f64::INFINITY),
                })
                .collect(),
        }
    }

    /// `E_h W`.
    pub fn mean(&self) -> DVector<f64> {
        match &self.kind {
            CovariateKind::Gaussian { mean, .. } => DVector::from_vec(mean.clone()),
            CovariateKind::Discrete { points, probs } => points
                .iter()
                .zip(probs)
                .fold(DVector::zeros(self.dim), |acc, (p, q)| acc + DVector::from_vec(p.clone()) * *q),
            CovariateKind::Product { laws } => DVector::from_iterator(self.dim, laws.iter().map(ScalarLaw::mean)),
        }
    }

    /// `Σ_W`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let m = self.exp_moments(&vec![0.0; self.dim])?;
        Ok(&m.m2 - &m.m1 * m.m1.transpose())
    }

    /// Exponential moments at `t`; an error when they diverge.
    pub fn exp_moments(&self, t: &[f64]) -> Result<ExpMoments> {
        assert_eq!(t.len(), self.dim, "tilt dimension");
        let k = self.dim;
        let tv = DVector::from_column_slice(t);
        match &self.kind {
            CovariateKind::Gaussian { mean, cov } => {
                let mu = DVector::from_vec(mean.clone());
                let sigma = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
                let st = &sigma * &tv;
                let m0 = (tv.dot(&mu) + 0.5 * tv.dot(&st)).exp();
                let shifted = &mu + &st;
                let m2 = (&sigma + &shifted * shifted.transpose()) * m0;
                Ok(ExpMoments { m0, m1: shifted * m0, m2 })
            }
            CovariateKind::Discrete { points, probs } => {
                let mut out = ExpMoments { m0: 0.0, m1: DVector::zeros(k), m2: DMatrix::zeros(k, k) };
                for (p, q) in points.iter().zip(probs) {
                    let z = DVector::from_column_slice(p);
                    let e = q * tv.dot(&z).exp();
                    out.m0 += e;
                    out.m1 += &z * e;
                    out.m2 += &z * z.transpose() * e;
                }
                Ok(out)
            }
            CovariateKind::Product { laws } => {
                let s: Vec<ScalarExpMoments> =
                    laws.iter().zip(t).map(|(l, ti)| l.exp_moments(*ti)).collect::<Result<_>>()?;
                let prod_except = |skip: &[usize]| -> f64 {
                    s.iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, m)| m.m0).product()
                };
                let m0 = prod_except(&[]);
                let m1 = DVector::from_fn(k, |i, _| s[i].m1 * prod_except(&[i]));
                let m2 = DMatrix::from_fn(k, k, |i, j| {
                    if i == j {
                        s[i].m2 * prod_except(&[i])
                    } else {
                        s[i].m1 * s[j].m1 * prod_except(&[i, j])
                    }
                });
                Ok(ExpMoments { m0, m1, m2 })
            }
        }
    }

    /// Draw `W ~ h`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.sample_tilted(&vec![0.0; self.dim], rng)
    }

    /// Draw from the tilted law with density `∝ e^{-θᵀz} h(z)`.
    pub fn sample_tilted<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match &self.kind {
            CovariateKind::Gaussian { mean, cov } => {
                let chol = self
                    .chol
                    .as_ref()
                    .ok_or_else(|| Error::Unsupported("sampling a gaussian with singular covariance".into()))?;
                let k = self.dim;
                let normals = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
                let sigma = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
                let shift = sigma * DVector::from_column_slice(theta);
                let z = DVector::from_column_slice(mean) - shift + chol.l() * normals;
                Ok(z.as_slice().to_vec())
            }
            CovariateKind::Discrete { points, probs } => {
                let w: Vec<f64> = points
                    .iter()
                    .zip(probs)
                    .map(|(p, q)| q * (-p.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()).exp())
                    .collect();
                Ok(points[categorical(&w, rng)].clone())
            }
            CovariateKind::Product { laws } => {
                for (l, t) in laws.iter().zip(theta) {
                    if let ScalarLaw::Laplace { scale, .. } = l {
                        if (scale * t).abs() >= 1.0 {
                            return Err(Error::Unsupported(
                                "tilted Laplace law is not normalizable at this theta".into(),
                            ));
                        }
                    }
                }
                Ok(laws.iter().zip(theta).map(|(l, t)| l.sample_tilted(*t, rng)).collect())
            }
        }
    }

    /// One-dimensional factor sampler (untilted) exposed for tests.
    #[doc(hidden)]
    pub fn scalar_sample<R: Rng + ?Sized>(law: &ScalarLaw, rng: &mut R) -> f64 {
        law.sample(rng)
    }
}
