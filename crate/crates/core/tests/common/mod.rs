//! Test-side oracles. Nothing here calls into the crate's own quadrature,
//! hazard or moment code, so agreement with it is a genuine cross-check.
#![allow(dead_code)]

use aft_xsect_core::model::{BaselineKind, CovariateKind, ScalarLaw};
use aft_xsect_core::{BaselineModel, CovariateModel};
use nalgebra::{DMatrix, DVector};

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton on `P_m`.
pub fn gl_rule(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let dp = {
                    let (mut p0, mut p1) = (1.0, z);
                    for k in 2..=m {
                        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    m as f64 * (z * p1 - p0) / (z * z - 1.0)
                };
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

/// Quadrature nodes and weights over consecutive panels given by `breaks`.
pub fn panel_rule(breaks: &[f64], order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gl_rule(order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in breaks.windows(2) {
        let (mid, half) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + half * xi);
            weights.push(half * wi);
        }
    }
    (nodes, weights)
}

/// Panels graded geometrically from `tiny` to 1, then uniform of width
/// `step` up to `end`.
pub fn graded_breaks(tiny: f64, step: f64, end: f64) -> Vec<f64> {
    let mut b = vec![0.0, tiny];
    while *b.last().unwrap() < 1.0 {
        let next = (b.last().unwrap() * 1.5).min(1.0);
        b.push(next);
    }
    while *b.last().unwrap() < end {
        b.push((b.last().unwrap() + step).min(end));
    }
    b
}

/// The moments `E f(Yλ(Y))` needed by the information formulas, computed
/// from a density written out independently of the crate.
#[derive(Debug, Clone, Copy)]
pub struct YLambdaOracle {
    pub mass: f64,
    pub m1: f64,
    pub m2: f64,
    /// `E(Yλ − 1)²`.
    pub centred: f64,
    /// `E(1 + Yλ)²`.
    pub m2p: f64,
}

/// Unnormalized density and where its survival function is negligible.
fn baseline_pieces(b: &BaselineModel) -> (Box<dyn Fn(f64) -> f64>, f64) {
    match *b.kind() {
        BaselineKind::Exponential { rate } => (Box::new(move |v: f64| (-rate * v).exp()), 80.0 / rate),
        BaselineKind::Weibull { shape, scale } => (
            Box::new(move |v: f64| (v / scale).powf(shape - 1.0) * (-(v / scale).powf(shape)).exp()),
            scale * 80f64.powf(1.0 / shape),
        ),
        BaselineKind::Gamma { shape, rate } => (
            Box::new(move |v: f64| v.powf(shape - 1.0) * (-rate * v).exp()),
            (80.0 + 3.0 * shape * (1.0 + shape.ln().max(0.0))) / rate,
        ),
        BaselineKind::Tabulated { .. } => panic!("no independent oracle for tabulated laws"),
    }
}

/// Survival values at sorted nodes by right-to-left accumulation of the
/// density over the gaps, each gap integrated with its own rule.
fn survival_at(density: &dyn Fn(f64) -> f64, nodes: &[f64], end: f64) -> Vec<f64> {
    let (x, w) = gl_rule(12);
    let gap = |a: f64, b: f64| {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        half * x.iter().zip(&w).map(|(xi, wi)| wi * density(mid + half * xi)).sum::<f64>()
    };
    let mut surv = vec![0.0; nodes.len()];
    let mut acc = gap(*nodes.last().unwrap(), end);
    for i in (0..nodes.len()).rev() {
        if i + 1 < nodes.len() {
            acc += gap(nodes[i], nodes[i + 1]);
        }
        surv[i] = acc;
    }
    surv
}

pub fn ylambda_oracle(b: &BaselineModel) -> YLambdaOracle {
    let (g, end) = baseline_pieces(b);
    let breaks = graded_breaks(1e-14, end / 4000.0, end);
    let (nodes, weights) = panel_rule(&breaks, 16);
    let mut surv = survival_at(&*g, &nodes, end);
    // mass below the first panel: v^(a-1) behaviour near 0
    let head = match *b.kind() {
        BaselineKind::Gamma { shape, .. } => 1e-14f64.powf(shape) / shape,
        BaselineKind::Weibull { shape, scale } => scale * (1e-14 / scale).powf(shape) / shape,
        _ => 1e-14,
    };
    let total = surv[0] + head;
    for s in &mut surv {
        *s /= total;
    }
    let mean_v: f64 = nodes.iter().zip(&weights).zip(&surv).map(|((_, w), s)| w * s).sum();
    let mut out = YLambdaOracle { mass: 0.0, m1: 0.0, m2: 0.0, centred: 0.0, m2p: 0.0 };
    for ((v, w), s) in nodes.iter().zip(&weights).zip(&surv) {
        if *s < 1e-300 {
            continue;
        }
        let gy = s / mean_v;
        let yl = v * g(*v) / total / s;
        out.mass += w * gy;
        out.m1 += w * gy * yl;
        out.m2 += w * gy * yl * yl;
        out.centred += w * gy * (yl - 1.0) * (yl - 1.0);
        out.m2p += w * gy * (1.0 + yl) * (1.0 + yl);
    }
    out
}

/// Tilted covariate moments `(E Z, Σ_Z, M₁, M₂)` from a discretized law
/// `{(w_i, p_i)}` of `W`.
pub struct TiltOracle {
    pub e_z: DVector<f64>,
    pub sigma_z: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
}

pub fn tilt_oracle(points: &[(Vec<f64>, f64)], theta: &[f64]) -> TiltOracle {
    let k = theta.len();
    let dot = |w: &[f64]| w.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
    let norm: f64 = points.iter().map(|(w, p)| p * (-dot(w)).exp()).sum();
    let mut e_z = DVector::zeros(k);
    let mut second = DMatrix::zeros(k, k);
    let mut m1 = DMatrix::zeros(k, k);
    let mut m2 = DMatrix::zeros(k, k);
    for (w, p) in points {
        let v = DVector::from_column_slice(w);
        let outer = &v * v.transpose();
        let tilt = p * (-dot(w)).exp() / norm;
        e_z += &v * tilt;
        second += &outer * tilt;
        m1 += &outer * (p / norm);
        m2 += &outer * (p * dot(w).exp() / norm);
    }
    let sigma_z = second - &e_z * e_z.transpose();
    TiltOracle { e_z, sigma_z, m1, m2 }
}

/// One-dimensional quadrature points of a scalar law.
fn scalar_points(law: &ScalarLaw) -> Vec<(f64, f64)> {
    let dense = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64, kinks: &[f64]| {
        let mut b = vec![lo];
        b.extend(kinks.iter().copied().filter(|k| *k > lo && *k < hi));
        b.push(hi);
        let mut fine = Vec::new();
        for p in b.windows(2) {
            for j in 0..60 {
                fine.push(p[0] + (p[1] - p[0]) * j as f64 / 60.0);
            }
        }
        fine.push(hi);
        let (x, w) = panel_rule(&fine, 12);
        x.into_iter().zip(w).map(|(x, w)| (x, w * f(x))).collect::<Vec<_>>()
    };
    match law {
        ScalarLaw::Normal { mean, sd } => {
            let (m, s) = (*mean, *sd);
            let f = move |x: f64| (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            dense(m - 14.0 * s, m + 14.0 * s, &f, &[m])
        }
        ScalarLaw::Uniform { low, high } => {
            let (a, b) = (*low, *high);
            dense(a, b, &move |_| 1.0 / (b - a), &[])
        }
        ScalarLaw::Laplace { location, scale } => {
            let (m, s) = (*location, *scale);
            dense(m - 60.0 * s, m + 60.0 * s, &move |x: f64| (-(x - m).abs() / s).exp() / (2.0 * s), &[m])
        }
        ScalarLaw::Discrete { points, probs } => points.iter().copied().zip(probs.iter().copied()).collect(),
    }
}

/// A discretization of the covariate law accurate enough for 1e-6 work.
pub fn covariate_points(cov: &CovariateModel) -> Vec<(Vec<f64>, f64)> {
    match cov.kind() {
        CovariateKind::Discrete { points, probs } => points.iter().cloned().zip(probs.iter().copied()).collect(),
        CovariateKind::Product { laws } => {
            let mut out = vec![(Vec::new(), 1.0)];
            for law in laws {
                let pts = scalar_points(law);
                out = out
                    .iter()
                    .flat_map(|(w, p)| {
                        pts.iter().map(move |(x, q)| {
                            let mut v = w.clone();
                            v.push(*x);
                            (v, p * q)
                        })
                    })
                    .collect();
            }
            out
        }
        CovariateKind::Gaussian { mean, cov: sigma } => {
            // W = mean + L·X with X standard normal on a tensor grid
            let k = mean.len();
            let s = DMatrix::from_fn(k, k, |i, j| sigma[i][j]);
            let l = s.cholesky().expect("positive definite covariance").l();
            let std_pts = scalar_points(&ScalarLaw::Normal { mean: 0.0, sd: 1.0 });
            let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
            for _ in 0..k {
                out = out
                    .iter()
                    .flat_map(|(x, p)| {
                        std_pts.iter().map(move |(y, q)| {
                            let mut v = x.clone();
                            v.push(*y);
                            (v, p * q)
                        })
                    })
                    .collect();
            }
            out.into_iter()
                .map(|(x, p)| {
                    let w = &l * DVector::from_vec(x);
                    ((0..k).map(|i| mean[i] + w[i]).collect(), p)
                })
                .collect()
        }
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    (d, kolmogorov_q((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d))
}

/// One-sample KS distance against a CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `P(K > t)` for the Kolmogorov distribution.
pub fn kolmogorov_q(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest elementwise relative error, scaled by the largest entry of `b`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

/// Mean-zero covariate laws of one and two dimensions.
pub fn mean_zero_covariates() -> Vec<(&'static str, CovariateModel)> {
    vec![
        ("N(0,1)", CovariateModel::standard_normal(1)),
        (
            "N(0,[[1,.4],[.4,2]])",
            CovariateModel::gaussian(vec![0.0, 0.0], vec![vec![1.0, 0.4], vec![0.4, 2.0]]).unwrap(),
        ),
        ("binary ±1", CovariateModel::binary_sign()),
        ("Uniform(-1,1)", CovariateModel::product(vec![ScalarLaw::Uniform { low: -1.0, high: 1.0 }]).unwrap()),
        ("Laplace(0,.5)", CovariateModel::product(vec![ScalarLaw::Laplace { location: 0.0, scale: 0.5 }]).unwrap()),
        (
            "Uniform×Laplace",
            CovariateModel::product(vec![
                ScalarLaw::Uniform { low: -1.0, high: 1.0 },
                ScalarLaw::Laplace { location: 0.0, scale: 0.5 },
            ])
            .unwrap(),
        ),
    ]
}

/// Parametric baselines (each has an independent oracle here).
pub fn parametric_baselines() -> Vec<(&'static str, BaselineModel)> {
    vec![
        ("Exponential(1)", BaselineModel::exponential(1.0).unwrap()),
        ("Exponential(2)", BaselineModel::exponential(2.0).unwrap()),
        ("Weibull(2,1)", BaselineModel::weibull(2.0, 1.0).unwrap()),
        ("Weibull(0.7,1.5)", BaselineModel::weibull(0.7, 1.5).unwrap()),
        ("Gamma(2.5,1)", BaselineModel::gamma(2.5, 1.0).unwrap()),
        ("Gamma(0.6,2)", BaselineModel::gamma(0.6, 2.0).unwrap()),
    ]
}

/// A tabulated law: a log-logistic-like density on a log grid with a
/// power tail of exponent 4.
pub fn tabulated_baseline() -> BaselineModel {
    BaselineModel::tabulate_log_spaced(|v| 3.0 * v * v / (1.0 + v.powi(3)).powi(2), 1e-3, 40.0, 300, true).unwrap()
}

/// The regression parameter used with a covariate law of dimension `k`.
pub fn theta_for(k: usize) -> Vec<f64> {
    match k {
        1 => vec![0.5],
        _ => vec![0.4, -0.2],
    }
}
