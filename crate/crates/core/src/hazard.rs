//! Kernel estimation of the pseudo-response density `g_Y`, the hazard score
//! `yλ(y)` and `I₁ = E(Yλ(Y))²`.
//!
//! `λ = −g_Y'/g_Y`, so a density estimate and its derivative give the hazard.
//! Two estimators are offered:
//!
//! * kernel: Gaussian kernel on `[0, ∞)` with reflection at 0;
//! * symmetrized: attach random signs to the sample, estimate the location
//!   score `x ĝ'(x)/ĝ(x)` of the symmetric law on the whole line, and fold it
//!   back as `½(|ĥ(y)| + |ĥ(−y)|)`. No boundary correction is needed.
//!
//! Both zero `λ̂` where the density estimate drops below a floor `δ_n` and
//! clip `yλ̂` at `c_n`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{density_gy, BaselineModel};
use crate::quad::{gauss_legendre, Quadrature};
use crate::rng::SeedSpec;

/// Kernel contributions beyond this many bandwidths are below 1e-14.
const KERNEL_REACH: f64 = 8.5;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Quadrature panels per bandwidth and nodes per panel for `∫ · ĝ_Y`.
const PANELS_PER_BANDWIDTH: f64 = 2.0;
const PANEL_ORDER: usize = 8;
/// Table nodes per bandwidth for evaluating a fitted density.
const TABLE_DENSITY: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// `h = c · 1.06 · σ̂ · n^{-1/5}`.
    SilvermanScaled {
        c: f64,
    },
    Fixed {
        h: f64,
    },
}

/// Density floor `δ_n` below which `λ̂` is set to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TrimRule {
    /// `δ_n = n^{-exponent} · max ĝ_Y`.
    RelativeToMax {
        exponent: f64,
    },
    /// `δ_n = count / (n h)`: the density a window of `count` points supports.
    PerWindow {
        count: f64,
    },
    Fixed {
        floor: f64,
    },
}

/// Bound `c_n` on `|yλ̂(y)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ClipRule {
    /// `c_n = scale · ln n`.
    LogN {
        scale: f64,
    },
    Fixed {
        bound: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardOptions {
    pub bandwidth: BandwidthRule,
    pub trim: TrimRule,
    pub clip: ClipRule,
}

impl Default for HazardOptions {
    fn default() -> Self {
        Self {
            bandwidth: BandwidthRule::SilvermanScaled { c: 2.0 },
            trim: TrimRule::PerWindow { count: 0.5 },
            clip: ClipRule::LogN { scale: 1.0 },
        }
    }
}

impl HazardOptions {
    fn validate(&self) -> Result<()> {
        let ok = match self.bandwidth {
            BandwidthRule::SilvermanScaled { c } => c > 0.0 && c.is_finite(),
            BandwidthRule::Fixed { h } => h > 0.0 && h.is_finite(),
        } && match self.trim {
            TrimRule::RelativeToMax { exponent } => exponent > 0.0 && exponent.is_finite(),
            TrimRule::PerWindow { count } => count > 0.0 && count.is_finite(),
            TrimRule::Fixed { floor } => floor > 0.0 && floor.is_finite(),
        } && match self.clip {
            ClipRule::LogN { scale } => scale > 0.0 && scale.is_finite(),
            ClipRule::Fixed { bound } => bound > 0.0 && bound.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("hazard options must be positive and finite: {self:?}")))
        }
    }

    fn bandwidth(&self, sd: f64, n: usize) -> Result<f64> {
        let h = match self.bandwidth {
            BandwidthRule::SilvermanScaled { c } => c * 1.06 * sd * (n as f64).powf(-0.2),
            BandwidthRule::Fixed { h } => h,
        };
        if h > 0.0 && h.is_finite() {
            Ok(h)
        } else {
            Err(Error::InvalidInput(
                "bandwidth rule gives h = 0; the sample has no spread (use a fixed bandwidth)".into(),
            ))
        }
    }

    fn clip_bound(&self, n: usize) -> f64 {
        match self.clip {
            // ln 1 = 0 would zero every score; keep a floor of one unit
            ClipRule::LogN { scale } => scale * (n as f64).ln().max(1.0),
            ClipRule::Fixed { bound } => bound,
        }
    }
}

/// A Gaussian kernel sum over a sorted sample, optionally reflected at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity {
    points: Vec<f64>,
    h: f64,
    reflect: bool,
}

impl KernelDensity {
    fn new(mut points: Vec<f64>, h: f64, reflect: bool) -> Self {
        points.sort_by(f64::total_cmp);
        Self { points, h, reflect }
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Raw kernel sums `Σ φ(u)` and `Σ −u φ(u)` with `u = (y − p)/h` over the
    /// points within reach of `y`.
    fn sums(&self, y: f64) -> (f64, f64) {
        let reach = KERNEL_REACH * self.h;
        let lo = self.points.partition_point(|&p| p < y - reach);
        let hi = self.points.partition_point(|&p| p <= y + reach);
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for &p in &self.points[lo..hi] {
            let u = (y - p) / self.h;
            let k = (-0.5 * u * u).exp();
            s0 += k;
            s1 -= u * k;
        }
        (s0, s1)
    }

    /// `Σ φ⁽ᵏ⁾(u)` for `k = 0..=4`, with `φ⁽ᵏ⁾(u) = (−1)ᵏ Heₖ(u) φ(u)`.
    fn derivative_sums(&self, y: f64) -> [f64; 5] {
        let reach = KERNEL_REACH * self.h;
        let lo = self.points.partition_point(|&p| p < y - reach);
        let hi = self.points.partition_point(|&p| p <= y + reach);
        let mut s = [0.0; 5];
        for &p in &self.points[lo..hi] {
            let u = (y - p) / self.h;
            let u2 = u * u;
            let k = (-0.5 * u2).exp();
            s[0] += k;
            s[1] -= u * k;
            s[2] += (u2 - 1.0) * k;
            s[3] -= u * (u2 - 3.0) * k;
            s[4] += (u2 * (u2 - 6.0) + 3.0) * k;
        }
        s
    }

    /// `ĝ⁽ᵏ⁾(y)` for `k = 0..=4`.
    fn derivatives(&self, y: f64) -> [f64; 5] {
        let mut s = self.derivative_sums(y);
        if self.reflect {
            let r = self.derivative_sums(-y);
            for (k, (a, b)) in s.iter_mut().zip(r).enumerate() {
                *a += if k % 2 == 0 { b } else { -b };
            }
        }
        let mut scale = INV_SQRT_2PI / (self.points.len() as f64 * self.h);
        for a in &mut s {
            *a *= scale;
            scale /= self.h;
        }
        s
    }

    /// `(ĝ(y), ĝ'(y))`.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        let (mut s0, mut s1) = self.sums(y);
        if self.reflect {
            // mirror points at −p contribute at y exactly as the originals do at −y
            let (r0, r1) = self.sums(-y);
            s0 += r0;
            s1 -= r1;
        }
        let n = self.points.len() as f64;
        (s0 * INV_SQRT_2PI / (n * self.h), s1 * INV_SQRT_2PI / (n * self.h * self.h))
    }

    pub fn density(&self, y: f64) -> f64 {
        if self.reflect && y < 0.0 {
            return 0.0;
        }
        self.eval(y).0
    }

    pub fn derivative(&self, y: f64) -> f64 {
        if self.reflect && y < 0.0 {
            return 0.0;
        }
        self.eval(y).1
    }

    fn max_point(&self) -> f64 {
        *self.points.last().expect("nonempty")
    }

    fn min_point(&self) -> f64 {
        self.points[0]
    }
}

fn check_sample(ys: &[f64]) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::InvalidInput("cannot fit a density to an empty sample".into()));
    }
    if let Some((i, y)) = ys.iter().enumerate().find(|(_, y)| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::InvalidInput(format!("pseudo-responses must be positive and finite; entry {i} is {y}")));
    }
    Ok(())
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `ĝ` and its first four derivatives on a grid of step `h/TABLE_DENSITY`;
/// values in between come from the Taylor polynomial about the nearest node.
/// The truncation error is of relative order `(u/2·TABLE_DENSITY)⁵/120` at
/// `u` bandwidths from the data.
#[derive(Debug, Clone, PartialEq)]
struct KdeTable {
    start: f64,
    step: f64,
    nodes: Vec<[f64; 5]>,
}

impl KdeTable {
    fn new(kde: &KernelDensity, start: f64, end: f64) -> Self {
        let step = kde.bandwidth() / TABLE_DENSITY;
        let count = ((end - start) / step).ceil() as usize + 1;
        let nodes = (0..count).map(|i| kde.derivatives(start + i as f64 * step)).collect();
        Self { start, step, nodes }
    }

    /// `(ĝ(y), ĝ'(y))`; zero off the table.
    fn eval(&self, y: f64) -> (f64, f64) {
        let pos = ((y - self.start) / self.step).round();
        if !(pos >= 0.0 && pos < self.nodes.len() as f64) {
            return (0.0, 0.0);
        }
        let c = &self.nodes[pos as usize];
        let d = y - (self.start + pos * self.step);
        let g = c[0] + d * (c[1] + d * (c[2] / 2.0 + d * (c[3] / 6.0 + d * c[4] / 24.0)));
        let dg = c[1] + d * (c[2] + d * (c[3] / 2.0 + d * c[4] / 6.0));
        (g, dg)
    }
}

/// Reflected Gaussian kernel estimate of `g_Y` (and, through
/// [`KernelDensity::derivative`], of `g_Y'`).
pub fn fit_kernel_density(ys: &[f64], opts: &HazardOptions) -> Result<KernelDensity> {
    opts.validate()?;
    check_sample(ys)?;
    let h = opts.bandwidth(sample_sd(ys), ys.len())?;
    Ok(KernelDensity::new(ys.to_vec(), h, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HazardMethod {
    Kernel,
    Symmetrized,
}

/// Fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardMetadata {
    pub method: HazardMethod,
    pub n: usize,
    pub bandwidth: f64,
    pub trim_floor: f64,
    pub clip_bound: f64,
    /// Quadrature nodes where `λ̂` was zeroed by trimming.
    pub trimmed: usize,
    /// `∫ ĝ_Y` over the trimmed region.
    pub trimmed_mass: f64,
    /// Quadrature nodes where `yλ̂` hit the clip bound.
    pub clipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign_seed: Option<SeedSpec>,
}

/// Something that supplies a hazard score `yλ(y)` and expectations under
/// the matching density of `Y`.
pub trait HazardScore: Sync {
    /// `yλ(y)`.
    fn y_lambda(&self, y: f64) -> f64;

    /// `∫ f(yλ(y)) g_Y(y) dy` under the score's own density.
    fn expect(&self, f: &dyn Fn(f64) -> f64) -> Result<f64>;

    /// `I₁ = ∫ (yλ)² g_Y`.
    fn i1(&self) -> Result<f64> {
        self.expect(&|s| s * s)
    }
}

/// A fitted hazard: `ĝ_Y`, `λ̂`, `Î₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardFit {
    kde: KernelDensity,
    table: KdeTable,
    trim_floor: f64,
    clip_bound: f64,
    method: HazardMethod,
    /// Quadrature nodes over the support, with weights already multiplied
    /// by `ĝ_Y`, and the score at each node.
    grid_y: Vec<f64>,
    grid_w: Vec<f64>,
    grid_score: Vec<f64>,
    i1_hat: f64,
    metadata: HazardMetadata,
}

impl HazardFit {
    fn build(
        kde: KernelDensity,
        method: HazardMethod,
        opts: &HazardOptions,
        sample: &[f64],
        sign_seed: Option<SeedSpec>,
    ) -> Result<Self> {
        let n = sample.len();
        let h = kde.bandwidth();
        let upper = sample.iter().copied().fold(0.0, f64::max) + KERNEL_REACH * h;
        let panels = ((upper / h) * PANELS_PER_BANDWIDTH).ceil().max(1.0) as usize;
        let (x, w) = gauss_legendre(PANEL_ORDER);
        let width = upper / panels as f64;
        let table_start = match method {
            HazardMethod::Kernel => 0.0,
            HazardMethod::Symmetrized => -upper,
        };
        let table = KdeTable::new(&kde, table_start, upper);
        let mut fit = Self {
            kde,
            table,
            trim_floor: 0.0,
            clip_bound: opts.clip_bound(n),
            method,
            grid_y: Vec::with_capacity(panels * PANEL_ORDER),
            grid_w: Vec::with_capacity(panels * PANEL_ORDER),
            grid_score: Vec::new(),
            i1_hat: 0.0,
            metadata: HazardMetadata {
                method,
                n,
                bandwidth: h,
                trim_floor: 0.0,
                clip_bound: 0.0,
                trimmed: 0,
                trimmed_mass: 0.0,
                clipped: 0,
                sign_seed,
            },
        };
        let mut max_g: f64 = 0.0;
        let mut raw = Vec::with_capacity(panels * PANEL_ORDER);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            for (xi, wi) in x.iter().zip(&w) {
                let y = mid + 0.5 * width * xi;
                let (g, score) = fit.untrimmed(y);
                max_g = max_g.max(g);
                fit.grid_y.push(y);
                fit.grid_w.push(0.5 * width * wi * g);
                raw.push((g, score));
            }
        }
        fit.trim_floor = match opts.trim {
            TrimRule::RelativeToMax { exponent } => (n as f64).powf(-exponent) * max_g,
            TrimRule::PerWindow { count } => count / (n as f64 * h),
            TrimRule::Fixed { floor } => floor,
        };
        fit.grid_score = Vec::with_capacity(raw.len());
        for (&(g, score), &wg) in raw.iter().zip(&fit.grid_w) {
            if g < fit.trim_floor || g <= 0.0 {
                fit.metadata.trimmed += 1;
                fit.metadata.trimmed_mass += wg;
                fit.grid_score.push(0.0);
            } else {
                if score > fit.clip_bound {
                    fit.metadata.clipped += 1;
                }
                fit.grid_score.push(score.min(fit.clip_bound));
            }
        }
        fit.i1_hat = fit.expect(&|s| s * s)?;
        fit.metadata.trim_floor = fit.trim_floor;
        fit.metadata.clip_bound = fit.clip_bound;
        Ok(fit)
    }

    /// `(ĝ_Y(y), unclipped and untrimmed yλ̂(y))` for `y ≥ 0`.
    fn untrimmed(&self, y: f64) -> (f64, f64) {
        match self.method {
            HazardMethod::Kernel => {
                let (g, dg) = self.table.eval(y);
                (g, if g > 0.0 { (-y * dg / g).max(0.0) } else { 0.0 })
            }
            HazardMethod::Symmetrized => {
                let (gp, dgp) = self.table.eval(y);
                let (gm, dgm) = self.table.eval(-y);
                let score = |x: f64, d: f64, s: f64| if s > 0.0 { (x * d / s).abs() } else { 0.0 };
                (gp + gm, 0.5 * (score(y, dgp, gp) + score(-y, dgm, gm)))
            }
        }
    }

    /// `(ĝ_Y(y), unclipped yλ̂(y))` for `y ≥ 0`; the score is zero when trimmed.
    fn raw_score(&self, y: f64) -> (f64, f64) {
        let (g, score) = self.untrimmed(y);
        if g < self.trim_floor || g <= 0.0 {
            (g, 0.0)
        } else {
            (g, score)
        }
    }

    /// `ĝ_Y(y)`; zero for `y < 0`.
    pub fn g_hat(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        match self.method {
            HazardMethod::Kernel => self.table.eval(y).0,
            HazardMethod::Symmetrized => self.table.eval(y).0 + self.table.eval(-y).0,
        }
    }

    /// `λ̂(y)`; zero for `y ≤ 0`.
    pub fn lambda_hat(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else {
            self.y_lambda(y) / y
        }
    }

    pub fn i1_hat(&self) -> f64 {
        self.i1_hat
    }

    pub fn metadata(&self) -> &HazardMetadata {
        &self.metadata
    }

    pub fn bandwidth(&self) -> f64 {
        self.kde.bandwidth()
    }

    pub fn trim_floor(&self) -> f64 {
        self.trim_floor
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    /// Right end of the grid used for integrals against `ĝ_Y`.
    pub fn grid_end(&self) -> f64 {
        self.kde.max_point().abs().max(self.kde.min_point().abs()) + KERNEL_REACH * self.bandwidth()
    }

    /// `∫ ĝ_Y` over the integration grid.
    pub fn mass(&self) -> f64 {
        self.grid_w.iter().sum()
    }

    /// Write `(y, ĝ_Y(y), λ̂(y))` on `points` equally spaced nodes of
    /// `[0, grid_end]` as CSV.
    pub fn write_csv<W: Write>(&self, out: W, points: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "g_hat", "lambda_hat"]).map_err(|e| Error::Io(e.to_string()))?;
        let end = self.grid_end();
        for i in 0..points.max(2) {
            let y = end * i as f64 / (points.max(2) - 1) as f64;
            w.write_record([y.to_string(), self.g_hat(y).to_string(), self.lambda_hat(y).to_string()])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

impl HazardScore for HazardFit {
    fn y_lambda(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        self.raw_score(y).1.min(self.clip_bound)
    }

    fn expect(&self, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        let v: f64 = self.grid_w.iter().zip(&self.grid_score).map(|(w, s)| w * f(*s)).sum();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Quadrature { integral: "∫ f(yλ̂(y)) ĝ_Y(y) dy".into(), estimate: v, error: f64::NAN })
        }
    }
}

/// Reflected-kernel hazard estimate.
pub fn estimate_hazard(ys: &[f64], opts: &HazardOptions) -> Result<HazardFit> {
    let kde = fit_kernel_density(ys, opts)?;
    HazardFit::build(kde, HazardMethod::Kernel, opts, ys, None)
}

/// Sign-randomized hazard estimate.
pub fn estimate_hazard_symmetrized(ys: &[f64], seed: SeedSpec, opts: &HazardOptions) -> Result<HazardFit> {
    opts.validate()?;
    check_sample(ys)?;
    let mut rng = seed.rng();
    let signed: Vec<f64> = ys.iter().map(|&y| if rng.random::<bool>() { y } else { -y }).collect();
    let h = opts.bandwidth(sample_sd(ys), ys.len())?;
    let kde = KernelDensity::new(signed, h, false);
    HazardFit::build(kde, HazardMethod::Symmetrized, opts, ys, Some(seed))
}

/// `Î₁ = ∫ y² λ̂² ĝ_Y`.
pub fn estimate_i1(fit: &HazardFit) -> Result<f64> {
    fit.i1()
}

/// `∫ y² (λ̂(y) − λ(y))² g_Y(y) dy` against the true baseline.
pub fn weighted_hazard_error(fit: &impl HazardScore, baseline: &BaselineModel, end: f64) -> Result<f64> {
    let truth = TrueHazard::new(baseline.clone());
    let err = |y: f64| {
        let d = fit.y_lambda(y) - truth.y_lambda(y);
        d * d * density_gy(baseline, y)
    };
    let mut upper = end;
    if let Some(s) = baseline.support_end() {
        upper = upper.min(s);
    }
    let (x, w) = gauss_legendre(PANEL_ORDER);
    let panels = 200;
    let width = upper / panels as f64;
    let mut head = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        head += 0.5 * width * x.iter().zip(&w).map(|(xi, wi)| wi * err(mid + 0.5 * width * xi)).sum::<f64>();
    }
    let tail = match baseline.support_end() {
        Some(s) if s <= upper => 0.0,
        _ => {
            Quadrature::default()
                .integrate_to_infinity(err, upper, upper.max(1.0))
                .map_err(|e| e.named("tail of the weighted hazard error"))?
                .value
        }
    };
    Ok(head + tail)
}

/// The true hazard score of a baseline, as a [`HazardScore`].
#[derive(Debug, Clone)]
pub struct TrueHazard {
    baseline: BaselineModel,
}

impl TrueHazard {
    pub fn new(baseline: BaselineModel) -> Self {
        Self { baseline }
    }
}

impl HazardScore for TrueHazard {
    fn y_lambda(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.baseline.hazard(y).map(|l| y * l).unwrap_or(0.0)
    }

    fn expect(&self, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        let b = &self.baseline;
        b.integrate(
            &Quadrature::default(),
            |y| {
                let g = density_gy(b, y);
                if g == 0.0 {
                    0.0
                } else {
                    f(self.y_lambda(y)) * g
                }
            },
            "E f(Yλ(Y))",
        )
    }
}

/// `λ̂ ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroHazard;

impl HazardScore for ZeroHazard {
    fn y_lambda(&self, _: f64) -> f64 {
        0.0
    }

    fn expect(&self, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        Ok(f(0.0))
    }
}
