//! The law `G` of the unscaled failure time `V`.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, Quadrature};

/// Survival values below this are treated as the end of a tabulated support.
pub const SURVIVAL_FLOOR: f64 = 1e-12;

/// Slack on the tail exponent: a table of an exact power law recovers its
/// exponent only up to rounding, and the integrability cut-offs are sharp.
const TAIL_EXPONENT_TOL: f64 = 1e-8;

/// Serialized form of a baseline law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum BaselineKind {
    Exponential {
        rate: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// Density values `(v, g(v))` on an increasing grid.
    Tabulated {
        grid: Vec<(f64, f64)>,
    },
}

/// Power-law continuation past the last tabulated node:
/// `Ḡ(v) = surv_at * (v / start)^(1 - exponent)`.
#[derive(Debug, Clone, PartialEq)]
struct PowerTail {
    start: f64,
    surv_at: f64,
    exponent: f64,
}

/// Piecewise-linear survival function on a grid; the density is constant
/// on each cell.
#[derive(Debug, Clone, PartialEq)]
struct TabulatedLaw {
    nodes: Vec<f64>,
    surv: Vec<f64>,
    dens: Vec<f64>,
    /// Cumulative `∫ v g(v) dv` up to the end of each cell.
    lb_cumulative: Vec<f64>,
    tail: Option<PowerTail>,
}

impl TabulatedLaw {
    fn new(grid: &[(f64, f64)]) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidModel("tabulated baseline needs at least two nodes".into()));
        }
        for w in grid.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidModel("tabulated grid must be strictly increasing".into()));
            }
        }
        if grid[0].0 < 0.0 || grid.iter().any(|(v, g)| !v.is_finite() || !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidModel("tabulated grid needs finite v >= 0 and finite g >= 0".into()));
        }
        let m = grid.len() - 1;
        let cell_mass: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).collect();
        let (v_last, g_last) = grid[m];
        let (v_prev, g_prev) = grid[m - 1];
        let mut tail = None;
        let mut tail_mass = 0.0;
        if g_last > 0.0 {
            if g_prev <= 0.0 || v_prev <= 0.0 {
                return Err(Error::InvalidModel(
                    "cannot extrapolate the tabulated tail from a zero density or v = 0".into(),
                ));
            }
            let exponent = -(g_last / g_prev).ln() / (v_last / v_prev).ln();
            if exponent <= 1.0 + TAIL_EXPONENT_TOL {
                return Err(Error::InvalidModel(format!(
                    "tabulated tail decays like v^-{exponent:.3}; the density is not integrable"
                )));
            }
            tail_mass = g_last * v_last / (exponent - 1.0);
            tail = Some(PowerTail { start: v_last, surv_at: 0.0, exponent });
        }
        let total: f64 = cell_mass.iter().sum::<f64>() + tail_mass;
        if !(total > 0.0) {
            return Err(Error::InvalidModel("tabulated density has zero mass".into()));
        }
        let mut surv = vec![0.0; m + 1];
        surv[m] = tail_mass / total;
        for i in (0..m).rev() {
            surv[i] = surv[i + 1] + cell_mass[i] / total;
        }
        let mut nodes: Vec<f64> = grid.iter().map(|p| p.0).collect();
        surv[0] = 1.0;
        // Truncate at the first node whose survival falls below the floor.
        if let Some(cut) = surv.iter().position(|&s| s < SURVIVAL_FLOOR) {
            nodes.truncate(cut + 1);
            surv.truncate(cut + 1);
            tail = None;
        } else if let Some(t) = tail.as_mut() {
            t.surv_at = surv[m];
        }
        let dens: Vec<f64> =
            nodes.windows(2).zip(surv.windows(2)).map(|(v, s)| ((s[0] - s[1]) / (v[1] - v[0])).max(0.0)).collect();
        let lb_cumulative = nodes
            .windows(2)
            .zip(&dens)
            .scan(0.0, |acc, (v, c)| {
                *acc += 0.5 * c * (v[1] * v[1] - v[0] * v[0]);
                Some(*acc)
            })
            .collect();
        Ok(Self { nodes, surv, dens, lb_cumulative, tail })
    }

    fn first(&self) -> f64 {
        self.nodes[0]
    }

    fn last(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Index of the cell containing `v` (requires `first <= v < last`).
    fn cell(&self, v: f64) -> usize {
        self.nodes.partition_point(|&x| x <= v).saturating_sub(1).min(self.dens.len() - 1)
    }

    fn survival(&self, v: f64) -> f64 {
        if v <= self.first() {
            return 1.0;
        }
        if v >= self.last() {
            return match &self.tail {
                Some(t) => t.surv_at * (v / t.start).powf(1.0 - t.exponent),
                None => 0.0,
            };
        }
        let i = self.cell(v);
        self.surv[i] - self.dens[i] * (v - self.nodes[i])
    }

    fn density(&self, v: f64) -> f64 {
        if v < self.first() {
            return 0.0;
        }
        if v >= self.last() {
            return match &self.tail {
                Some(t) => (t.exponent - 1.0) * self.survival(v) / v,
                None => 0.0,
            };
        }
        self.dens[self.cell(v)]
    }

    fn quantile_of_survival(&self, u: f64) -> f64 {
        // smallest v with Ḡ(v) <= u
        if u >= 1.0 {
            return self.first();
        }
        let m = self.nodes.len() - 1;
        if u < self.surv[m] {
            let t = self.tail.as_ref().expect("positive survival at last node implies a tail");
            return t.start * (u / t.surv_at).powf(1.0 / (1.0 - t.exponent));
        }
        let i = self.surv.partition_point(|&s| s > u).saturating_sub(1).min(m - 1);
        if self.dens[i] == 0.0 {
            return self.nodes[i];
        }
        (self.nodes[i] + (self.surv[i] - u) / self.dens[i]).min(self.nodes[i + 1])
    }

    fn tail_integral_of_survival(&self) -> f64 {
        match &self.tail {
            Some(t) if t.exponent > 2.0 + TAIL_EXPONENT_TOL => t.surv_at * t.start / (t.exponent - 2.0),
            Some(_) => f64::INFINITY,
            None => 0.0,
        }
    }

    fn mean(&self) -> f64 {
        let head: f64 = self.first()
            + self
                .nodes
                .windows(2)
                .zip(self.surv.windows(2))
                .map(|(v, s)| 0.5 * (s[0] + s[1]) * (v[1] - v[0]))
                .sum::<f64>();
        head + self.tail_integral_of_survival()
    }

    /// `∫ v² g²(v) / Ḡ(v) dv`, cell by cell.
    fn c2_integral(&self) -> f64 {
        let (x, w) = gauss_legendre(21);
        let mut total = 0.0;
        for i in 0..self.dens.len() {
            let (a, b) = (self.nodes[i], self.nodes[i + 1]);
            let (sa, sb, c) = (self.surv[i], self.surv[i + 1], self.dens[i]);
            if c == 0.0 {
                continue;
            }
            if sb <= 0.0 {
                return f64::INFINITY;
            }
            if sb > 0.5 * sa {
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                total += half
                    * x.iter()
                        .zip(&w)
                        .map(|(xi, wi)| {
                            let v = mid + half * xi;
                            wi * v * v * c * c / (sa - c * (v - a))
                        })
                        .sum::<f64>();
            } else {
                let alpha = sa + c * a;
                total += (alpha * alpha * (sa / sb).ln() - 2.0 * alpha * (sa - sb) + 0.5 * (sa * sa - sb * sb)) / c;
            }
        }
        if let Some(t) = &self.tail {
            total += (t.exponent - 1.0).powi(2) * self.tail_integral_of_survival();
        }
        total
    }

    /// Draw from the length-biased law `v g(v) / E V` by inverting its CDF.
    fn length_biased_quantile(&self, u: f64) -> f64 {
        let tail_mass = match &self.tail {
            Some(t) => (t.exponent - 1.0) * self.tail_integral_of_survival(),
            None => 0.0,
        };
        let total = self.lb_cumulative.last().copied().unwrap_or(0.0) + tail_mass;
        let target = u * total;
        let i = self.lb_cumulative.partition_point(|&c| c < target);
        if i < self.dens.len() {
            let before = if i == 0 { 0.0 } else { self.lb_cumulative[i - 1] };
            let a = self.nodes[i];
            // c/2 (v² - a²) = target - before
            let v = (a * a + 2.0 * (target - before) / self.dens[i]).sqrt();
            return v.min(self.nodes[i + 1]);
        }
        match &self.tail {
            Some(t) => {
                let beyond = (total - target).max(f64::MIN_POSITIVE);
                t.start * (beyond / tail_mass).powf(1.0 / (2.0 - t.exponent))
            }
            None => self.last(),
        }
    }
}

/// The baseline law with cached moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaselineKind", into = "BaselineKind")]
pub struct BaselineModel {
    kind: BaselineKind,
    table: Option<TabulatedLaw>,
    mean_v: f64,
    c2: f64,
}

impl From<BaselineModel> for BaselineKind {
    fn from(b: BaselineModel) -> Self {
        b.kind
    }
}

impl TryFrom<BaselineKind> for BaselineModel {
    type Error = Error;
    fn try_from(kind: BaselineKind) -> Result<Self> {
        BaselineModel::new(kind)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be positive and finite, got {v}")))
    }
}

impl BaselineModel {
    pub fn new(kind: BaselineKind) -> Result<Self> {
        let mut table = None;
        match &kind {
            BaselineKind::Exponential { rate } => positive("rate", *rate)?,
            BaselineKind::Weibull { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)?;
            }
            BaselineKind::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)?;
            }
            BaselineKind::Tabulated { grid } => table = Some(TabulatedLaw::new(grid)?),
        }
        let mut model = Self { kind, table, mean_v: f64::NAN, c2: f64::NAN };
        model.mean_v = model.closed_form_mean();
        model.c2 = model.compute_c2();
        Ok(model)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(BaselineKind::Exponential { rate })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Self::new(BaselineKind::Weibull { shape, scale })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(BaselineKind::Gamma { shape, rate })
    }

    pub fn tabulated(grid: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(BaselineKind::Tabulated { grid })
    }

    /// Tabulate a density on a log-spaced grid over `[lo, hi]`, with an
    /// extra node at 0 when `include_zero` is set.
    pub fn tabulate_log_spaced(
        density: impl Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        points: usize,
        include_zero: bool,
    ) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && points >= 2) {
            return Err(Error::InvalidModel("log-spaced grid needs 0 < lo < hi and >= 2 points".into()));
        }
        let ratio = (hi / lo).ln() / (points - 1) as f64;
        let mut grid = Vec::with_capacity(points + 1);
        if include_zero {
            grid.push((0.0, density(0.0)));
        }
        grid.extend((0..points).map(|i| {
            let v = lo * (ratio * i as f64).exp();
            (v, density(v))
        }));
        Self::tabulated(grid)
    }

    pub fn kind(&self) -> &BaselineKind {
        &self.kind
    }

    /// `E_g V` (may be infinite for heavy tabulated tails).
    pub fn mean_v(&self) -> f64 {
        self.mean_v
    }

    /// `∫ v² g²(v)/Ḡ(v) dv`; finiteness is condition (C2).
    pub fn c2_integral(&self) -> f64 {
        self.c2
    }

    /// `I₁ = E(Yλ(Y))² = c2 / E V`.
    pub fn i1(&self) -> f64 {
        self.c2 / self.mean_v
    }

    fn closed_form_mean(&self) -> f64 {
        match &self.kind {
            BaselineKind::Exponential { rate } => 1.0 / rate,
            BaselineKind::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
            BaselineKind::Gamma { shape, rate } => shape / rate,
            BaselineKind::Tabulated { .. } => self.table.as_ref().unwrap().mean(),
        }
    }

    fn compute_c2(&self) -> f64 {
        match &self.kind {
            BaselineKind::Exponential { rate } => 2.0 / rate,
            // ∫ v² λ g = E[V² λ(V)] = k E[(V/s)^k V]·... reduces to s (k+1) Γ(1+1/k)
            BaselineKind::Weibull { shape, scale } => scale * (shape + 1.0) * gamma(1.0 + 1.0 / shape),
            BaselineKind::Gamma { .. } => {
                let q = Quadrature::default();
                q.integrate_to_infinity(|v| v * v * self.density_times_hazard(v), 0.0, self.mean_v)
                    .map(|r| r.value)
                    .unwrap_or(f64::INFINITY)
            }
            BaselineKind::Tabulated { .. } => self.table.as_ref().unwrap().c2_integral(),
        }
    }

    /// Density `g(v)`; zero for `v < 0`.
    pub fn density(&self, v: f64) -> f64 {
        if v < 0.0 {
            return 0.0;
        }
        match &self.kind {
            BaselineKind::Exponential { rate } => rate * (-rate * v).exp(),
            BaselineKind::Weibull { shape, scale } => {
                let u = v / scale;
                if v == 0.0 && *shape < 1.0 {
                    return f64::INFINITY;
                }
                shape / scale * u.powf(shape - 1.0) * (-u.powf(*shape)).exp()
            }
            BaselineKind::Gamma { shape, rate } => {
                if v == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => *rate,
                        _ => 0.0,
                    };
                }
                (shape * rate.ln() + (shape - 1.0) * v.ln() - rate * v - statrs::function::gamma::ln_gamma(*shape))
                    .exp()
            }
            BaselineKind::Tabulated { .. } => self.table.as_ref().unwrap().density(v),
        }
    }

    /// Survival function `Ḡ(v)`; one for `v <= 0`.
    pub fn survival(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 1.0;
        }
        match &self.kind {
            BaselineKind::Exponential { rate } => (-rate * v).exp(),
            BaselineKind::Weibull { shape, scale } => (-(v / scale).powf(*shape)).exp(),
            BaselineKind::Gamma { shape, rate } => gamma_ur(*shape, rate * v),
            BaselineKind::Tabulated { .. } => self.table.as_ref().unwrap().survival(v),
        }
    }

    /// Hazard `λ(v) = g(v)/Ḡ(v)`; a domain error where `Ḡ(v) = 0`.
    pub fn hazard(&self, v: f64) -> Result<f64> {
        if v < 0.0 {
            return Err(Error::Domain(format!("hazard undefined at negative time {v}")));
        }
        match &self.kind {
            BaselineKind::Exponential { rate } => Ok(*rate),
            BaselineKind::Weibull { shape, scale } => Ok(shape / scale * (v / scale).powf(shape - 1.0)),
            _ => {
                let s = self.survival(v);
                if s <= 0.0 {
                    Err(Error::Domain(format!("survival function vanishes at {v}")))
                } else {
                    Ok(self.density(v) / s)
                }
            }
        }
    }

    /// `g(v) λ(v) = g²/Ḡ`, zero where `Ḡ` vanishes.
    pub fn density_times_hazard(&self, v: f64) -> f64 {
        match self.hazard(v) {
            Ok(l) => {
                let g = self.density(v);
                if g == 0.0 {
                    0.0
                } else {
                    g * l
                }
            }
            Err(_) => 0.0,
        }
    }

    /// Breakpoints of the support for quadrature: `[0, ..nodes..]` and whether
    /// the support extends to infinity past the last one.
    pub fn support_partition(&self) -> (Vec<f64>, bool) {
        match &self.table {
            Some(t) => {
                let mut nodes = Vec::with_capacity(t.nodes.len() + 1);
                if t.first() > 0.0 {
                    nodes.push(0.0);
                }
                nodes.extend_from_slice(&t.nodes);
                (nodes, t.tail.is_some())
            }
            None => (vec![0.0], true),
        }
    }

    /// Integrate `f` over the support of `G` (and of `g_Y`).
    pub fn integrate(&self, q: &Quadrature, f: impl Fn(f64) -> f64, label: &str) -> Result<f64> {
        let (breaks, infinite) = self.support_partition();
        let scale = match &self.table {
            Some(t) => t.last().max(1e-300),
            None => self.mean_v,
        };
        let r = if infinite {
            q.integrate_partitioned_to_infinity(f, &breaks, scale)
        } else {
            q.integrate_partitioned(f, &breaks)
        };
        r.map(|r| r.value).map_err(|e| e.named(label))
    }

    /// Last point of a bounded support, if any.
    pub fn support_end(&self) -> Option<f64> {
        match &self.table {
            Some(t) if t.tail.is_none() => Some(t.last()),
            _ => None,
        }
    }

    /// Draw `V ~ g`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            BaselineKind::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            BaselineKind::Weibull { shape, scale } => {
                let e: f64 = Exp::new(1.0).unwrap().sample(rng);
                scale * e.powf(1.0 / shape)
            }
            BaselineKind::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate).unwrap().sample(rng),
            BaselineKind::Tabulated { .. } => {
                let u = 1.0 - rng.random::<f64>();
                self.table.as_ref().unwrap().quantile_of_survival(u)
            }
        }
    }

    /// Draw from the length-biased law `v g(v) / E_g V`.
    ///
    /// Closed forms: Exponential(r) → Gamma(2, r); Gamma(a, r) → Gamma(a+1, r);
    /// Weibull(k, s) → s·G^{1/k} with G ~ Gamma(1 + 1/k, 1). Tabulated laws
    /// invert the length-biased CDF.
    pub fn sample_length_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            BaselineKind::Exponential { rate } => Gamma::new(2.0, 1.0 / rate).unwrap().sample(rng),
            BaselineKind::Gamma { shape, rate } => Gamma::new(shape + 1.0, 1.0 / rate).unwrap().sample(rng),
            BaselineKind::Weibull { shape, scale } => {
                let g: f64 = Gamma::new(1.0 + 1.0 / shape, 1.0).unwrap().sample(rng);
                scale * g.powf(1.0 / shape)
            }
            BaselineKind::Tabulated { .. } => {
                let u = rng.random::<f64>();
                self.table.as_ref().unwrap().length_biased_quantile(u)
            }
        }
    }
}
