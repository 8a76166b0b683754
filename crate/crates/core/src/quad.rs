//! Adaptive Gauss–Legendre quadrature.
//!
//! Each panel is integrated with a 10-point and a 21-point Gauss–Legendre rule;
//! their difference is the panel error estimate. The panel with the largest
//! estimate is bisected until the total estimate drops below
//! `max(abs_tol, rel_tol * |I|)`. Exceeding the subdivision budget is an error.
//!
//! Semi-infinite ranges use the map `x = a + s * t / (1 - t)`, `t ∈ [0, 1)`.

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::Error;

const LOW_ORDER: usize = 10;
const HIGH_ORDER: usize = 21;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

struct Rules {
    low: (Vec<f64>, Vec<f64>),
    high: (Vec<f64>, Vec<f64>),
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| Rules { low: gauss_legendre(LOW_ORDER), high: gauss_legendre(HIGH_ORDER) })
}

fn apply_rule(rule: &(Vec<f64>, Vec<f64>), f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Quadrature failure before a label is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadFailure {
    pub estimate: f64,
    pub error: f64,
}

impl QuadFailure {
    /// Attach the name of the integral being evaluated.
    pub fn named(self, integral: &str) -> Error {
        Error::Quadrature { integral: integral.to_string(), estimate: self.estimate, error: self.error }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

/// Adaptive Gauss–Legendre integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-8, max_subdivisions: 60 }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

impl Quadrature {
    /// A tighter integrator used as an independent verification path.
    pub fn high_precision() -> Self {
        Self { abs_tol: 1e-13, rel_tol: 1e-12, max_subdivisions: 400 }
    }

    fn panel(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Panel {
        let r = rules();
        let lo = apply_rule(&r.low, f, a, b);
        let hi = apply_rule(&r.high, f, a, b);
        let error = if hi.is_finite() && lo.is_finite() { (hi - lo).abs() } else { f64::INFINITY };
        Panel { a, b, value: hi, error }
    }

    /// Integrate `f` over the partition given by the sorted `breaks`
    /// (at least two points). The subdivision budget is counted beyond the
    /// initial partition.
    pub fn integrate_partitioned(&self, f: impl Fn(f64) -> f64, breaks: &[f64]) -> Result<QuadResult, QuadFailure> {
        assert!(breaks.len() >= 2, "need at least one interval");
        let mut heap: BinaryHeap<Panel> =
            breaks.windows(2).filter(|w| w[1] > w[0]).map(|w| self.panel(&f, w[0], w[1])).collect();
        let mut subdivisions = 0;
        loop {
            let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
            let tol = self.abs_tol.max(self.rel_tol * value.abs());
            if error <= tol && value.is_finite() {
                return Ok(QuadResult { value, error, subdivisions });
            }
            if subdivisions >= self.max_subdivisions || !value.is_finite() {
                return Err(QuadFailure { estimate: value, error });
            }
            let worst = heap.pop().expect("nonempty partition");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                return Err(QuadFailure { estimate: value, error });
            }
            heap.push(self.panel(&f, worst.a, mid));
            heap.push(self.panel(&f, mid, worst.b));
            subdivisions += 1;
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<QuadResult, QuadFailure> {
        self.integrate_partitioned(f, &[a, b])
    }

    /// Integrate over `[a, ∞)`; `scale` sets where the map places its midpoint.
    pub fn integrate_to_infinity(&self, f: impl Fn(f64) -> f64, a: f64, scale: f64) -> Result<QuadResult, QuadFailure> {
        let g = |t: f64| {
            let one_minus = 1.0 - t;
            let x = a + scale * t / one_minus;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v * scale / (one_minus * one_minus)
            }
        };
        self.integrate_partitioned(g, &[0.0, 0.5, 1.0])
    }

    /// Integrate over the finite partition `breaks` and then over
    /// `[last break, ∞)`.
    pub fn integrate_partitioned_to_infinity(
        &self,
        f: impl Fn(f64) -> f64,
        breaks: &[f64],
        scale: f64,
    ) -> Result<QuadResult, QuadFailure> {
        let head = if breaks.len() >= 2 {
            self.integrate_partitioned(&f, breaks)?
        } else {
            QuadResult { value: 0.0, error: 0.0, subdivisions: 0 }
        };
        let last = *breaks.last().expect("at least one break");
        let tail = self.integrate_to_infinity(&f, last, scale)?;
        Ok(QuadResult {
            value: head.value + tail.value,
            error: head.error + tail.error,
            subdivisions: head.subdivisions + tail.subdivisions,
        })
    }
}

/// Fixed composite Gauss–Legendre on equal panels. Used where the integrand
/// is known to vary on a fixed length scale (kernel estimates).
pub fn composite_gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + 0.5 * width * xi)).sum();
        total += s * 0.5 * width;
    }
    total
}
