//! Summation, quadrature, interpolation and regression helpers shared by all modules.

use crate::error::{Result, VarioError};

/// Balanced-tree summation. Blocks of at most 8 terms are added left to right,
/// then partial sums are combined pairwise. The bit pattern depends only on the
/// input order and length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise summation of `f(x)` over a slice without allocating the mapped values.
pub fn pairwise_sum_map(xs: &[f64], f: &impl Fn(f64) -> f64) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += f(x);
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum_map(&xs[..mid], f) + pairwise_sum_map(&xs[mid..], f)
}

/// Plain left-to-right summation, kept as a reference for [`pairwise_sum`].
pub fn naive_sum(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, &x| acc + x)
}

/// Squared Euclidean distance with eight interleaved accumulators.
///
/// The lane layout is fixed, so the result is reproducible while still letting
/// the compiler vectorize the loop.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let base = c * 8;
        for lane in 0..8 {
            let d = a[base + lane] - b[base + lane];
            acc[lane] += d * d;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WK[7] * fc;
    let mut gauss = GK_WG[3] * fc;
    for i in 0..7 {
        let dx = r * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WK[i] * s;
        if i % 2 == 1 {
            gauss += GK_WG[i / 2] * s;
        }
    }
    (kron * r, ((kron - gauss) * r).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.
///
/// Bisects the interval with the largest error estimate until the total
/// estimate drops below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    const MAX_INTERVALS: usize = 20_000;
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0, intervals: 0 });
    }
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(VarioError::Numeric(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature { value, error, intervals: parts.len() });
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(VarioError::Numeric(format!(
                "quadrature on [{a}, {b}] did not converge: value {value}, error estimate {error} after {} intervals",
                parts.len()
            )));
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

/// Composite Gauss–Legendre rule: `panels` equal panels of `order` nodes each.
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let width = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let c = a + (p as f64 + 0.5) * width;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(c + 0.5 * width * xi);
                weights.push(0.5 * width * wi);
            }
        }
        CompositeRule { nodes, weights }
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).collect();
        pairwise_sum(&terms)
    }
}

/// Least-squares line through `(x, y)` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; NaN with fewer than three points.
    pub slope_se: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(VarioError::Domain(format!(
            "line fit needs at least two paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = naive_sum(x) / n;
    let my = naive_sum(y) / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(VarioError::Domain("line fit with constant abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let r = b - (intercept + slope * a);
        ss += r * r;
    }
    let slope_se = if x.len() > 2 { (ss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LineFit { slope, intercept, slope_se, rms_residual: (ss / n).sqrt(), points: x.len() })
}

/// Fit of `log y` against `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(VarioError::Domain("log-log fit needs strictly positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// Samples `y[i] = f(x0 + i*h)` with six-point Lagrange interpolation in between.
/// Evaluation outside the sampled range returns zero.
#[derive(Debug, Clone)]
pub struct UniformSamples {
    pub x0: f64,
    pub h: f64,
    pub y: Vec<f64>,
}

impl UniformSamples {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let u = (x - self.x0) / self.h;
        if !(u >= 0.0) || u > (n - 1) as f64 {
            return 0.0;
        }
        let iu = u.floor();
        let frac = u - iu;
        let i = iu as isize;
        if frac == 0.0 {
            return self.y[i as usize];
        }
        let start = (i - 2).clamp(0, n as isize - 6);
        let mut acc = 0.0;
        for a in 0..6 {
            let ia = start + a;
            let xa = ia as f64;
            let mut w = 1.0;
            for b in 0..6 {
                if a != b {
                    let xb = (start + b) as f64;
                    w *= (u - xb) / (xa - xb);
                }
            }
            acc += w * self.y[ia as usize];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(naive_sum(&xs), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn squared_distance_matches_loop() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.5).cos()).collect();
        let direct: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!((squared_distance(&a, &b) - direct).abs() < 1e-13 * direct);
    }

    #[test]
    fn adaptive_quadrature_on_known_integrals() {
        let q = integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-14, 1e-14).unwrap();
        assert!((q.value - (1f64.exp() - 1.0)).abs() < 1e-14);
        let q = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-13, 1e-13).unwrap();
        assert!((q.value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n = {n}");
            let deg = 2 * n - 1;
            let moment: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((moment - exact).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let fit = fit_line(&x, &y).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-13);
        assert!(fit.slope_se.abs() < 1e-12);
    }

    #[test]
    fn lagrange_interpolation_is_exact_for_quintics() {
        let s = UniformSamples {
            x0: -1.0,
            h: 0.25,
            y: (0..9).map(|i| {
                let x: f64 = -1.0 + 0.25 * i as f64;
                x.powi(5) - 2.0 * x * x + 1.0
            }).collect(),
        };
        for &x in &[-0.9f64, -0.13, 0.4, 0.97] {
            let exact = x.powi(5) - 2.0 * x * x + 1.0;
            assert!((s.eval(x) - exact).abs() < 1e-13, "x = {x}");
        }
        assert_eq!(s.eval(1.5), 0.0);
    }
}
