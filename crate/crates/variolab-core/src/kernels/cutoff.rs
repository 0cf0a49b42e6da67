//! The smooth cutoff χ, the kernels derived from it, the dyadic partition of
//! unity and the two kernel decompositions.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{samples_from_hat, HatFn, Kernel1D, KernelGrid};
use crate::error::{Result, VarioError};
use crate::numerics::{gauss_legendre, integrate, pairwise_sum};

fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

struct StepTable {
    cumulative: Vec<f64>,
    total: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const STEP_CELLS: usize = 1024;

impl StepTable {
    fn integral(&self, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * bump(c + r * x);
        }
        s * r
    }
}

fn step_table() -> &'static StepTable {
    static TABLE: OnceLock<StepTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(16);
        let mut t = StepTable { cumulative: vec![0.0; STEP_CELLS + 1], total: 0.0, nodes, weights };
        let dx = 2.0 / STEP_CELLS as f64;
        for c in 0..STEP_CELLS {
            let a = -1.0 + c as f64 * dx;
            t.cumulative[c + 1] = t.cumulative[c] + t.integral(a, a + dx);
        }
        t.total = t.cumulative[STEP_CELLS];
        t
    })
}

/// C^∞ step: 0 for `u <= 0`, 1 for `u >= 1`, obtained by normalized
/// integration of `exp(-1/(1-x²))` over `[-1, 2u-1]`. Satisfies
/// `S(u) + S(1-u) = 1`; the upper half is evaluated through that symmetry.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    if u > 0.5 {
        return 1.0 - smooth_step(1.0 - u);
    }
    let t = step_table();
    let y = 2.0 * u - 1.0;
    let dx = 2.0 / STEP_CELLS as f64;
    let cell = (((y + 1.0) / dx).floor() as usize).min(STEP_CELLS - 1);
    let start = -1.0 + cell as f64 * dx;
    (t.cumulative[cell] + t.integral(start, y)) / t.total
}

/// Cutoff transform `χ̂(ξ) = S(2 - 2|ξ|)²`: equal to 1 on `[-1/2, 1/2]`,
/// zero outside `(-1, 1)`, decreasing in `|ξ|` in between.
pub fn chi_hat(xi: f64) -> f64 {
    let b = smooth_step(2.0 - 2.0 * xi.abs());
    b * b
}

/// `θ̂(ξ) = χ̂(ξ) - χ̂(2ξ)`, supported in `1/4 <= |ξ| <= 1`.
pub fn theta_hat(xi: f64) -> f64 {
    chi_hat(xi) - chi_hat(2.0 * xi)
}

/// `χ̂(ξ/4) - χ̂(16ξ)`, evaluated without cancellation where `χ̂(ξ/4) = 1`.
/// Errors if the difference is below `-1e-12`.
pub fn omega_hat_sq(xi: f64) -> Result<f64> {
    let outer = chi_hat(0.25 * xi);
    let v = if outer == 1.0 {
        let u = 2.0 - 32.0 * xi.abs();
        let s = smooth_step(u);
        smooth_step(1.0 - u) * (1.0 + s)
    } else {
        outer - chi_hat(16.0 * xi)
    };
    if v < -1e-12 {
        return Err(VarioError::Construction(format!("negative value {v} under the square root at ξ = {xi}")));
    }
    Ok(v.max(0.0))
}

fn real_hat(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> HatFn {
    Arc::new(move |xi| Complex64::new(f(xi), 0.0))
}

/// Samples the cutoff χ on `grid` by inverse transform.
pub fn build_chi(grid: KernelGrid) -> Result<Kernel1D> {
    Kernel1D::from_hat("chi", grid, real_hat(chi_hat), vec![(-1.0, 1.0)])
}

/// θ, ω and the primitive θ̃ built from χ.
#[derive(Clone, Debug)]
pub struct KernelFamily {
    pub chi: Kernel1D,
    pub theta: Kernel1D,
    pub omega: Kernel1D,
    pub theta_primitive: Kernel1D,
}

const THETA_SUPPORT: [(f64, f64); 2] = [(-1.0, -0.25), (0.25, 1.0)];

/// Grid for ω: its transform reaches down to `|ξ| = 2^-5`, so ω spreads over
/// hundreds of units while its top frequency 4 allows a coarse spacing.
pub const OMEGA_GRID: KernelGrid = KernelGrid { spacing: 1.0 / 16.0, radius: 4096.0 };

pub fn derive_family(chi: &Kernel1D) -> Result<KernelFamily> {
    for xi in [0.0, 0.3, 0.6, 0.75, 0.9, 1.2] {
        if (chi.hat(xi).re - chi_hat(xi)).abs() > 1e-14 {
            return Err(VarioError::Precondition("derive_family needs the cutoff from build_chi".into()));
        }
    }
    // θ contains χ(s/2), whose slow tail needs a wider window than χ itself
    let grid = KernelGrid::new(chi.grid().spacing, 4.0 * chi.grid().radius)?;
    let theta = Kernel1D::from_hat("theta", grid, real_hat(theta_hat), THETA_SUPPORT.to_vec())?;

    let n = OMEGA_GRID.intervals()?;
    let len = (4 * (n + 1)).next_power_of_two();
    let dxi = 1.0 / (len as f64 * OMEGA_GRID.spacing);
    for m in 0..len / 2 {
        omega_hat_sq(m as f64 * dxi)?;
    }
    let omega_hat: HatFn = Arc::new(|xi| Complex64::new(omega_hat_sq(xi).unwrap_or(0.0).sqrt(), 0.0));
    let omega = Kernel1D::from_hat(
        "omega",
        OMEGA_GRID,
        omega_hat,
        vec![(-4.0, -1.0 / 32.0), (1.0 / 32.0, 4.0)],
    )?;

    let prim_hat: HatFn = Arc::new(|xi| {
        if xi == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -theta_hat(xi) / (2.0 * PI * xi))
        }
    });
    let theta_primitive = Kernel1D::from_hat("theta_primitive", grid, prim_hat, THETA_SUPPORT.to_vec())?;
    Ok(KernelFamily { chi: chi.clone(), theta, omega, theta_primitive })
}

impl KernelFamily {
    /// `ψ(s) = φ(s) - 2φ(2s)` on the grid of φ. The declared support is the
    /// union of the supports of `φ̂(ξ)` and `φ̂(ξ/2)`, except for the cutoff
    /// itself where the cancellation on `|ξ| <= 1/2` is known exactly.
    pub fn psi_of(&self, phi: &Kernel1D) -> Result<Kernel1D> {
        let grid = phi.grid();
        let n = grid.intervals()?;
        let c = (n / 2) as i64;
        let src = phi.samples();
        let samples: Vec<f64> = (0..=n as i64)
            .map(|i| {
                let j = c + 2 * (i - c);
                let doubled = if (0..=n as i64).contains(&j) { src[j as usize] } else { 0.0 };
                src[i as usize] - 2.0 * doubled
            })
            .collect();
        let support = if phi.name() == "chi" {
            vec![(-2.0, -0.5), (0.5, 2.0)]
        } else {
            let mut s: Vec<(f64, f64)> = phi.fourier_support().to_vec();
            s.extend(phi.fourier_support().iter().map(|&(a, b)| (2.0 * a, 2.0 * b)));
            s
        };
        let mut psi = Kernel1D::from_samples(format!("psi[{}]", phi.name()), grid, samples, support)?;
        if phi.has_closed_form_hat() {
            let phi2 = phi.clone();
            psi = psi.with_hat(Arc::new(move |xi| phi2.hat(xi) - phi2.hat(0.5 * xi)));
        }
        Ok(psi)
    }

    /// `ϑ^{(k)}(s) = 2^k θ̃(s - 2^{-k})`; the shift must be a whole number of
    /// grid spacings.
    pub fn shifted_vartheta(&self, k: i32) -> Result<Kernel1D> {
        let base = self.theta_primitive.grid();
        let shift = 2f64.powi(-k);
        let steps = shift / base.spacing;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(VarioError::Domain(format!("shift 2^{} is not on the grid", -k)));
        }
        let steps = steps.round() as i64;
        let grid = KernelGrid::new(base.spacing, base.radius + shift.ceil().max(base.spacing))?;
        let n = grid.intervals()?;
        let src = self.theta_primitive.samples();
        let src_n = src.len() as i64;
        let src_c = (src_n - 1) / 2;
        let c = (n / 2) as i64;
        let scale = 2f64.powi(k);
        let samples: Vec<f64> = (0..=n as i64)
            .map(|i| {
                let j = src_c + (i - c) - steps;
                if (0..src_n).contains(&j) {
                    scale * src[j as usize]
                } else {
                    0.0
                }
            })
            .collect();
        let hat: HatFn = Arc::new(move |xi| {
            if xi == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let prim = Complex64::new(0.0, -theta_hat(xi) / (2.0 * PI * xi));
            prim * Complex64::from_polar(scale, -2.0 * PI * xi * shift)
        });
        Ok(Kernel1D::from_samples(format!("vartheta[{k}]"), grid, samples, THETA_SUPPORT.to_vec())?.with_hat(hat))
    }
}

/// `Σ_{|k| <= K} f(2^k ξ)`.
pub fn partition_sum(f: impl Fn(f64) -> f64, xi: f64, k_max: u32) -> f64 {
    let terms: Vec<f64> = (-(k_max as i32)..=k_max as i32).map(|k| f(2f64.powi(k) * xi)).collect();
    pairwise_sum(&terms)
}

/// Largest deviation of `Σ_{|k|<=K} θ̂(2^k ξ)` from 1 over `points`
/// log-spaced frequencies of `xi_range`.
pub fn verify_partition_of_unity(
    theta: &Kernel1D,
    xi_range: (f64, f64),
    k_max: u32,
    points: usize,
) -> Result<f64> {
    let (lo, hi) = xi_range;
    if !(lo < hi) || (lo <= 0.0 && hi >= 0.0) {
        return Err(VarioError::Domain(format!(
            "frequency range [{lo}, {hi}] must be ordered and exclude 0"
        )));
    }
    let sign = if lo > 0.0 { 1.0 } else { -1.0 };
    let (a, b) = if sign > 0.0 { (lo, hi) } else { (-hi, -lo) };
    let points = points.max(2);
    let mut worst = 0.0f64;
    for i in 0..points {
        let xi = sign * a * (b / a).powf(i as f64 / (points - 1) as f64);
        let s = partition_sum(|x| theta.hat(x).re, xi, k_max);
        worst = worst.max((s - 1.0).abs());
    }
    Ok(worst)
}

/// Output of [`decompose_schwartz`].
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    /// `c = φ̂(0)`.
    pub c: f64,
    /// The cutoff χ; the constant part is `c χ`.
    pub constant_kernel: Kernel1D,
    /// `(k, (φ - cχ) * θ_{2^k})` for `|k| <= K`.
    pub components: Vec<(i32, Kernel1D)>,
    /// L² distance between φ and the reconstruction using `|k| <= K'`, for
    /// `K' = 0..=K`.
    pub residual_l2: Vec<f64>,
}

/// Helper for transforms on the DFT frequency grid of a kernel grid.
struct SpectralGrid {
    n: usize,
    len: usize,
    h: f64,
}

impl SpectralGrid {
    fn new(grid: KernelGrid) -> Result<Self> {
        let n = grid.intervals()?;
        Ok(SpectralGrid { n, len: (2 * (n + 1)).next_power_of_two(), h: grid.spacing })
    }

    fn freq(&self, m: usize) -> f64 {
        let q = if m < self.len / 2 { m as f64 } else { m as f64 - self.len as f64 };
        q / (self.len as f64 * self.h)
    }

    fn forward(&self, samples: &[f64]) -> Vec<Complex64> {
        let half = (self.n / 2) as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (i, &v) in samples.iter().enumerate() {
            let j = (i as i64 - half).rem_euclid(self.len as i64) as usize;
            buf[j] = Complex64::new(v * self.h, 0.0);
        }
        FftPlanner::new().plan_fft_forward(self.len).process(&mut buf);
        buf
    }

    fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        FftPlanner::new().plan_fft_inverse(self.len).process(&mut spec);
        let half = (self.n / 2) as i64;
        let norm = 1.0 / (self.len as f64 * self.h);
        (0..=self.n)
            .map(|i| spec[(i as i64 - half).rem_euclid(self.len as i64) as usize].re * norm)
            .collect()
    }
}

fn l2_distance(a: &[f64], b: &[f64], h: f64) -> f64 {
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
    (pairwise_sum(&sq) * h).sqrt()
}

/// Splits φ into `cχ` plus dyadic band components `(φ - cχ) * θ_{2^k}`,
/// `|k| <= K`, with the band filters applied on the FFT grid of φ.
pub fn decompose_schwartz(phi: &Kernel1D, family: &KernelFamily, k_max: u32) -> Result<DecompositionResult> {
    let grid = phi.grid();
    if grid != family.chi.grid() {
        return Err(VarioError::Precondition(format!(
            "φ grid {:?} must match the cutoff grid {:?}",
            grid,
            family.chi.grid()
        )));
    }
    let spec = SpectralGrid::new(grid)?;
    let c = phi.hat(0.0).re;
    let diff: Vec<f64> = phi.samples().iter().zip(family.chi.samples()).map(|(p, x)| p - c * x).collect();
    let remainder = spec.forward(&diff);
    let mut components = Vec::new();
    for k in -(k_max as i32)..=k_max as i32 {
        let scale = 2f64.powi(k);
        let band: Vec<Complex64> =
            (0..spec.len).map(|m| remainder[m] * theta_hat(scale * spec.freq(m))).collect();
        let lo = 0.25 / scale;
        let hi = 1.0 / scale;
        let kernel = Kernel1D::from_samples(
            format!("band[{k}]"),
            grid,
            spec.inverse(band),
            vec![(-hi, -lo), (lo, hi)],
        )?;
        components.push((k, kernel));
    }
    let base: Vec<f64> = family.chi.samples().iter().map(|v| c * v).collect();
    let mut residual_l2 = Vec::with_capacity(k_max as usize + 1);
    for level in 0..=k_max as i32 {
        let mut rec = base.clone();
        for (k, comp) in &components {
            if k.abs() <= level {
                for (r, v) in rec.iter_mut().zip(comp.samples()) {
                    *r += v;
                }
            }
        }
        residual_l2.push(l2_distance(phi.samples(), &rec, grid.spacing));
    }
    Ok(DecompositionResult { c, constant_kernel: family.chi.clone(), components, residual_l2 })
}

/// Output of [`decompose_indicator`], sampled on a fine uniform grid.
#[derive(Debug, Clone)]
pub struct IndicatorDecomposition {
    pub grid: KernelGrid,
    /// `1_{[0,1)}` with the value 1/2 at both jumps.
    pub target: Vec<f64>,
    /// `1_{[0,1)} * χ`.
    pub smooth: Vec<f64>,
    /// `(k, 1_{[0,1)} * θ_{2^k})` for `k = -1, …, -K`, via `θ̃(2^{-k}s) - θ̃(2^{-k}(s-1))`.
    pub bands: Vec<(i32, Vec<f64>)>,
    /// L² residual of the reconstruction with the first `K'` bands, `K' = 0..=K`.
    pub residual_l2: Vec<f64>,
    /// Sup-norm gap between a direct quadrature of `1_{[0,1)} * θ_{2^k}` and
    /// `2^k θ̃_{2^k} - ϑ_{2^k}` built from the shifted kernel, for the bands
    /// whose shifted kernel fits in memory.
    pub band_identity_residual: Vec<(i32, f64)>,
}

/// Smooth part plus `K` dyadic bands of the unit-interval indicator.
pub fn decompose_indicator(family: &KernelFamily, k_max: u32, grid: KernelGrid) -> Result<IndicatorDecomposition> {
    if k_max < 1 {
        return Err(VarioError::Domain("decompose_indicator needs K >= 1".into()));
    }
    let n = grid.intervals()?;
    let pts: Vec<f64> = (0..=n).map(|i| grid.point(i)).collect();
    let target: Vec<f64> = pts
        .iter()
        .map(|&s| if s == 0.0 || s == 1.0 { 0.5 } else if s > 0.0 && s < 1.0 { 1.0 } else { 0.0 })
        .collect();
    let smooth_hat = |xi: f64| {
        let box_hat = if xi == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar((PI * xi).sin() / (PI * xi), -PI * xi)
        };
        box_hat * chi_hat(xi)
    };
    let smooth = samples_from_hat(&smooth_hat, &grid, 4)?;
    let prim = &family.theta_primitive;
    let mut bands = Vec::new();
    for j in 1..=k_max as i32 {
        let k = -j;
        let dil = 2f64.powi(j);
        let band: Vec<f64> = pts.iter().map(|&s| prim.eval(dil * s) - prim.eval(dil * (s - 1.0))).collect();
        bands.push((k, band));
    }
    let mut residual_l2 = Vec::new();
    let mut rec = smooth.clone();
    residual_l2.push(l2_distance(&target, &rec, grid.spacing));
    for (_, band) in &bands {
        for (r, b) in rec.iter_mut().zip(band) {
            *r += b;
        }
        residual_l2.push(l2_distance(&target, &rec, grid.spacing));
    }

    let theta = &family.theta;
    let theta_r = theta.grid().radius;
    let mut band_identity_residual = Vec::new();
    let stride = (n / 128).max(1);
    for j in 1..=(k_max as i32).min(8) {
        let k = -j;
        let dil = 2f64.powi(j);
        let vartheta = family.shifted_vartheta(k)?;
        let mut worst = 0.0f64;
        for i in (0..=n).step_by(stride) {
            let s = pts[i];
            let a = (dil * (s - 1.0)).max(-theta_r);
            let b = (dil * s).min(theta_r);
            let lhs = if a < b { integrate(|u| theta.eval(u), a, b, 1e-14, 1e-13)?.value } else { 0.0 };
            let rhs = prim.eval(dil * s) - dil * vartheta.eval(dil * s);
            worst = worst.max((lhs - rhs).abs());
        }
        band_identity_residual.push((k, worst));
    }
    Ok(IndicatorDecomposition { grid, target, smooth, bands, residual_l2, band_identity_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_grid() -> KernelGrid {
        KernelGrid::new(1.0 / 256.0, 512.0).unwrap()
    }

    #[test]
    fn step_properties() {
        assert_eq!(smooth_step(-0.1), 0.0);
        assert_eq!(smooth_step(1.3), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        for u in [0.01, 0.2, 0.37, 0.8] {
            assert!((smooth_step(u) + smooth_step(1.0 - u) - 1.0).abs() < 1e-15);
        }
        let mut prev = 0.0;
        for i in 0..=200 {
            let v = smooth_step(i as f64 / 200.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn chi_hat_values() {
        assert_eq!(chi_hat(0.0), 1.0);
        assert_eq!(chi_hat(0.5), 1.0);
        assert_eq!(chi_hat(-0.5), 1.0);
        assert_eq!(chi_hat(1.0), 0.0);
        assert_eq!(chi_hat(-1.0), 0.0);
        for xi in [0.1, 0.55, 0.7, 0.93, 2.0] {
            assert_eq!(chi_hat(xi), chi_hat(-xi));
        }
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = chi_hat(0.5 + 0.005 * i as f64);
            assert!(v <= prev && v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn chi_mass_is_one() {
        let chi = build_chi(KernelGrid::default()).unwrap();
        assert!((chi.mass() - 1.0).abs() < 1e-8, "mass {}", chi.mass());
        assert!(chi.support_leakage(1e-3).unwrap() < 1e-6);
    }

    #[test]
    fn family_supports_and_primitive() {
        let fam = derive_family(&build_chi(KernelGrid::default()).unwrap()).unwrap();
        for k in [&fam.chi, &fam.theta, &fam.omega, &fam.theta_primitive] {
            let leak = k.support_leakage(1e-3).unwrap();
            assert!(leak < 1e-6, "{} leaks {leak}", k.name());
        }
        for xi in [0.0, 0.1, 0.249, 1.001, 1.5, -0.2, -1.2] {
            assert!(theta_hat(xi).abs() == 0.0, "θ̂({xi})");
        }
        assert!(fam.theta.mass().abs() < 1e-10);
        let edge = fam.theta_primitive.samples().last().unwrap().abs();
        assert!(edge <= 1e-6, "θ̃(R) = {edge}");
        for i in 0..=400 {
            let xi = -5.0 + 0.025 * i as f64;
            let w = fam.omega.hat(xi).re;
            let target = chi_hat(0.25 * xi) - chi_hat(16.0 * xi);
            assert!((w * w - target).abs() < 1e-10, "ξ = {xi}");
        }
        assert!(derive_family(&fam.theta).is_err());
    }

    #[test]
    fn sampled_transform_matches_closed_form() {
        let fam = derive_family(&build_chi(KernelGrid::default()).unwrap()).unwrap();
        for xi in [0.0, 0.3, 0.62, 0.8, 0.99] {
            let a = fam.theta.hat_from_samples(xi);
            assert!((a.re - theta_hat(xi)).abs() < 1e-9 && a.im.abs() < 1e-9, "ξ = {xi}");
        }
    }

    #[test]
    fn partition_of_unity() {
        let fam = derive_family(&build_chi(KernelGrid::default()).unwrap()).unwrap();
        let dev = verify_partition_of_unity(&fam.theta, (2f64.powi(-6), 2f64.powi(6)), 12, 2001).unwrap();
        assert!(dev <= 1e-8, "deviation {dev}");
        let short = verify_partition_of_unity(&fam.theta, (2f64.powi(-6), 2f64.powi(6)), 2, 2001).unwrap();
        assert!(short > dev);
        assert!(verify_partition_of_unity(&fam.theta, (-1.0, 1.0), 12, 10).is_err());
        for i in 0..500 {
            let xi = 0.013 * (1.0 + i as f64);
            let nonzero = (-20..=20).filter(|&k| theta_hat(2f64.powi(k) * xi) != 0.0).count();
            assert!(nonzero <= 3, "ξ = {xi}: {nonzero}");
        }
    }

    #[test]
    fn psi_of_chi_has_band_support() {
        let fam = derive_family(&build_chi(KernelGrid::default()).unwrap()).unwrap();
        let psi = fam.psi_of(&fam.chi).unwrap();
        assert!(psi.mass().abs() < 1e-8);
        assert!(psi.support_leakage(1e-3).unwrap() < 1e-6);
        assert!((psi.hat(0.25).re).abs() < 1e-15);
    }

    #[test]
    fn vartheta_support_and_shift() {
        let fam = derive_family(&build_chi(test_grid()).unwrap()).unwrap();
        let v = fam.shifted_vartheta(-3).unwrap();
        assert!(v.support_leakage(1e-3).unwrap() < 1e-6);
        for s in [-3.0, 0.5, 8.0, 11.25] {
            let expect = 0.125 * fam.theta_primitive.eval(s - 8.0);
            assert!((v.eval(s) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn schwartz_decomposition_of_chi_and_gaussian() {
        // wide window so the truncated tail of χ does not leak into the bands
        let grid = KernelGrid::new(1.0 / 256.0, 256.0).unwrap();
        let fam = derive_family(&build_chi(grid).unwrap()).unwrap();
        let res = decompose_schwartz(&fam.chi, &fam, 4).unwrap();
        assert!((res.c - 1.0).abs() < 1e-10);
        for (_, comp) in &res.components {
            assert!(comp.l2_norm() <= 1e-8);
        }
        let gauss = Kernel1D::from_fn("gauss", grid, |s| (-PI * s * s).exp()).unwrap();
        let res = decompose_schwartz(&gauss, &fam, 10).unwrap();
        assert!((res.c - 1.0).abs() < 1e-10);
        let norm = gauss.l2_norm();
        assert!(*res.residual_l2.last().unwrap() <= 1e-6 * norm, "{:?}", res.residual_l2);
        for w in res.residual_l2.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{:?}", res.residual_l2);
        }
        // wider bands (k >= 2) spread over the window edge and are excluded
        let visible = |k: i32, c: &Kernel1D| k <= 1 && c.l2_norm() >= 1e-6 * norm;
        for (_, comp) in res.components.iter().filter(|(k, c)| visible(*k, c)) {
            assert!(comp.support_leakage(1e-3).unwrap() <= 1e-6, "{}", comp.name());
        }
    }

    #[test]
    fn indicator_decomposition() {
        let fam = derive_family(&build_chi(KernelGrid::default()).unwrap()).unwrap();
        let grid = KernelGrid::new(2f64.powi(-12), 16.0).unwrap();
        let dec = decompose_indicator(&fam, 20, grid).unwrap();
        // bands far beyond the grid resolution only add rounding noise
        for w in dec.residual_l2.windows(2) {
            assert!(w[1] <= w[0] + 1e-14, "{:?}", dec.residual_l2);
        }
        assert!(*dec.residual_l2.last().unwrap() <= 1e-3, "{:?}", dec.residual_l2);
        let i = ((-10.0 + 16.0) / grid.spacing).round() as usize;
        let rec = dec.smooth[i] + dec.bands.iter().map(|(_, b)| b[i]).sum::<f64>();
        assert!(rec.abs() <= 1e-6, "{rec}");
        for (k, r) in &dec.band_identity_residual {
            assert!(*r <= 1e-9, "k = {k}: {r}");
        }
        assert!(decompose_indicator(&fam, 0, grid).is_err());
    }
}
