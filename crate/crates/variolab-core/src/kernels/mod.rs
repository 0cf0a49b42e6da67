//! One-variable kernels, cutoffs, decompositions and multiplier symbols.
//!
//! A [`Kernel1D`] stores samples on a symmetric uniform grid together with its
//! declared Fourier support and, when known, a closed-form transform. Transforms
//! use `f̂(ξ) = ∫ f(s) e^{-2πisξ} ds`; dilations are `f_t(s) = t^{-1} f(s/t)`.

mod cutoff;
mod envelope;
mod multiplier;
mod profile;
mod special;

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarioError};
use crate::fields::{GRID_MAGIC, GRID_VERSION};
use crate::numerics::UniformSamples;

pub use cutoff::{
    build_chi, chi_hat, decompose_indicator, decompose_schwartz, derive_family, omega_hat_sq,
    partition_sum, smooth_step, theta_hat, verify_partition_of_unity, DecompositionResult,
    IndicatorDecomposition, KernelFamily,
};
pub use envelope::{verify_envelope, EnvelopeForm, EnvelopeObject};
pub use multiplier::{
    eval_multiplier, multiplier_vartheta_hat, verify_symbol_bounds, MultiplierOptions,
    MultiplierSample, SymbolReport,
};
pub use profile::{Piece, Profile};
pub use special::{
    bessel_k, bessel_k_integral, bessel_k_series, gaussian_superposition, rho_hat, rho_hat_bessel,
    rho_hat_d1, rho_hat_d2, rho_hat_quadrature, sigma_tail_limit, RhoPath,
};

/// Closed-form Fourier transform attached to a kernel.
pub type HatFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Uniform symmetric sample grid `s_i = -R + i h`, `i = 0..=2R/h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub spacing: f64,
    pub radius: f64,
}

impl Default for KernelGrid {
    fn default() -> Self {
        KernelGrid { spacing: 1.0 / 1024.0, radius: 64.0 }
    }
}

impl KernelGrid {
    pub fn new(spacing: f64, radius: f64) -> Result<Self> {
        let g = KernelGrid { spacing, radius };
        g.intervals()?;
        Ok(g)
    }

    /// Number of grid intervals `2R/h`; must be an even integer.
    pub fn intervals(&self) -> Result<usize> {
        if !(self.spacing > 0.0) || !(self.radius > 0.0) {
            return Err(VarioError::InvalidValue(format!("bad kernel grid {self:?}")));
        }
        let n = 2.0 * self.radius / self.spacing;
        if (n - n.round()).abs() > 1e-9 || n.round() as usize % 2 != 0 {
            return Err(VarioError::InvalidValue(format!(
                "kernel grid radius {} is not a whole number of spacings {}",
                self.radius, self.spacing
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.spacing
    }
}

/// Decay envelope `|k(s)| <= constant * (1 + |s|)^{-lambda}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lambda: f64,
    pub constant: f64,
}

/// Sampled one-variable kernel.
#[derive(Clone)]
pub struct Kernel1D {
    name: String,
    grid: KernelGrid,
    table: UniformSamples,
    fourier_support: Vec<(f64, f64)>,
    envelope: Option<Envelope>,
    mass: f64,
    hat: Option<HatFn>,
}

impl fmt::Debug for Kernel1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel1D")
            .field("name", &self.name)
            .field("grid", &self.grid)
            .field("samples", &self.table.y.len())
            .field("fourier_support", &self.fourier_support)
            .field("envelope", &self.envelope)
            .field("mass", &self.mass)
            .field("closed_form_hat", &self.hat.is_some())
            .finish()
    }
}

fn trapezoid(samples: &[f64], h: f64) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    let inner = crate::numerics::pairwise_sum(samples);
    h * (inner - 0.5 * (samples[0] + samples[n - 1]))
}

impl Kernel1D {
    pub fn from_samples(
        name: impl Into<String>,
        grid: KernelGrid,
        samples: Vec<f64>,
        fourier_support: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let n = grid.intervals()?;
        if samples.len() != n + 1 {
            return Err(VarioError::Shape(format!(
                "kernel grid needs {} samples, got {}",
                n + 1,
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(VarioError::InvalidValue("kernel samples must be finite".into()));
        }
        let mass = trapezoid(&samples, grid.spacing);
        let table = UniformSamples { x0: -grid.radius, h: grid.spacing, y: samples };
        Ok(Kernel1D { name: name.into(), grid, table, fourier_support, envelope: None, mass, hat: None })
    }

    /// Samples a kernel from its transform by an oversampled inverse FFT.
    pub fn from_hat(
        name: impl Into<String>,
        grid: KernelGrid,
        hat: HatFn,
        fourier_support: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let samples = samples_from_hat(hat.as_ref(), &grid, 4)?;
        let mut k = Self::from_samples(name, grid, samples, fourier_support)?;
        k.hat = Some(hat);
        Ok(k)
    }

    pub fn from_fn(name: impl Into<String>, grid: KernelGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = grid.intervals()?;
        let samples = (0..=n).map(|i| f(grid.point(i))).collect();
        Self::from_samples(name, grid, samples, Vec::new())
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = Some(envelope);
        self
    }

    pub fn with_hat(mut self, hat: HatFn) -> Self {
        self.hat = Some(hat);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn grid(&self) -> KernelGrid {
        self.grid
    }
    pub fn samples(&self) -> &[f64] {
        &self.table.y
    }
    pub fn fourier_support(&self) -> &[(f64, f64)] {
        &self.fourier_support
    }
    pub fn envelope(&self) -> Option<Envelope> {
        self.envelope
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn has_closed_form_hat(&self) -> bool {
        self.hat.is_some()
    }

    /// Interpolated value; zero outside the sampled window.
    pub fn eval(&self, s: f64) -> f64 {
        self.table.eval(s)
    }

    /// Transform: closed form when attached, otherwise the trapezoid sum.
    pub fn hat(&self, xi: f64) -> Complex64 {
        match &self.hat {
            Some(h) => h(xi),
            None => self.hat_from_samples(xi),
        }
    }

    /// Trapezoid-rule transform of the samples.
    pub fn hat_from_samples(&self, xi: f64) -> Complex64 {
        let h = self.grid.spacing;
        let n = self.table.y.len();
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &v) in self.table.y.iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let phase = -2.0 * std::f64::consts::PI * self.grid.point(i) * xi;
            re += w * v * phase.cos();
            im += w * v * phase.sin();
        }
        Complex64::new(re * h, im * h)
    }

    /// L² norm by the trapezoid rule.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.table.y.iter().map(|v| v * v).collect();
        trapezoid(&sq, self.grid.spacing).sqrt()
    }

    /// L¹ norm by the trapezoid rule.
    pub fn l1_norm(&self) -> f64 {
        let abs: Vec<f64> = self.table.y.iter().map(|v| v.abs()).collect();
        trapezoid(&abs, self.grid.spacing)
    }

    /// Transform magnitudes on the zero-padded FFT frequency grid `(ξ_q, |f̂(ξ_q)|)`.
    pub fn spectrum(&self) -> Vec<(f64, f64)> {
        let len = (2 * self.table.y.len()).next_power_of_two();
        let h = self.grid.spacing;
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (i, &v) in self.table.y.iter().enumerate() {
            buf[i] = Complex64::new(v, 0.0);
        }
        FftPlanner::new().plan_fft_forward(len).process(&mut buf);
        (0..len)
            .map(|m| {
                let q = if m < len / 2 { m as f64 } else { m as f64 - len as f64 };
                // the sample origin sits at -R, which only changes the phase
                (q / (len as f64 * h), buf[m].norm() * h)
            })
            .collect()
    }

    /// Largest transform magnitude at least `margin` away from the declared
    /// support, relative to the peak magnitude.
    pub fn support_leakage(&self, margin: f64) -> Result<f64> {
        if self.fourier_support.is_empty() {
            return Err(VarioError::Precondition(format!("kernel {} declares no Fourier support", self.name)));
        }
        let spec = self.spectrum();
        let peak = spec.iter().map(|p| p.1).fold(0.0, f64::max);
        if peak == 0.0 {
            return Ok(0.0);
        }
        let outside = |xi: f64| {
            self.fourier_support.iter().all(|&(a, b)| xi < a - margin || xi > b + margin)
        };
        Ok(spec.iter().filter(|p| outside(p.0)).map(|p| p.1).fold(0.0, f64::max) / peak)
    }

    /// Writes the kernel container: grid header with kind `K` and version 1,
    /// a length-prefixed UTF-8 JSON metadata block, then the samples.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| VarioError::io(path, e))
    }

    pub fn encode(&self) -> Vec<u8> {
        let meta = KernelMeta {
            name: self.name.clone(),
            radius: self.grid.radius,
            spacing: self.grid.spacing,
            fourier_support: self.fourier_support.clone(),
            envelope: self.envelope,
            mass: self.mass,
        };
        let meta = serde_json::to_vec(&meta).expect("kernel metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(GRID_MAGIC);
        out.push(GRID_VERSION);
        out.push(KIND_KERNEL);
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.table.y.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.spacing.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for v in &self.table.y {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| VarioError::io(path, e))?;
        Self::decode(&bytes, path)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |r: &str| VarioError::format(path, r.to_string());
        if bytes.len() < 26 || &bytes[..4] != GRID_MAGIC {
            return Err(bad("missing VLF2 header"));
        }
        if bytes[4] != GRID_VERSION || bytes[5] != KIND_KERNEL {
            return Err(bad("not a version-1 kernel container"));
        }
        let n2 = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let h = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let meta_len = u32::from_le_bytes(bytes[22..26].try_into().unwrap()) as usize;
        if bytes.len() != 26 + meta_len + 8 * n2 {
            return Err(bad("truncated kernel container"));
        }
        let meta: KernelMeta = serde_json::from_slice(&bytes[26..26 + meta_len])
            .map_err(|e| VarioError::format(path, format!("bad metadata: {e}")))?;
        if meta.spacing != h {
            return Err(bad("header spacing disagrees with metadata"));
        }
        let samples = bytes[26 + meta_len..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let grid = KernelGrid::new(meta.spacing, meta.radius).map_err(|e| VarioError::format(path, e.to_string()))?;
        let mut k = Kernel1D::from_samples(meta.name, grid, samples, meta.fourier_support)
            .map_err(|e| VarioError::format(path, e.to_string()))?;
        k.envelope = meta.envelope;
        Ok(k)
    }
}

/// Kind byte of kernel containers (`'K'`).
pub const KIND_KERNEL: u8 = b'K';

#[derive(Serialize, Deserialize)]
struct KernelMeta {
    name: String,
    radius: f64,
    spacing: f64,
    fourier_support: Vec<(f64, f64)>,
    envelope: Option<Envelope>,
    mass: f64,
}

/// Samples `f(s_i) = ∫ f̂(ξ) e^{2πisξ} dξ` on `grid` by a Riemann sum over an
/// `oversample`-times finer frequency grid, evaluated with one inverse FFT.
pub(crate) fn samples_from_hat(
    hat: &(dyn Fn(f64) -> Complex64 + Send + Sync),
    grid: &KernelGrid,
    oversample: usize,
) -> Result<Vec<f64>> {
    let n = grid.intervals()?;
    let len = (oversample * (n + 1)).next_power_of_two();
    let dxi = 1.0 / (len as f64 * grid.spacing);
    let mut buf: Vec<Complex64> = (0..len)
        .map(|m| {
            let q = if m < len / 2 { m as f64 } else { m as f64 - len as f64 };
            hat(q * dxi) * dxi
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
    let half = n / 2;
    Ok((0..=n)
        .map(|i| {
            let j = i as i64 - half as i64;
            buf[j.rem_euclid(len as i64) as usize].re
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_kernel() -> Kernel1D {
        let grid = KernelGrid::new(1.0 / 64.0, 8.0).unwrap();
        Kernel1D::from_fn("g", grid, |s| (-std::f64::consts::PI * s * s).exp()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(KernelGrid::new(0.3, 1.0).is_err());
        assert_eq!(KernelGrid::default().intervals().unwrap(), 131072);
    }

    #[test]
    fn gaussian_mass_and_transform() {
        let k = gaussian_kernel();
        assert!((k.mass() - 1.0).abs() < 1e-12);
        for xi in [0.0, 0.3, 1.1] {
            let exact = (-std::f64::consts::PI * xi * xi).exp();
            assert!((k.hat_from_samples(xi).re - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn hat_sampling_inverts_gaussian() {
        let grid = KernelGrid::new(1.0 / 64.0, 8.0).unwrap();
        let hat: HatFn = Arc::new(|xi: f64| Complex64::new((-std::f64::consts::PI * xi * xi).exp(), 0.0));
        let k = Kernel1D::from_hat("g", grid, hat, vec![(-20.0, 20.0)]).unwrap();
        for i in (0..k.samples().len()).step_by(37) {
            let s = grid.point(i);
            assert!((k.samples()[i] - (-std::f64::consts::PI * s * s).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn kernel_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.vlk");
        let k = gaussian_kernel().with_envelope(Envelope { lambda: 2.0, constant: 1.0 });
        k.write_file(&path).unwrap();
        let back = Kernel1D::read_file(&path).unwrap();
        assert_eq!(back.samples(), k.samples());
        assert_eq!(back.envelope(), k.envelope());
        assert_eq!(back.grid(), k.grid());
        let mut bytes = k.encode();
        bytes.truncate(bytes.len() - 3);
        let err = Kernel1D::decode(&bytes, Path::new("broken.vlk")).unwrap_err().to_string();
        assert!(err.contains("broken.vlk"));
    }
}
