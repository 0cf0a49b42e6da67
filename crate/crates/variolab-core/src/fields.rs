//! Lattices, sampled fields, norms, translations and deterministic ensembles.
//!
//! Samples are stored row-major: index `(k, l)` lives at `k * n2 + l`, where
//! `k` runs along the first coordinate and `l` along the second.
//!
//! # Random streams
//!
//! Trial `t` of an ensemble with seed `s` draws from ChaCha20 (RFC 8439 block
//! function, stream 0) keyed by `SHA-256(b"variolab/trial" || s_le || t_le)`,
//! where `s_le` and `t_le` are the 8-byte little-endian encodings. Uniforms
//! use the top 53 bits of each 64-bit output: `u = (x >> 11) * 2^-53`. Normal
//! variates use Box–Muller on `(1 - u1, u2)` and keep both outputs. The first
//! field of a pair is drawn completely before the second.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, VarioError};
use crate::numerics::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeKind {
    IntegerTorus,
    PlaneWindow,
}

/// Discretization of ℤ² (torus) or of a window in ℝ² with spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice2D {
    kind: LatticeKind,
    n1: usize,
    n2: usize,
    h: f64,
    periodic: bool,
}

impl Lattice2D {
    pub fn new(kind: LatticeKind, n1: usize, n2: usize, h: f64, periodic: bool) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(VarioError::InvalidValue(format!("lattice dims must be positive, got {n1}x{n2}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(VarioError::InvalidValue(format!("lattice spacing must be positive, got {h}")));
        }
        if kind == LatticeKind::IntegerTorus && (!periodic || h != 1.0) {
            return Err(VarioError::InvalidValue("an integer torus is periodic with spacing 1".into()));
        }
        Ok(Lattice2D { kind, n1, n2, h, periodic })
    }

    pub fn torus(n1: usize, n2: usize) -> Result<Self> {
        Self::new(LatticeKind::IntegerTorus, n1, n2, 1.0, true)
    }

    /// Zero-extended window of ℝ² with spacing `h`.
    pub fn window(n1: usize, n2: usize, h: f64) -> Result<Self> {
        Self::new(LatticeKind::PlaneWindow, n1, n2, h, false)
    }

    /// Periodic window of ℝ² with spacing `h` (a torus of side `n * h`).
    pub fn periodic_window(n1: usize, n2: usize, h: f64) -> Result<Self> {
        Self::new(LatticeKind::PlaneWindow, n1, n2, h, true)
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn periodic(&self) -> bool {
        self.periodic
    }
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Measure attached to each sample: `h²` on plane windows, 1 on integer tori.
    pub fn cell_weight(&self) -> f64 {
        match self.kind {
            LatticeKind::IntegerTorus => 1.0,
            LatticeKind::PlaneWindow => self.h * self.h,
        }
    }
}

/// Real samples on a [`Lattice2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    lattice: Lattice2D,
    samples: Vec<f64>,
}

impl Field2D {
    pub fn new(lattice: Lattice2D, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != lattice.len() {
            return Err(VarioError::Shape(format!(
                "expected {} samples, got {}",
                lattice.len(),
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(VarioError::InvalidValue(format!("sample {i} is not finite")));
        }
        Ok(Field2D { lattice, samples })
    }

    pub fn zeros(lattice: Lattice2D) -> Self {
        Field2D { samples: vec![0.0; lattice.len()], lattice }
    }

    pub fn from_fn(lattice: Lattice2D, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let (n1, n2) = lattice.dims();
        let mut samples = Vec::with_capacity(n1 * n2);
        for k in 0..n1 {
            for l in 0..n2 {
                samples.push(f(k, l));
            }
        }
        Self::new(lattice, samples)
    }

    pub fn lattice(&self) -> &Lattice2D {
        &self.lattice
    }
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.samples[k * self.lattice.n2 + l]
    }

    /// Value at a possibly out-of-range index: wraps on periodic lattices,
    /// zero outside a non-periodic window.
    pub fn get_ext(&self, k: i64, l: i64) -> f64 {
        let (n1, n2) = (self.lattice.n1 as i64, self.lattice.n2 as i64);
        if self.lattice.periodic {
            self.samples[(k.rem_euclid(n1) * n2 + l.rem_euclid(n2)) as usize]
        } else if k < 0 || l < 0 || k >= n1 || l >= n2 {
            0.0
        } else {
            self.samples[(k * n2 + l) as usize]
        }
    }

    pub fn scaled(&self, c: f64) -> Field2D {
        Field2D { lattice: self.lattice, samples: self.samples.iter().map(|v| c * v).collect() }
    }

    /// `self + c * other` on a shared lattice.
    pub fn axpy(&self, c: f64, other: &Field2D) -> Result<Field2D> {
        self.check_same(other)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a + c * b).collect();
        Ok(Field2D { lattice: self.lattice, samples })
    }

    pub fn check_same(&self, other: &Field2D) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(VarioError::Shape(format!(
                "lattice mismatch: {:?} vs {:?}",
                self.lattice, other.lattice
            )));
        }
        Ok(())
    }

    /// Weighted ℓᵖ norm: `(Σ |v|^p · w)^{1/p}` with pairwise summation.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }

    /// Weighted L² distance.
    pub fn l2_distance(&self, other: &Field2D) -> Result<f64> {
        self.check_same(other)?;
        let diffs: Vec<f64> =
            self.samples.iter().zip(&other.samples).map(|(a, b)| (a - b) * (a - b)).collect();
        Ok((pairwise_sum(&diffs) * self.lattice.cell_weight()).sqrt())
    }

    /// Debug export: one `k,l,value` row per sample.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("k,l,value\n");
        let (n1, n2) = self.lattice.dims();
        for k in 0..n1 {
            for l in 0..n2 {
                out.push_str(&format!("{k},{l},{}\n", self.get(k, l)));
            }
        }
        fs::write(path, out).map_err(|e| VarioError::io(path, e))
    }
}

fn power(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else if p == 4.0 {
        let s = a * a;
        s * s
    } else {
        a.powf(p)
    }
}

/// Weighted ℓᵖ norm of a field.
///
/// The powers `|v|^p` are sorted ascending and then summed pairwise, so the
/// bit pattern is invariant under any permutation of the samples (in
/// particular under translations); the cell weight is applied after summation.
pub fn lp_norm(field: &Field2D, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(VarioError::Domain(format!("lp_norm needs finite p >= 1, got {p}")));
    }
    let mut powers: Vec<f64> = field.samples.iter().map(|&v| power(v, p)).collect();
    powers.sort_unstable_by(f64::total_cmp);
    let total = pairwise_sum(&powers) * field.lattice.cell_weight();
    Ok(if p == 2.0 { total.sqrt() } else { total.powf(1.0 / p) })
}

/// `out(k, l) = in(k + p, l + q)` with periodic wraparound.
pub fn translate(field: &Field2D, shift: (i64, i64)) -> Result<Field2D> {
    if !field.lattice.periodic {
        return Err(VarioError::Unsupported("translate needs a periodic lattice".into()));
    }
    let (n1, n2) = field.lattice.dims();
    let mut samples = Vec::with_capacity(n1 * n2);
    for k in 0..n1 as i64 {
        for l in 0..n2 as i64 {
            samples.push(field.get_ext(k + shift.0, l + shift.1));
        }
    }
    Ok(Field2D { lattice: field.lattice, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EnsembleKind {
    GaussianWhite,
    Rademacher,
    DeltaSpike,
    /// White noise smoothed twice by the separable `[1, 2, 1] / 4` filter.
    SmoothLowpass,
    /// Both fields read from grid files; every trial returns the same pair.
    CustomFile { f_path: String, g_path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub seed: u64,
    pub trials: usize,
    pub kind: EnsembleKind,
    pub lattice: Lattice2D,
}

/// Deterministic generator for one trial of an ensemble.
pub struct TrialRng {
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

impl TrialRng {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"variolab/trial");
        hasher.update(seed.to_le_bytes());
        hasher.update(trial.to_le_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        TrialRng { inner: ChaCha20Rng::from_seed(key), spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let a = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * a.sin());
        r * a.cos()
    }

    pub fn sign(&mut self) -> f64 {
        if self.inner.next_u64() >> 63 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform integer in `0..n` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }
}

fn smooth_pass(values: &[f64], lattice: &Lattice2D) -> Vec<f64> {
    let tmp = Field2D { lattice: *lattice, samples: values.to_vec() };
    let (n1, n2) = lattice.dims();
    let mut along_k = vec![0.0; n1 * n2];
    for k in 0..n1 as i64 {
        for l in 0..n2 as i64 {
            along_k[(k as usize) * n2 + l as usize] =
                0.25 * tmp.get_ext(k - 1, l) + 0.5 * tmp.get_ext(k, l) + 0.25 * tmp.get_ext(k + 1, l);
        }
    }
    let tmp = Field2D { lattice: *lattice, samples: along_k };
    let mut out = vec![0.0; n1 * n2];
    for k in 0..n1 as i64 {
        for l in 0..n2 as i64 {
            out[(k as usize) * n2 + l as usize] =
                0.25 * tmp.get_ext(k, l - 1) + 0.5 * tmp.get_ext(k, l) + 0.25 * tmp.get_ext(k, l + 1);
        }
    }
    out
}

fn draw_field(rng: &mut TrialRng, kind: &EnsembleKind, lattice: &Lattice2D) -> Vec<f64> {
    let n = lattice.len();
    match kind {
        EnsembleKind::GaussianWhite => (0..n).map(|_| rng.normal()).collect(),
        EnsembleKind::Rademacher => (0..n).map(|_| rng.sign()).collect(),
        EnsembleKind::DeltaSpike => {
            let mut v = vec![0.0; n];
            v[rng.below(n as u64) as usize] = 1.0;
            v
        }
        EnsembleKind::SmoothLowpass => {
            let white: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let once = smooth_pass(&white, lattice);
            smooth_pass(&once, lattice)
        }
        EnsembleKind::CustomFile { .. } => unreachable!("custom files are not drawn"),
    }
}

/// Pair `(F, G)` for one trial; a pure function of `(seed, trial, kind, lattice)`.
pub fn sample_ensemble(spec: &EnsembleSpec, trial: usize) -> Result<(Field2D, Field2D)> {
    if spec.trials == 0 {
        return Err(VarioError::InvalidValue("ensemble needs at least one trial".into()));
    }
    if trial >= spec.trials {
        return Err(VarioError::Domain(format!("trial {trial} out of range 0..{}", spec.trials)));
    }
    if let EnsembleKind::CustomFile { f_path, g_path } = &spec.kind {
        let f = read_field(Path::new(f_path))?;
        let g = read_field(Path::new(g_path))?;
        for (field, path) in [(&f, f_path), (&g, g_path)] {
            if field.lattice != spec.lattice {
                return Err(VarioError::format(path, format!(
                    "lattice {:?} does not match the configured {:?}",
                    field.lattice, spec.lattice
                )));
            }
        }
        return Ok((f, g));
    }
    let mut rng = TrialRng::new(spec.seed, trial as u64);
    let f = draw_field(&mut rng, &spec.kind, &spec.lattice);
    let g = draw_field(&mut rng, &spec.kind, &spec.lattice);
    Ok((Field2D { lattice: spec.lattice, samples: f }, Field2D { lattice: spec.lattice, samples: g }))
}

pub const GRID_MAGIC: &[u8; 4] = b"VLF2";
pub const GRID_VERSION: u8 = 1;
pub const KIND_TORUS: u8 = 0;
pub const KIND_WINDOW: u8 = 1;
pub const KIND_PERIODIC_WINDOW: u8 = 2;

/// Encodes a field as `VLF2 | version | kind | u32 N1 | u32 N2 | f64 h | samples`,
/// all little-endian.
pub fn encode_field(field: &Field2D) -> Vec<u8> {
    let lat = field.lattice;
    let kind = match (lat.kind, lat.periodic) {
        (LatticeKind::IntegerTorus, _) => KIND_TORUS,
        (LatticeKind::PlaneWindow, false) => KIND_WINDOW,
        (LatticeKind::PlaneWindow, true) => KIND_PERIODIC_WINDOW,
    };
    let mut out = Vec::with_capacity(22 + 8 * field.samples.len());
    out.extend_from_slice(GRID_MAGIC);
    out.push(GRID_VERSION);
    out.push(kind);
    out.extend_from_slice(&(lat.n1 as u32).to_le_bytes());
    out.extend_from_slice(&(lat.n2 as u32).to_le_bytes());
    out.extend_from_slice(&lat.h.to_le_bytes());
    for v in &field.samples {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8], path: &Path) -> Result<Field2D> {
    if bytes.len() < 22 || &bytes[..4] != GRID_MAGIC {
        return Err(VarioError::format(path, "missing VLF2 header"));
    }
    if bytes[4] != GRID_VERSION {
        return Err(VarioError::format(path, format!("unsupported version {}", bytes[4])));
    }
    let n1 = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let n2 = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let h = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let lattice = match bytes[5] {
        KIND_TORUS => Lattice2D::torus(n1, n2),
        KIND_WINDOW => Lattice2D::window(n1, n2, h),
        KIND_PERIODIC_WINDOW => Lattice2D::periodic_window(n1, n2, h),
        k => return Err(VarioError::format(path, format!("unknown grid kind byte {k}"))),
    }
    .map_err(|e| VarioError::format(path, e.to_string()))?;
    let body = &bytes[22..];
    if body.len() != 8 * n1 * n2 {
        return Err(VarioError::format(path, format!(
            "expected {} sample bytes, found {}",
            8 * n1 * n2,
            body.len()
        )));
    }
    let samples = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Field2D::new(lattice, samples).map_err(|e| VarioError::format(path, e.to_string()))
}

pub fn write_field(path: &Path, field: &Field2D) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| VarioError::io(path, e))?;
    file.write_all(&encode_field(field)).map_err(|e| VarioError::io(path, e))
}

pub fn read_field(path: &Path) -> Result<Field2D> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| VarioError::io(path, e))?;
    decode_field(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_lp(field: &Field2D, p: f64) -> f64 {
        let mut s = 0.0;
        for v in field.samples() {
            s += v.abs().powf(p);
        }
        (s * field.lattice().cell_weight()).powf(1.0 / p)
    }

    fn random_field(lat: Lattice2D, seed: u64) -> Field2D {
        let mut rng = TrialRng::new(seed, 0);
        Field2D::new(lat, (0..lat.len()).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn lattice_invariants() {
        assert!(Lattice2D::torus(0, 3).is_err());
        assert!(Lattice2D::window(2, 2, 0.0).is_err());
        assert!(Lattice2D::new(LatticeKind::IntegerTorus, 2, 2, 0.5, true).is_err());
        assert!(Lattice2D::new(LatticeKind::IntegerTorus, 2, 2, 1.0, false).is_err());
        assert_eq!(Lattice2D::window(3, 3, 0.5).unwrap().cell_weight(), 0.25);
    }

    #[test]
    fn non_finite_samples_rejected() {
        let lat = Lattice2D::torus(1, 2).unwrap();
        assert!(Field2D::new(lat, vec![0.0, f64::NAN]).is_err());
        assert!(Field2D::new(lat, vec![0.0]).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let lat = Lattice2D::torus(4, 4).unwrap();
        assert_eq!(Field2D::zeros(lat).lp_norm(4.0).unwrap(), 0.0);
        let ones = Field2D::new(lat, vec![1.0; 16]).unwrap();
        assert!((ones.lp_norm(4.0).unwrap() - 2.0).abs() < 1e-15);
        let f = random_field(Lattice2D::torus(8, 8).unwrap(), 3);
        let fast = f.lp_norm(2.0).unwrap();
        assert!((fast - naive_lp(&f, 2.0)).abs() <= 1e-13 * fast);
        assert!(f.lp_norm(0.5).is_err());
    }

    #[test]
    fn window_norm_uses_cell_measure() {
        let lat = Lattice2D::window(4, 4, 0.5).unwrap();
        let ones = Field2D::new(lat, vec![1.0; 16]).unwrap();
        // area 4, so the L4 norm is 4^{1/4}
        assert!((ones.lp_norm(4.0).unwrap() - 4f64.powf(0.25)).abs() < 1e-15);
    }

    #[test]
    fn translate_examples() {
        let lat = Lattice2D::torus(4, 4).unwrap();
        let mut v = vec![0.0; 16];
        v[0] = 1.0;
        let delta = Field2D::new(lat, v).unwrap();
        assert_eq!(translate(&delta, (0, 0)).unwrap(), delta);
        let moved = translate(&delta, (1, 0)).unwrap();
        assert_eq!(moved.get(3, 0), 1.0);
        assert_eq!(moved.samples().iter().filter(|&&x| x != 0.0).count(), 1);
        let f = random_field(lat, 9);
        let back = translate(&translate(&f, (3, -5)).unwrap(), (-3, 5)).unwrap();
        assert_eq!(back, f);
        let window = Field2D::zeros(Lattice2D::window(4, 4, 1.0).unwrap());
        assert!(matches!(translate(&window, (1, 0)), Err(VarioError::Unsupported(_))));
    }

    #[test]
    fn ensembles_are_deterministic() {
        for kind in [EnsembleKind::GaussianWhite, EnsembleKind::Rademacher, EnsembleKind::DeltaSpike, EnsembleKind::SmoothLowpass] {
            let spec = EnsembleSpec { seed: 11, trials: 3, kind: kind.clone(), lattice: Lattice2D::torus(8, 8).unwrap() };
            let a = sample_ensemble(&spec, 2).unwrap();
            let b = sample_ensemble(&spec, 2).unwrap();
            assert_eq!(encode_field(&a.0), encode_field(&b.0));
            assert_eq!(encode_field(&a.1), encode_field(&b.1));
            assert_ne!(sample_ensemble(&spec, 1).unwrap().0, a.0, "{kind:?}");
        }
    }

    #[test]
    fn delta_spike_has_one_nonzero() {
        let spec = EnsembleSpec { seed: 5, trials: 10, kind: EnsembleKind::DeltaSpike, lattice: Lattice2D::torus(6, 7).unwrap() };
        for t in 0..10 {
            let (f, g) = sample_ensemble(&spec, t).unwrap();
            assert_eq!(f.samples().iter().filter(|&&x| x != 0.0).count(), 1);
            assert_eq!(g.samples().iter().filter(|&&x| x != 0.0).count(), 1);
        }
        assert!(sample_ensemble(&spec, 10).is_err());
    }

    #[test]
    fn gaussian_white_mean_is_small() {
        let spec = EnsembleSpec { seed: 21, trials: 200, kind: EnsembleKind::GaussianWhite, lattice: Lattice2D::torus(16, 16).unwrap() };
        let mut total = 0.0;
        let mut count = 0usize;
        for t in 0..spec.trials {
            let (f, g) = sample_ensemble(&spec, t).unwrap();
            total += f.samples().iter().sum::<f64>() + g.samples().iter().sum::<f64>();
            count += 2 * 256;
        }
        let mean = total / count as f64;
        assert!(mean.abs() <= 4.0 / (count as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn custom_file_missing_names_path() {
        let spec = EnsembleSpec {
            seed: 0,
            trials: 1,
            kind: EnsembleKind::CustomFile { f_path: "/nonexistent/f.vlf".into(), g_path: "/nonexistent/g.vlf".into() },
            lattice: Lattice2D::torus(2, 2).unwrap(),
        };
        let err = sample_ensemble(&spec, 0).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/f.vlf"), "{err}");
    }

    #[test]
    fn grid_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for lat in [Lattice2D::torus(3, 5).unwrap(), Lattice2D::window(4, 2, 0.125).unwrap(), Lattice2D::periodic_window(2, 2, 0.5).unwrap()] {
            let f = random_field(lat, 4);
            let path = dir.path().join("f.vlf");
            write_field(&path, &f).unwrap();
            assert_eq!(read_field(&path).unwrap(), f);
        }
        let bytes = encode_field(&random_field(Lattice2D::torus(2, 2).unwrap(), 1));
        assert_eq!(&bytes[..4], b"VLF2");
        assert_eq!(bytes.len(), 22 + 32);
        assert!(decode_field(&bytes[..30], Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous(seed in 0u64..1000, c in -10.0f64..10.0, p in prop::sample::select(vec![1.0, 2.0, 3.0, 4.0, 6.5])) {
            let f = random_field(Lattice2D::torus(5, 7).unwrap(), seed);
            let lhs = f.scaled(c).lp_norm(p).unwrap();
            let rhs = c.abs() * f.lp_norm(p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn translation_preserves_norm(seed in 0u64..1000, p in -20i64..20, q in -20i64..20) {
            let f = random_field(Lattice2D::torus(6, 4).unwrap(), seed);
            let g = translate(&f, (p, q)).unwrap();
            for exponent in [1.0, 2.0, 3.0, 4.0] {
                prop_assert_eq!(f.lp_norm(exponent).unwrap(), g.lp_norm(exponent).unwrap());
            }
        }

        #[test]
        fn norm_monotone_in_p_on_probability_torus(seed in 0u64..1000) {
            let f = random_field(Lattice2D::torus(8, 8).unwrap(), seed);
            let scale = |e: f64| (1.0 / 64.0f64).powf(e);
            let n1 = f.lp_norm(1.0).unwrap() * scale(1.0);
            let n2 = f.lp_norm(2.0).unwrap() * scale(0.5);
            let n4 = f.lp_norm(4.0).unwrap() * scale(0.25);
            prop_assert!(n1 <= n2 * (1.0 + 1e-14));
            prop_assert!(n2 <= n4 * (1.0 + 1e-14));
        }
    }
}
