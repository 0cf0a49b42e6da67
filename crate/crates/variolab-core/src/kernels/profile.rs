//! Averaging profiles φ used by the bilinear averages, and their lattice weights.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Result, VarioError};
use crate::numerics::integrate;

/// Constant piece `value * 1_{[start, end)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

/// Averaging profile: a finite step function or a smooth function that is
/// negligible (below `1e-12` of its peak) outside `support`.
#[derive(Clone)]
pub enum Profile {
    Steps(Vec<Piece>),
    Smooth {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        support: (f64, f64),
        mass: f64,
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Steps(p) => f.debug_tuple("Steps").field(p).finish(),
            Profile::Smooth { name, support, mass, .. } => f
                .debug_struct("Smooth")
                .field("name", name)
                .field("support", support)
                .field("mass", mass)
                .finish(),
        }
    }
}

impl Profile {
    /// `1_{[0,1)}`.
    pub fn indicator() -> Self {
        Profile::Steps(vec![Piece { start: 0.0, end: 1.0, value: 1.0 }])
    }

    pub fn steps(pieces: Vec<Piece>) -> Result<Self> {
        for p in &pieces {
            if !(p.start < p.end) || !p.value.is_finite() {
                return Err(VarioError::InvalidValue(format!("bad profile piece {p:?}")));
            }
        }
        if pieces.is_empty() {
            return Err(VarioError::InvalidValue("profile needs at least one piece".into()));
        }
        Ok(Profile::Steps(pieces))
    }

    /// Smooth profile; the mass is integrated over `support`.
    pub fn smooth(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Result<Self> {
        if !(support.0 < support.1) {
            return Err(VarioError::InvalidValue(format!("bad profile support {support:?}")));
        }
        let mass = integrate(&f, support.0, support.1, 1e-15, 1e-13)?.value;
        Ok(Profile::Smooth { name: name.into(), f: Arc::new(f), support, mass })
    }

    /// Smooth profile interpolated from a sampled kernel, truncated where
    /// the samples fall below `1e-12` of their peak.
    pub fn from_kernel(kernel: &super::Kernel1D) -> Result<Self> {
        let y = kernel.samples();
        let peak = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if peak == 0.0 {
            return Err(VarioError::InvalidValue(format!("kernel {} is identically zero", kernel.name())));
        }
        let keep = |v: &f64| v.abs() >= 1e-12 * peak;
        let lo = y.iter().position(keep).unwrap_or(0);
        let hi = y.iter().rposition(keep).unwrap_or(y.len() - 1);
        let g = kernel.grid();
        let support = (g.point(lo), g.point(hi));
        let k = kernel.clone();
        Ok(Profile::Smooth { name: kernel.name().to_string(), f: Arc::new(move |s| k.eval(s)), support, mass: kernel.mass() })
    }

    /// `g(s) = e^{-πs²}`.
    pub fn gaussian() -> Self {
        // e^{-π s²} < 1e-12 for |s| > 2.9657
        Profile::Smooth {
            name: "gaussian".into(),
            f: Arc::new(|s| (-PI * s * s).exp()),
            support: (-2.9657, 2.9657),
            mass: 1.0,
        }
    }

    /// `h(s) = √(2/π) g′(√2 s)`, the odd companion of the Gaussian.
    pub fn gaussian_derivative() -> Self {
        let c = (2.0 / PI).sqrt() * -2.0 * PI * 2f64.sqrt();
        Profile::Smooth {
            name: "gaussian_derivative".into(),
            f: Arc::new(move |s| c * s * (-2.0 * PI * s * s).exp()),
            support: (-2.4, 2.4),
            mass: 0.0,
        }
    }

    /// `φ_α(s) = α^{-1} φ(s/α)`.
    pub fn dilated(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(VarioError::Domain(format!("dilation must be positive, got {alpha}")));
        }
        Ok(match self {
            Profile::Steps(p) => Profile::Steps(
                p.iter().map(|q| Piece { start: alpha * q.start, end: alpha * q.end, value: q.value / alpha }).collect(),
            ),
            Profile::Smooth { name, f, support, mass } => {
                let f = f.clone();
                Profile::Smooth {
                    name: format!("{name}@{alpha}"),
                    f: Arc::new(move |s| f(s / alpha) / alpha),
                    support: (alpha * support.0, alpha * support.1),
                    mass: *mass,
                }
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            Profile::Steps(p) if p.len() == 1 && p[0] == (Piece { start: 0.0, end: 1.0, value: 1.0 }) => {
                "indicator".into()
            }
            Profile::Steps(_) => "steps".into(),
            Profile::Smooth { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Profile::Steps(p) => p.iter().filter(|q| s >= q.start && s < q.end).map(|q| q.value).sum(),
            Profile::Smooth { f, support, .. } => {
                if s < support.0 || s > support.1 {
                    0.0
                } else {
                    f(s)
                }
            }
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Profile::Steps(p) => p.iter().map(|q| q.value * (q.end - q.start)).sum(),
            Profile::Smooth { mass, .. } => *mass,
        }
    }

    /// Interval outside which the profile is treated as zero.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Profile::Steps(p) => (
                p.iter().map(|q| q.start).fold(f64::INFINITY, f64::min),
                p.iter().map(|q| q.end).fold(f64::NEG_INFINITY, f64::max),
            ),
            Profile::Smooth { support, .. } => *support,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Profile::Steps(p) => p.iter().all(|q| q.value >= 0.0),
            Profile::Smooth { name, .. } => name == "gaussian",
        }
    }

    /// `ψ(s) = φ(s) - 2φ(2s)`.
    pub fn psi_of(&self) -> Self {
        match self {
            Profile::Steps(p) => {
                let mut out = p.clone();
                out.extend(p.iter().map(|q| Piece { start: 0.5 * q.start, end: 0.5 * q.end, value: -2.0 * q.value }));
                Profile::Steps(out)
            }
            Profile::Smooth { name, f, support, .. } => {
                let f = f.clone();
                let (lo, hi) = *support;
                let inner = move |s: f64| {
                    let a = if s >= lo && s <= hi { f(s) } else { 0.0 };
                    let b = if 2.0 * s >= lo && 2.0 * s <= hi { f(2.0 * s) } else { 0.0 };
                    a - 2.0 * b
                };
                Profile::Smooth {
                    name: format!("psi[{name}]"),
                    f: Arc::new(inner),
                    support: (lo.min(0.5 * lo), hi.max(0.5 * hi)),
                    mass: 0.0,
                }
            }
        }
    }

    /// Lattice weights of `φ_t` at offsets `m h`, returned as the first
    /// offset index and the weights. Steps use exact cell overlaps
    /// `t^{-1} |[mh, (m+1)h) ∩ t·piece|`; smooth profiles use `(h/t) φ(mh/t)`.
    pub fn weights(&self, t: f64, h: f64) -> Result<(i64, Vec<f64>)> {
        if !(t > 0.0) || !(h > 0.0) {
            return Err(VarioError::Domain(format!("scale {t} and spacing {h} must be positive")));
        }
        if t < h * (1.0 - 1e-12) {
            return Err(VarioError::Resolution(format!("scale {t} is below the lattice spacing {h}")));
        }
        let (lo, hi) = self.support();
        match self {
            Profile::Steps(pieces) => {
                let first = (lo * t / h).floor() as i64;
                let last = (hi * t / h).ceil() as i64 - 1;
                let mut w = vec![0.0; (last - first + 1).max(0) as usize];
                for q in pieces {
                    let (a, b) = (q.start * t, q.end * t);
                    let m0 = (a / h).floor() as i64;
                    let m1 = (b / h).ceil() as i64 - 1;
                    for m in m0..=m1 {
                        let cell_lo = m as f64 * h;
                        let overlap = (b.min(cell_lo + h) - a.max(cell_lo)).max(0.0);
                        w[(m - first) as usize] += q.value * overlap / t;
                    }
                }
                Ok((first, w))
            }
            Profile::Smooth { .. } => {
                let first = (lo * t / h).ceil() as i64;
                let last = (hi * t / h).floor() as i64;
                let w = (first..=last).map(|m| h / t * self.eval(m as f64 * h / t)).collect();
                Ok((first, w))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_weights_are_uniform() {
        let (first, w) = Profile::indicator().weights(4.0, 1.0).unwrap();
        assert_eq!(first, 0);
        assert_eq!(w, vec![0.25; 4]);
        let (first, w) = Profile::indicator().weights(2.5, 1.0).unwrap();
        assert_eq!(first, 0);
        assert_eq!(w, vec![0.4, 0.4, 0.2]);
        assert!(Profile::indicator().weights(0.5, 1.0).is_err());
    }

    #[test]
    fn psi_has_zero_mass() {
        let psi = Profile::indicator().psi_of();
        assert_eq!(psi.mass(), 0.0);
        let (_, w) = psi.weights(8.0, 1.0).unwrap();
        assert!(w.iter().sum::<f64>().abs() < 1e-15);
        assert_eq!(psi.eval(0.25), -1.0);
        assert_eq!(psi.eval(0.75), 1.0);
        let g = Profile::gaussian().psi_of();
        let (_, w) = g.weights(16.0, 1.0).unwrap();
        assert!(w.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn smooth_weights_sum_to_mass() {
        let g = Profile::gaussian();
        let (first, w) = g.weights(8.0, 0.5).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(first, -47);
        let h = Profile::gaussian_derivative();
        assert!(h.eval(2.4).abs() < 1e-10 * h.eval(0.2).abs());
        let m = Profile::smooth("h", move |s| h.eval(s), (-2.4, 2.4)).unwrap();
        assert!(m.mass().abs() < 1e-14);
    }
}
