//! Sup ratios of sampled kernels against decay envelopes.

use super::special::gaussian_superposition;
use super::Kernel1D;
use crate::error::{Result, VarioError};

/// Sampled object whose decay is measured.
#[derive(Debug, Clone, Copy)]
pub enum EnvelopeObject<'a> {
    Kernel(&'a Kernel1D),
    /// `(s, value)` pairs.
    Points(&'a [(f64, f64)]),
    /// Values on the tensor grid `us × vs`, row-major in `u`.
    Grid2 { us: &'a [f64], vs: &'a [f64], values: &'a [f64] },
}

/// Envelope shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeForm {
    /// `(1+|s|)^{-λ}`.
    Power { lambda: f64 },
    /// `σ(s; λ)`.
    Sigma { lambda: f64 },
    /// `(1+|u+v|)^{-λ} (1+|u-v|)^{-ν}`.
    SumDifference { lambda: f64, nu: f64 },
    /// `(1+|u|)^{-λ/2} (1+|v|)^{-λ/2} (1+|u-v|)^{-ν}`.
    Separated { lambda: f64, nu: f64 },
}

impl EnvelopeForm {
    fn one_var(&self, s: f64) -> Result<f64> {
        match *self {
            EnvelopeForm::Power { lambda } => Ok((1.0 + s.abs()).powf(-lambda)),
            EnvelopeForm::Sigma { lambda } => gaussian_superposition(lambda, s),
            _ => Err(VarioError::Precondition("two-variable envelope applied to a one-variable object".into())),
        }
    }

    fn two_var(&self, u: f64, v: f64) -> Result<f64> {
        match *self {
            EnvelopeForm::SumDifference { lambda, nu } => {
                Ok((1.0 + (u + v).abs()).powf(-lambda) * (1.0 + (u - v).abs()).powf(-nu))
            }
            EnvelopeForm::Separated { lambda, nu } => Ok((1.0 + u.abs()).powf(-0.5 * lambda)
                * (1.0 + v.abs()).powf(-0.5 * lambda)
                * (1.0 + (u - v).abs()).powf(-nu)),
            _ => Err(VarioError::Precondition("one-variable envelope applied to a two-variable object".into())),
        }
    }
}

fn ratio(value: f64, env: f64, at: impl Fn() -> String) -> Result<f64> {
    if !(env > 0.0) {
        return Err(VarioError::Domain(format!("envelope vanishes at {}", at())));
    }
    Ok(value.abs() / env)
}

/// `sup |object| / envelope` over the sample points.
pub fn verify_envelope(object: EnvelopeObject<'_>, form: EnvelopeForm) -> Result<f64> {
    let mut sup = 0.0f64;
    match object {
        EnvelopeObject::Kernel(k) => {
            let g = k.grid();
            for (i, &v) in k.samples().iter().enumerate() {
                let s = g.point(i);
                sup = sup.max(ratio(v, form.one_var(s)?, || format!("s = {s}"))?);
            }
        }
        EnvelopeObject::Points(pts) => {
            for &(s, v) in pts {
                sup = sup.max(ratio(v, form.one_var(s)?, || format!("s = {s}"))?);
            }
        }
        EnvelopeObject::Grid2 { us, vs, values } => {
            if values.len() != us.len() * vs.len() {
                return Err(VarioError::Shape(format!(
                    "{} values for a {}x{} grid",
                    values.len(),
                    us.len(),
                    vs.len()
                )));
            }
            for (i, &u) in us.iter().enumerate() {
                for (j, &v) in vs.iter().enumerate() {
                    let val = values[i * vs.len() + j];
                    sup = sup.max(ratio(val, form.two_var(u, v)?, || format!("(u, v) = ({u}, {v})"))?);
                }
            }
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_chi, derive_family, KernelGrid};

    #[test]
    fn zero_kernel_has_zero_ratio() {
        let k = Kernel1D::from_fn("zero", KernelGrid::new(0.5, 8.0).unwrap(), |_| 0.0).unwrap();
        assert_eq!(verify_envelope(EnvelopeObject::Kernel(&k), EnvelopeForm::Power { lambda: 3.0 }).unwrap(), 0.0);
    }

    #[test]
    fn power_is_dominated_by_sigma() {
        let pts: Vec<(f64, f64)> = (0..=400).map(|i| {
            let s = 0.25 * i as f64;
            (s, (1.0 + s).powf(-1.25))
        }).collect();
        let c = verify_envelope(EnvelopeObject::Points(&pts), EnvelopeForm::Sigma { lambda: 1.25 }).unwrap();
        assert!(c.is_finite() && c >= 1.25);
        let far: Vec<(f64, f64)> = pts.iter().map(|&(s, v)| (s * 10.0, (1.0 + 10.0 * s).powf(-1.25) + 0.0 * v)).collect();
        let c_far = verify_envelope(EnvelopeObject::Points(&far), EnvelopeForm::Sigma { lambda: 1.25 }).unwrap();
        assert!(c_far < 2.0 * c);
    }

    #[test]
    fn envelope_form_mismatch_is_rejected() {
        let pts = [(0.0, 1.0)];
        assert!(verify_envelope(EnvelopeObject::Points(&pts), EnvelopeForm::Separated { lambda: 1.0, nu: 1.0 }).is_err());
        let us = [0.0];
        let values = [1.0, 2.0];
        assert!(verify_envelope(
            EnvelopeObject::Grid2 { us: &us, vs: &us, values: &values },
            EnvelopeForm::Separated { lambda: 1.0, nu: 1.0 }
        )
        .is_err());
    }

    #[test]
    fn shifted_pair_envelope_is_uniform_in_scale() {
        let fam = derive_family(&build_chi(KernelGrid::new(1.0 / 64.0, 128.0).unwrap()).unwrap()).unwrap();
        let lambda = 1.25;
        let mut normalized = Vec::new();
        for k in -8..=-3 {
            let v = fam.shifted_vartheta(k).unwrap();
            let centre = 2f64.powi(-k);
            let axis: Vec<f64> = (0..=160).map(|i| centre - 40.0 + 0.5 * i as f64).collect();
            let vals: Vec<f64> = v_axis_product(&v, &axis);
            let sup = verify_envelope(
                EnvelopeObject::Grid2 { us: &axis, vs: &axis, values: &vals },
                EnvelopeForm::Separated { lambda, nu: 3.0 * lambda },
            )
            .unwrap();
            normalized.push(sup / 2f64.powf(k as f64 * (2.0 - lambda)));
        }
        let first = normalized[normalized.len() - 1];
        for c in &normalized {
            assert!(c.is_finite() && *c <= 1.5 * first, "{normalized:?}");
        }
    }

    fn v_axis_product(v: &Kernel1D, axis: &[f64]) -> Vec<f64> {
        let vals: Vec<f64> = axis.iter().map(|&s| v.eval(s)).collect();
        let mut out = Vec::with_capacity(axis.len() * axis.len());
        for a in &vals {
            for b in &vals {
                out.push(a * b);
            }
        }
        out
    }
}
