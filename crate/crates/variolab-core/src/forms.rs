//! Quadrilinear forms in one field and their exact identities.
//!
//! Fields are zero-extended windows with spacing `h`; the first sample index
//! plays the role of `x, y` and the second of `x′, y′` in
//! `Ξ = ∫ F(y,x′) F(x,x′) F(y,y′) F(x,y′) ρ̃_t(x′-y′) ρ_t(x-y)`.
//! Kernels enter through lattice weights `w_d = (h/t) ρ(d h / t)`, so a kernel
//! difference `ρ_s - ρ_t` is formed on the weights themselves and the
//! telescoping identities hold up to rounding.

use rayon::prelude::*;

use crate::averages::{continuous_average_direct, ScaleGrid};
use crate::error::{Result, VarioError};
use crate::fields::{Field2D, LatticeKind};
use crate::kernels::{Kernel1D, Profile};
use crate::numerics::{integrate, pairwise_sum, CompositeRule};

/// Largest grid the literal four-fold sums accept.
pub const DIRECT_ORACLE_LIMIT: usize = 16 * 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    Direct,
    Separated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormValue {
    pub value: f64,
    pub scales: Vec<f64>,
    pub kernel_ids: (String, String),
    pub evaluation: Evaluation,
}

fn check_window(f: &Field2D) -> Result<()> {
    let l = f.lattice();
    if l.kind() != LatticeKind::PlaneWindow || l.periodic() {
        return Err(VarioError::Precondition("forms are evaluated on zero-extended plane windows".into()));
    }
    Ok(())
}

fn check_direct_size(f: &Field2D) -> Result<()> {
    if f.lattice().len() > DIRECT_ORACLE_LIMIT {
        return Err(VarioError::Capacity(format!(
            "direct four-fold sums are limited to {DIRECT_ORACLE_LIMIT} samples, got {}",
            f.lattice().len()
        )));
    }
    Ok(())
}

/// Weights `(h/t) ρ(d h/t)` for `d = -reach..=reach`, stored at `d + reach`.
fn lattice_weights(profile: &Profile, t: f64, h: f64, reach: usize) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(VarioError::Domain(format!("scale must be positive, got {t}")));
    }
    if t < h * (1.0 - 1e-12) {
        return Err(VarioError::Resolution(format!(
            "kernel {} at scale {t} is undersampled by spacing {h}",
            profile.name()
        )));
    }
    let r = reach as i64;
    Ok((-r..=r).map(|d| h / t * profile.eval(d as f64 * h / t)).collect())
}

fn weight_diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `h² Σ_k Σ_{x,y} v_k(x-y) Σ_{x′,y′} F(x,x′)F(y,x′)F(x,y′)F(y,y′) u_k(x′-y′)`
/// for kernel pairs `(u_k, v_k)` given as lattice weights.
fn paired_sum(f: &Field2D, pairs: &[(&[f64], &[f64])], evaluation: Evaluation) -> f64 {
    let (n1, n2) = f.lattice().dims();
    let h = f.lattice().spacing();
    let s = f.samples();
    let (r1, r2) = (n1 - 1, n2 - 1);
    let row = |x: usize| &s[x * n2..(x + 1) * n2];
    let per_x: Vec<f64> = match evaluation {
        Evaluation::Separated => (0..n1)
            .into_par_iter()
            .map(|x| {
                let mut terms = Vec::with_capacity(n1 * pairs.len());
                let mut m = vec![0.0; n2];
                let mut conv = vec![0.0; n2];
                for y in 0..n1 {
                    for (c, (a, b)) in m.iter_mut().zip(row(x).iter().zip(row(y))) {
                        *c = a * b;
                    }
                    for (u, v) in pairs {
                        for (xp, cv) in conv.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for (yp, my) in m.iter().enumerate() {
                                acc += u[xp + r2 - yp] * my;
                            }
                            *cv = acc;
                        }
                        let inner: f64 = m.iter().zip(&conv).map(|(a, b)| a * b).sum();
                        terms.push(v[x + r1 - y] * inner);
                    }
                }
                pairwise_sum(&terms)
            })
            .collect(),
        Evaluation::Direct => (0..n1)
            .map(|x| {
                let mut acc = 0.0;
                for y in 0..n1 {
                    for xp in 0..n2 {
                        for yp in 0..n2 {
                            let prod = f.get(y, xp) * f.get(x, xp) * f.get(y, yp) * f.get(x, yp);
                            for (u, v) in pairs {
                                acc += prod * u[xp + r2 - yp] * v[x + r1 - y];
                            }
                        }
                    }
                }
                acc
            })
            .collect(),
    };
    h * h * pairwise_sum(&per_x)
}

/// Per-scale weights of `ρ̃` (second coordinate) and `ρ` (first coordinate).
struct ScaleWeights {
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn scale_weights(f: &Field2D, rho_tilde: &Profile, rho: &Profile, scales: &[f64]) -> Result<ScaleWeights> {
    let (n1, n2) = f.lattice().dims();
    let h = f.lattice().spacing();
    let u = scales.iter().map(|&t| lattice_weights(rho_tilde, t, h, n2 - 1)).collect::<Result<_>>()?;
    let v = scales.iter().map(|&t| lattice_weights(rho, t, h, n1 - 1)).collect::<Result<_>>()?;
    Ok(ScaleWeights { u, v })
}

/// `Ξ_{ρ̃,ρ,t}(F)`.
pub fn xi_form(f: &Field2D, rho_tilde: &Profile, rho: &Profile, t: f64, evaluation: Evaluation) -> Result<FormValue> {
    check_window(f)?;
    if evaluation == Evaluation::Direct {
        check_direct_size(f)?;
    }
    let w = scale_weights(f, rho_tilde, rho, &[t])?;
    Ok(FormValue {
        value: paired_sum(f, &[(&w.u[0], &w.v[0])], evaluation),
        scales: vec![t],
        kernel_ids: (rho_tilde.name(), rho.name()),
        evaluation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaForms {
    /// `Σ_j ∫ FFFF ρ̃_{t_j}(x′-y′) (ρ_{t_{j-1}} - ρ_{t_j})(x-y)`.
    pub theta: f64,
    /// `Σ_j ∫ FFFF (ρ̃_{t_{j-1}} - ρ̃_{t_j})(x′-y′) ρ_{t_{j-1}}(x-y)`.
    pub theta_tilde: f64,
    /// `Ξ` at the first scale.
    pub xi_first: f64,
    /// `Ξ` at the last scale.
    pub xi_last: f64,
    /// `Σ_d |u_d| · Σ_d |v_d|` at the first and last scales, the lattice
    /// form of `‖ρ̃‖₁ ‖ρ‖₁`.
    pub holder_bounds: (f64, f64),
}

impl ThetaForms {
    /// `|Θ + Θ̃ - Ξ_first + Ξ_last|` relative to the largest of the four.
    pub fn telescoping_residual(&self) -> f64 {
        let scale = self.theta.abs().max(self.theta_tilde.abs()).max(self.xi_first.abs()).max(self.xi_last.abs());
        if scale == 0.0 {
            return 0.0;
        }
        (self.theta + self.theta_tilde - self.xi_first + self.xi_last).abs() / scale
    }
}

/// `Θ, Θ̃` over the scales `t_0 < … < t_m` and `Ξ` at both ends.
pub fn theta_forms(
    f: &Field2D,
    rho_tilde: &Profile,
    rho: &Profile,
    scales: &ScaleGrid,
    evaluation: Evaluation,
) -> Result<ThetaForms> {
    check_window(f)?;
    if evaluation == Evaluation::Direct {
        check_direct_size(f)?;
    }
    let ts = scales.scales();
    if ts.len() < 2 {
        return Err(VarioError::Domain("Θ forms need at least two scales".into()));
    }
    let w = scale_weights(f, rho_tilde, rho, ts)?;
    let m = ts.len() - 1;
    let dv: Vec<Vec<f64>> = (1..=m).map(|j| weight_diff(&w.v[j - 1], &w.v[j])).collect();
    let du: Vec<Vec<f64>> = (1..=m).map(|j| weight_diff(&w.u[j - 1], &w.u[j])).collect();
    let theta_pairs: Vec<(&[f64], &[f64])> = (1..=m).map(|j| (w.u[j].as_slice(), dv[j - 1].as_slice())).collect();
    let tilde_pairs: Vec<(&[f64], &[f64])> = (1..=m).map(|j| (du[j - 1].as_slice(), w.v[j - 1].as_slice())).collect();
    let l1 = |x: &[f64]| x.iter().map(|v| v.abs()).sum::<f64>();
    Ok(ThetaForms {
        theta: paired_sum(f, &theta_pairs, evaluation),
        theta_tilde: paired_sum(f, &tilde_pairs, evaluation),
        xi_first: paired_sum(f, &[(&w.u[0], &w.v[0])], evaluation),
        xi_last: paired_sum(f, &[(&w.u[m], &w.v[m])], evaluation),
        holder_bounds: (l1(&w.u[0]) * l1(&w.v[0]), l1(&w.u[m]) * l1(&w.v[m])),
    })
}

/// `(Θ_{g_α,g_β}, Θ̃_{g_α,g_β})` with `g(s) = e^{-πs²}`.
pub fn gaussian_positivity(f: &Field2D, alpha: f64, beta: f64, scales: &ScaleGrid) -> Result<(f64, f64)> {
    let g = Profile::gaussian();
    let r = theta_forms(f, &g.dilated(alpha)?, &g.dilated(beta)?, scales, Evaluation::Separated)?;
    Ok((r.theta, r.theta_tilde))
}

/// `Θ̃_{g_α,g_β}` written as
/// `Σ_j ∫_{t_{j-1}}^{t_j} ∫ (∫ F(y,x′) F(x,x′) h_{αt}(x′-p) dx′)² g_{βt_{j-1}}(x-y) dx dy dp dt/t`,
/// with the `p` integral on a subgrid of spacing `h / p_refine` and the `t`
/// integral by Gauss–Legendre in `log t`.
pub fn theta_tilde_squared_form(
    f: &Field2D,
    alpha: f64,
    beta: f64,
    scales: &ScaleGrid,
    p_refine: usize,
    t_nodes: usize,
) -> Result<f64> {
    check_window(f)?;
    let ts = scales.scales();
    if ts.len() < 2 {
        return Err(VarioError::Domain("Θ forms need at least two scales".into()));
    }
    let (n1, n2) = f.lattice().dims();
    let h = f.lattice().spacing();
    let hder = Profile::gaussian_derivative();
    let g = Profile::gaussian().dilated(beta)?;
    let refine = p_refine.max(1);
    let dp = h / refine as f64;
    let mut total = Vec::new();
    for j in 1..ts.len() {
        let v = lattice_weights(&g, ts[j - 1], h, n1 - 1)?;
        let reach = (hder.support().1 * alpha * ts[j] / dp).ceil() as i64;
        let p_lo = -reach;
        let p_hi = ((n2 - 1) * refine) as i64 + reach;
        let rule = CompositeRule::new(ts[j - 1].ln(), ts[j].ln(), 4, t_nodes.max(2));
        let value = rule.apply(|lt| {
            let big_t = alpha * lt.exp();
            // h_T(x′ - p) for x′ on the lattice and p on the subgrid
            let np = (p_hi - p_lo + 1) as usize;
            let table: Vec<f64> = (0..n2 * np)
                .map(|i| {
                    let (xp, p) = (i / np, p_lo + (i % np) as i64);
                    hder.eval((xp as f64 * h - p as f64 * dp) / big_t) / big_t
                })
                .collect();
            let per_x: Vec<f64> = (0..n1)
                .into_par_iter()
                .map(|x| {
                    let mut terms = Vec::with_capacity(n1);
                    let mut m = vec![0.0; n2];
                    for y in 0..n1 {
                        for (xp, c) in m.iter_mut().enumerate() {
                            *c = f.get(y, xp) * f.get(x, xp);
                        }
                        let mut sq = Vec::with_capacity(np);
                        for pi in 0..np {
                            let inner: f64 = m.iter().enumerate().map(|(xp, c)| c * table[xp * np + pi]).sum::<f64>() * h;
                            sq.push(inner * inner * dp);
                        }
                        terms.push(pairwise_sum(&sq) * v[x + n1 - 1 - y]);
                    }
                    pairwise_sum(&terms)
                })
                .collect();
            // v carries one factor h; the x sum carries the other
            h * pairwise_sum(&per_x)
        });
        total.push(value);
    }
    Ok(pairwise_sum(&total))
}

/// Largest `|(-t∂_t g_{αt})(d) - ∫ h_{αt}(d-p) h_{αt}(-p) dp|` over the
/// separations, the left side in closed form and the right by quadrature.
pub fn tensorization_check(alpha: f64, t: f64, d_samples: &[f64]) -> Result<f64> {
    if !(alpha > 0.0) || !(t > 0.0) {
        return Err(VarioError::Domain("α and t must be positive".into()));
    }
    let big_t = alpha * t;
    let hder = Profile::gaussian_derivative();
    let hk = |s: f64| hder.eval(s / big_t) / big_t;
    let mut worst = 0.0f64;
    for &d in d_samples {
        let gd = (-std::f64::consts::PI * d * d / (big_t * big_t)).exp() / big_t;
        let lhs = gd * (1.0 - 2.0 * std::f64::consts::PI * d * d / (big_t * big_t));
        let reach = hder.support().1 * big_t;
        let (a, b) = (d.min(0.0) - reach, d.max(0.0) + reach);
        let rhs = integrate(|p| hk(d - p) * hk(-p), a, b, 1e-16 / big_t, 1e-13)?.value;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// `Σ_pairs ∫ A^{ker_u}_{t_u}(F,G) · A^{ker_v}_{t_v}(F,G) dx dy`, i.e.
/// `∫ F(x+u,y) G(x,y+u) F(x+v,y) G(x,y+v) ker_u,t(u) ker_v,t(v)`.
pub fn quadrilinear(
    f: &Field2D,
    g: &Field2D,
    ker_u: &Profile,
    ker_v: &Profile,
    scale_pairs: &[(f64, f64)],
    evaluation: Evaluation,
) -> Result<FormValue> {
    f.check_same(g)?;
    check_window(f)?;
    let h = f.lattice().spacing();
    let w2 = f.lattice().cell_weight();
    let mut terms = Vec::with_capacity(scale_pairs.len());
    match evaluation {
        Evaluation::Separated => {
            for &(tu, tv) in scale_pairs {
                let a = continuous_average_direct(f, g, ker_u, tu)?;
                let b = continuous_average_direct(f, g, ker_v, tv)?;
                let prods: Vec<f64> = a.samples().iter().zip(b.samples()).map(|(x, y)| x * y).collect();
                terms.push(pairwise_sum(&prods) * w2);
            }
        }
        Evaluation::Direct => {
            check_direct_size(f)?;
            let (n1, n2) = f.lattice().dims();
            for &(tu, tv) in scale_pairs {
                let (fu, wu) = ker_u.weights(tu, h)?;
                let (fv, wv) = ker_v.weights(tv, h)?;
                let mut acc = 0.0;
                for x in 0..n1 as i64 {
                    for y in 0..n2 as i64 {
                        for (iu, a) in wu.iter().enumerate() {
                            let u = fu + iu as i64;
                            let left = f.get_ext(x + u, y) * g.get_ext(x, y + u) * a;
                            for (iv, b) in wv.iter().enumerate() {
                                let v = fv + iv as i64;
                                acc += left * f.get_ext(x + v, y) * g.get_ext(x, y + v) * b;
                            }
                        }
                    }
                }
                terms.push(acc * w2);
            }
        }
    }
    let mut scales: Vec<f64> = scale_pairs.iter().flat_map(|p| [p.0, p.1]).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    Ok(FormValue { value: pairwise_sum(&terms), scales, kernel_ids: (ker_u.name(), ker_v.name()), evaluation })
}

/// Kernels of the Cauchy–Schwarz split: `ω` localizes the first coordinate,
/// `ϑ` and `ψ` act on the second; the latter two need declared envelopes.
pub struct GammaKernels<'a> {
    pub omega: &'a Kernel1D,
    pub vartheta: &'a Kernel1D,
    pub psi: &'a Kernel1D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    pub value: FormValue,
    /// `sup K_{j,l}(x′,y′) / (2^{-k_j} (1 + 2^{-k_j}|x′-y′|)^{-λ})` with
    /// `K_{j,l} = ∫ |ϑ|_{2^{k_j}}(x′-p) |ψ|_{2^l}(y′-p) dp`, over the grid.
    pub product_kernel_constant: f64,
}

/// `A_l(q, x′, y′) = h Σ_y F(y,x′) F(y,y′) ω_{2^l}(y - q)` for every `q` in
/// `q_lo..=q_hi`, stored `[(q - q_lo) * n2² + x′ * n2 + y′]`.
fn localized_products(f: &Field2D, omega: &Profile, scale: f64, reach: usize) -> Result<(i64, Vec<f64>)> {
    let (n1, n2) = f.lattice().dims();
    let h = f.lattice().spacing();
    let w = lattice_weights(omega, scale, h, reach)?;
    let q_lo = -(reach as i64);
    let q_hi = n1 as i64 - 1 + reach as i64;
    let nq = (q_hi - q_lo + 1) as usize;
    let mut out = vec![0.0; nq * n2 * n2];
    out.par_chunks_mut(n2 * n2).enumerate().for_each(|(qi, block)| {
        let q = q_lo + qi as i64;
        for y in 0..n1 {
            let d = y as i64 - q;
            if d.unsigned_abs() as usize > reach {
                continue;
            }
            let wy = h * w[(d + reach as i64) as usize];
            if wy == 0.0 {
                continue;
            }
            for xp in 0..n2 {
                let a = f.get(y, xp) * wy;
                for yp in 0..n2 {
                    block[xp * n2 + yp] += a * f.get(y, yp);
                }
            }
        }
    });
    Ok((q_lo, out))
}

fn reach_of(profile: &Profile, scale: f64, h: f64) -> usize {
    let (lo, hi) = profile.support();
    (lo.abs().max(hi.abs()) * scale / h).ceil() as usize
}

fn dyadic_exponents(scales: &ScaleGrid) -> Result<Vec<i32>> {
    scales
        .scales()
        .iter()
        .map(|&t| {
            let k = t.log2().round();
            if 2f64.powi(k as i32) == t {
                Ok(k as i32)
            } else {
                Err(VarioError::Domain(format!("scale {t} is not a power of two")))
            }
        })
        .collect()
}

struct GammaSetup {
    omega: Profile,
    vartheta: Profile,
    psi: Profile,
    /// `(k_j, l)` pairs.
    terms: Vec<(i32, i32)>,
    lambda: f64,
}

fn gamma_setup(kernels: &GammaKernels<'_>, scales: &ScaleGrid) -> Result<GammaSetup> {
    let lambda = match (kernels.vartheta.envelope(), kernels.psi.envelope()) {
        (Some(a), Some(_)) => a.lambda,
        _ => {
            return Err(VarioError::Precondition(format!(
                "kernels {} and {} must both declare decay envelopes",
                kernels.vartheta.name(),
                kernels.psi.name()
            )))
        }
    };
    let ks = dyadic_exponents(scales)?;
    if ks.len() < 2 {
        return Err(VarioError::Domain("Γ needs at least two scales".into()));
    }
    let terms = ks.windows(2).flat_map(|w| (w[0]..w[1]).map(move |l| (w[1], l))).collect();
    Ok(GammaSetup {
        omega: Profile::from_kernel(kernels.omega)?,
        vartheta: Profile::from_kernel(kernels.vartheta)?,
        psi: Profile::from_kernel(kernels.psi)?,
        terms,
        lambda,
    })
}

/// `K(x′, y′) = h Σ_p |ϑ_s(x′-p)| |ψ_r(y′-p)|` over all lattice `p`, for
/// `x′, y′` in `0..n2`, row-major.
fn product_kernel(setup: &GammaSetup, k: i32, l: i32, h: f64, n2: usize) -> Result<Vec<f64>> {
    let (sk, sl) = (2f64.powi(k), 2f64.powi(l));
    let ra = reach_of(&setup.vartheta, sk, h);
    let rb = reach_of(&setup.psi, sl, h);
    let a: Vec<f64> = lattice_weights(&setup.vartheta, sk, h, ra)?.iter().map(|v| v.abs() / h).collect();
    let b: Vec<f64> = lattice_weights(&setup.psi, sl, h, rb)?.iter().map(|v| v.abs() / h).collect();
    let mut out = vec![0.0; n2 * n2];
    for xp in 0..n2 as i64 {
        for yp in 0..n2 as i64 {
            let lo = (xp - ra as i64).max(yp - rb as i64);
            let hi = (xp + ra as i64).min(yp + rb as i64);
            let mut acc = 0.0;
            for p in lo..=hi {
                acc += a[(xp - p + ra as i64) as usize] * b[(yp - p + rb as i64) as usize];
            }
            out[xp as usize * n2 + yp as usize] = h * acc;
        }
    }
    Ok(out)
}

/// `Γ(F) = Σ_j Σ_{l=k_{j-1}}^{k_j - 1} ∫ (∫ F(y,x′) F(y,y′) ω_{2^l}(y-q) dy)²
/// |ϑ|_{2^{k_j}}(x′-p) |ψ|_{2^l}(y′-p) dx′ dy′ dp dq` over dyadic scales `2^{k_j}`.
pub fn gamma_form(f: &Field2D, kernels: &GammaKernels<'_>, scales: &ScaleGrid) -> Result<GammaReport> {
    check_window(f)?;
    let setup = gamma_setup(kernels, scales)?;
    let (_, n2) = f.lattice().dims();
    let h = f.lattice().spacing();
    let mut terms = Vec::new();
    let mut constant = 0.0f64;
    for &(k, l) in &setup.terms {
        let kernel = product_kernel(&setup, k, l, h, n2)?;
        let sk = 2f64.powi(k);
        for xp in 0..n2 {
            for yp in 0..n2 {
                let dist = (xp as f64 - yp as f64).abs() * h;
                let env = (1.0 + dist / sk).powf(-setup.lambda) / sk;
                constant = constant.max(kernel[xp * n2 + yp] / env);
            }
        }
        let sl = 2f64.powi(l);
        let (_, a) = localized_products(f, &setup.omega, sl, reach_of(&setup.omega, sl, h))?;
        let block = n2 * n2;
        let per_q: Vec<f64> = a
            .par_chunks(block)
            .map(|aq| {
                let sq: Vec<f64> = aq.iter().zip(&kernel).map(|(v, k)| v * v * k).collect();
                pairwise_sum(&sq)
            })
            .collect();
        // dx′ dy′ dq; the p measure sits inside the product kernel
        terms.push(h * h * h * pairwise_sum(&per_q));
    }
    Ok(GammaReport {
        value: FormValue {
            value: pairwise_sum(&terms),
            scales: scales.scales().to_vec(),
            kernel_ids: (kernels.vartheta.name().to_string(), kernels.psi.name().to_string()),
            evaluation: Evaluation::Separated,
        },
        product_kernel_constant: constant,
    })
}

/// The mixed form bounded by `Γ(F)^{1/2} Γ(G)^{1/2}`:
/// `Σ_{j,l} ∫ A^F_l(q,x′,y′) A^G_l(p,x′,y′) ϑ_{2^{k_j}}(x′-p-q) ψ_{2^l}(y′-p-q)`.
pub fn gamma_mixed_form(f: &Field2D, g: &Field2D, kernels: &GammaKernels<'_>, scales: &ScaleGrid) -> Result<f64> {
    f.check_same(g)?;
    check_window(f)?;
    let setup = gamma_setup(kernels, scales)?;
    let (_, n2) = f.lattice().dims();
    let h = f.lattice().spacing();
    let block = n2 * n2;
    let mut terms = Vec::new();
    for &(k, l) in &setup.terms {
        let (sk, sl) = (2f64.powi(k), 2f64.powi(l));
        let ro = reach_of(&setup.omega, sl, h);
        let (q_lo, af) = localized_products(f, &setup.omega, sl, ro)?;
        let (_, ag) = localized_products(g, &setup.omega, sl, ro)?;
        let nq = af.len() / block;
        let ra = reach_of(&setup.vartheta, sk, h);
        let rb = reach_of(&setup.psi, sl, h);
        let wa = lattice_weights(&setup.vartheta, sk, h, ra)?;
        let wb = lattice_weights(&setup.psi, sl, h, rb)?;
        let per_xp: Vec<f64> = (0..n2)
            .into_par_iter()
            .map(|xp| {
                let mut acc = Vec::new();
                for yp in 0..n2 {
                    let idx = xp * n2 + yp;
                    // r = p + q with q, p indices offset by q_lo each
                    let lo = (xp as i64 - ra as i64).max(yp as i64 - rb as i64);
                    let hi = (xp as i64 + ra as i64).min(yp as i64 + rb as i64);
                    for r in lo..=hi {
                        let kern = wa[(xp as i64 - r + ra as i64) as usize] * wb[(yp as i64 - r + rb as i64) as usize];
                        if kern == 0.0 {
                            continue;
                        }
                        // q_i + p_i = r - 2 q_lo
                        let target = r - 2 * q_lo;
                        let mut conv = 0.0;
                        let qi_lo = (target - (nq as i64 - 1)).max(0);
                        let qi_hi = target.min(nq as i64 - 1);
                        for qi in qi_lo..=qi_hi {
                            let pi = target - qi;
                            conv += af[qi as usize * block + idx] * ag[pi as usize * block + idx];
                        }
                        acc.push(conv * kern);
                    }
                }
                pairwise_sum(&acc)
            })
            .collect();
        // dx′ dy′ dp dq with the kernel weights already carrying h² / h² = 1
        terms.push(h * h * pairwise_sum(&per_xp));
    }
    Ok(pairwise_sum(&terms))
}

/// `Θ_{g_α,ρ}(F)` on `2^{k_0}, …, 2^{k_0 + m}` for each `m`, normalized by `‖F‖₄⁴`.
pub fn theta_growth(f: &Field2D, alpha: f64, rho: &Profile, k0: i32, ms: &[usize]) -> Result<Vec<f64>> {
    let g = Profile::gaussian().dilated(alpha)?;
    let norm4 = f.lp_norm(4.0)?.powi(4);
    if norm4 == 0.0 {
        return Err(VarioError::Domain("Θ growth needs a nonzero field".into()));
    }
    ms.iter()
        .map(|&m| {
            let scales = ScaleGrid::dyadic(k0, k0 + m as i32)?;
            Ok(theta_forms(f, &g, rho, &scales, Evaluation::Separated)?.theta / norm4)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Lattice2D, TrialRng};
    use crate::kernels::{build_chi, derive_family, Envelope, KernelGrid};
    use std::f64::consts::PI;

    fn random_field(n: usize, h: f64, seed: u64) -> Field2D {
        let lattice = Lattice2D::window(n, n, h).unwrap();
        let mut rng = TrialRng::new(seed, 0);
        Field2D::new(lattice, (0..n * n).map(|_| rng.normal()).collect()).unwrap()
    }

    fn normalized(f: Field2D) -> Field2D {
        let n = f.lp_norm(4.0).unwrap();
        f.scaled(1.0 / n)
    }

    #[test]
    fn xi_separated_matches_direct() {
        let f = random_field(12, 0.5, 1);
        let rt = Profile::gaussian_derivative();
        let r = Profile::gaussian();
        for t in [0.5, 1.0, 3.0] {
            let a = xi_form(&f, &rt, &r, t, Evaluation::Separated).unwrap().value;
            let b = xi_form(&f, &rt, &r, t, Evaluation::Direct).unwrap().value;
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3), "{a} {b}");
        }
        assert!(xi_form(&random_field(17, 1.0, 2), &r, &r, 1.0, Evaluation::Direct).is_err());
        assert!(matches!(xi_form(&f, &r, &r, 0.25, Evaluation::Separated), Err(VarioError::Resolution(_))));
    }

    #[test]
    fn telescoping_and_holder() {
        let g = Profile::gaussian();
        let d = Profile::gaussian().psi_of();
        let scales = ScaleGrid::dyadic(0, 3).unwrap();
        for seed in 0..5 {
            let f = normalized(random_field(16, 0.5, 10 + seed));
            let r = theta_forms(&f, &g.dilated(0.7).unwrap(), &d, &scales, Evaluation::Separated).unwrap();
            assert!(r.telescoping_residual() <= 1e-12, "{r:?}");
            assert!(r.xi_first.abs() <= r.holder_bounds.0 * (1.0 + 1e-12));
            assert!(r.xi_last.abs() <= r.holder_bounds.1 * (1.0 + 1e-12));
            let direct = theta_forms(&f, &g.dilated(0.7).unwrap(), &d, &scales, Evaluation::Direct).unwrap();
            assert!((direct.theta - r.theta).abs() <= 1e-10 * r.theta.abs().max(1e-3));
        }
        let zero = Field2D::zeros(Lattice2D::window(8, 8, 0.5).unwrap());
        let r = theta_forms(&zero, &g, &g, &scales, Evaluation::Separated).unwrap();
        assert_eq!((r.theta, r.theta_tilde, r.xi_first, r.xi_last), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn gaussian_forms_are_nonnegative() {
        let scales = ScaleGrid::dyadic(0, 2).unwrap();
        for (seed, (alpha, beta)) in [(0u64, (1.0, 1.0)), (1, (0.5, 2.0)), (2, (2.0, 0.5))] {
            let f = random_field(16, 0.25, 20 + seed);
            let n4 = f.lp_norm(4.0).unwrap().powi(4);
            let (theta, tilde) = gaussian_positivity(&f, alpha, beta, &scales).unwrap();
            assert!(theta >= -1e-10 * n4 && tilde >= -1e-10 * n4, "{theta} {tilde}");
            let fnorm = normalized(f);
            let (_, tilde) = gaussian_positivity(&fnorm, alpha, beta, &scales).unwrap();
            assert!(tilde <= 2.0);
        }
        let zero = Field2D::zeros(Lattice2D::window(8, 8, 0.5).unwrap());
        assert_eq!(gaussian_positivity(&zero, 1.0, 1.0, &scales).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn theta_tilde_matches_squared_form() {
        let scales = ScaleGrid::dyadic(0, 2).unwrap();
        let f = random_field(8, 0.25, 30);
        let (_, tilde) = gaussian_positivity(&f, 0.5, 1.0, &scales).unwrap();
        let sq = theta_tilde_squared_form(&f, 0.5, 1.0, &scales, 8, 16).unwrap();
        assert!((tilde - sq).abs() <= 1e-10 * tilde.abs(), "{tilde} {sq}");
    }

    #[test]
    fn tensorization_examples() {
        assert!(tensorization_check(1.0, 1.0, &[0.0, 0.5, 1.0, 2.0]).unwrap() <= 1e-10);
        assert!(tensorization_check(1.0, 1.0, &[10.0]).unwrap() <= 1e-12);
        let ds = [0.0, 0.3, 1.1, 2.5];
        let a = tensorization_check(2.0, 1.0, &ds).unwrap();
        let b = tensorization_check(1.0, 2.0, &ds).unwrap();
        assert!((a - b).abs() <= 1e-10);
        // closed form at d = 0
        let t = 1.5;
        let lhs = 1.0 / t;
        let hder = Profile::gaussian_derivative();
        let rhs = integrate(|p| (hder.eval(-p / t) / t).powi(2), -4.0 * t, 4.0 * t, 1e-16, 1e-14).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-12);
        let _ = PI;
    }

    #[test]
    fn quadrilinear_examples() {
        let lattice = Lattice2D::window(12, 12, 0.5).unwrap();
        let mut rng = TrialRng::new(40, 0);
        let f = Field2D::new(lattice, (0..144).map(|_| rng.normal()).collect()).unwrap();
        let g = Field2D::new(lattice, (0..144).map(|_| rng.normal()).collect()).unwrap();
        let gauss = Profile::gaussian();
        let psi = gauss.psi_of();
        let pairs = [(1.0, 1.0), (2.0, 1.0)];
        let a = quadrilinear(&f, &g, &gauss, &psi, &pairs, Evaluation::Separated).unwrap().value;
        let b = quadrilinear(&f, &g, &gauss, &psi, &pairs, Evaluation::Direct).unwrap().value;
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-6), "{a} {b}");
        let sq = quadrilinear(&f, &g, &psi, &psi, &[(1.0, 1.0)], Evaluation::Separated).unwrap().value;
        assert!(sq >= 0.0);
        let zero = Field2D::zeros(lattice);
        assert_eq!(quadrilinear(&zero, &g, &gauss, &psi, &pairs, Evaluation::Separated).unwrap().value, 0.0);
        assert!(quadrilinear(&f, &g, &gauss, &psi, &[(0.1, 1.0)], Evaluation::Separated).is_err());
    }

    #[test]
    fn substituted_coordinates_reproduce_quadrilinear() {
        // F̃(y, x′) = F(x′ - y, y) and G̃(x, x′) = G(x, x′ - x) on the integer lattice
        let n = 8usize;
        let lattice = Lattice2D::window(n, n, 1.0).unwrap();
        let mut rng = TrialRng::new(41, 0);
        let f = Field2D::new(lattice, (0..n * n).map(|_| rng.normal()).collect()).unwrap();
        let g = Field2D::new(lattice, (0..n * n).map(|_| rng.normal()).collect()).unwrap();
        let ft = |y: i64, xp: i64| f.get_ext(xp - y, y);
        let gt = |x: i64, xp: i64| g.get_ext(x, xp - x);
        let gauss = Profile::gaussian();
        let psi = gauss.psi_of();
        let (fu, wu) = gauss.weights(2.0, 1.0).unwrap();
        let (fv, wv) = psi.weights(1.0, 1.0).unwrap();
        let mut acc = 0.0;
        for x in 0..n as i64 {
            for y in 0..n as i64 {
                for (iu, a) in wu.iter().enumerate() {
                    let xp = x + y + fu + iu as i64;
                    for (iv, b) in wv.iter().enumerate() {
                        let yp = x + y + fv + iv as i64;
                        acc += ft(y, xp) * gt(x, xp) * ft(y, yp) * gt(x, yp) * a * b;
                    }
                }
            }
        }
        let q = quadrilinear(&f, &g, &gauss, &psi, &[(2.0, 1.0)], Evaluation::Direct).unwrap().value;
        assert!((acc - q).abs() <= 1e-12 * q.abs().max(1e-6));
    }

    #[test]
    fn theta_does_not_grow_with_scale_count() {
        let ms = [2usize, 4, 8, 16];
        let mut sup = vec![0.0f64; ms.len()];
        for seed in 0..4u64 {
            let f = random_field(16, 0.25, 70 + seed);
            let vals = theta_growth(&f, 1.0, &Profile::gaussian(), -2, &ms).unwrap();
            for (s, v) in sup.iter_mut().zip(&vals) {
                assert!(*v >= 0.0);
                *s = s.max(*v);
            }
        }
        let m: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
        let fit = crate::numerics::fit_loglog(&m, &sup).unwrap();
        // slope not significantly above 0.05 at two standard errors
        assert!(fit.slope - 2.0 * fit.slope_se <= 0.05, "{sup:?} {fit:?}");
        assert!(sup.iter().all(|&v| v <= 2.0));
    }

    fn gamma_test_kernels() -> (Kernel1D, Kernel1D, Kernel1D) {
        let family = derive_family(&build_chi(KernelGrid::default()).unwrap()).unwrap();
        let grid = KernelGrid::new(1.0 / 64.0, 16.0).unwrap();
        let env = Envelope { lambda: 1.25, constant: 1.0 };
        let g = Profile::gaussian();
        let vt = Kernel1D::from_fn("gaussian", grid, |s| g.eval(s)).unwrap().with_envelope(env);
        let p = g.psi_of();
        let psi = Kernel1D::from_fn("psi[gaussian]", grid, |s| p.eval(s)).unwrap().with_envelope(env);
        (family.omega, vt, psi)
    }

    #[test]
    fn gamma_split_bound() {
        let (omega, vt, psi) = gamma_test_kernels();
        let kernels = GammaKernels { omega: &omega, vartheta: &vt, psi: &psi };
        let scales = ScaleGrid::dyadic(0, 2).unwrap();
        for seed in 0..2u64 {
            let f = random_field(16, 1.0, 50 + seed);
            let g = random_field(16, 1.0, 60 + seed);
            let gf = gamma_form(&f, &kernels, &scales).unwrap();
            let gg = gamma_form(&g, &kernels, &scales).unwrap();
            assert!(gf.value.value >= 0.0 && gg.value.value >= 0.0);
            assert!(gf.product_kernel_constant.is_finite() && gf.product_kernel_constant > 0.0);
            let mixed = gamma_mixed_form(&f, &g, &kernels, &scales).unwrap();
            assert!(mixed.abs() <= (gf.value.value * gg.value.value).sqrt() * (1.0 + 1e-12), "{mixed} {gf:?} {gg:?}");
        }
        let zero = Field2D::zeros(Lattice2D::window(16, 16, 1.0).unwrap());
        assert_eq!(gamma_form(&zero, &kernels, &scales).unwrap().value.value, 0.0);
        let bare = Kernel1D::from_fn("bare", KernelGrid::new(1.0 / 64.0, 16.0).unwrap(), |s| (-s * s).exp()).unwrap();
        let missing = GammaKernels { omega: &omega, vartheta: &bare, psi: &psi };
        assert!(matches!(gamma_form(&zero, &missing, &scales), Err(VarioError::Precondition(_))));
    }
}
