//! Gaussian superposition σ, modified Bessel functions of the second kind and
//! the transform of `ρ(s) = (1+s²)^{-λ/2}`.

use std::f64::consts::PI;

use statrs::function::gamma::gamma as statrs_gamma;

use crate::error::{Result, VarioError};
use crate::numerics::integrate;

fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * statrs_gamma(1.0 - x))
    } else {
        statrs_gamma(x)
    }
}

/// `σ(s) = ∫₁^∞ α^{-1} e^{-π s²/α²} α^{-λ} dα`, computed as
/// `λ^{-1} ∫₀¹ exp(-π s² v^{2/λ}) dv`.
pub fn gaussian_superposition(lambda: f64, s: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(VarioError::Domain(format!("σ needs λ > 1, got {lambda}")));
    }
    let q = PI * s * s;
    let p = 2.0 / lambda;
    let v = integrate(|v: f64| (-q * v.powf(p)).exp(), 0.0, 1.0, 1e-300, 1e-12)?.value;
    Ok(v / lambda)
}

/// `lim_{s→∞} s^λ σ(s) = Γ(λ/2) / (2 π^{λ/2})`.
pub fn sigma_tail_limit(lambda: f64) -> f64 {
    gamma(0.5 * lambda) / (2.0 * PI.powf(0.5 * lambda))
}

fn near_integer(nu: f64) -> bool {
    (nu - nu.round()).abs() < 1e-6
}

/// `I_ν(z)` by its power series.
fn bessel_i_series(nu: f64, z: f64) -> f64 {
    let half = 0.5 * z;
    let q = half * half;
    let mut term = half.powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    for k in 1..200 {
        let k = k as f64;
        term *= q / (k * (k + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `K_ν(z) = π (I_{-ν}(z) - I_ν(z)) / (2 sin νπ)`; non-integer ν only.
pub fn bessel_k_series(nu: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(VarioError::Domain(format!("K_ν needs z > 0, got {z}")));
    }
    if near_integer(nu) {
        return Err(VarioError::Domain(format!("series form needs non-integer order, got {nu}")));
    }
    Ok(PI * (bessel_i_series(-nu, z) - bessel_i_series(nu, z)) / (2.0 * (nu * PI).sin()))
}

/// `K_ν(z) = ∫₀^∞ e^{-z cosh t} cosh(νt) dt`.
pub fn bessel_k_integral(nu: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(VarioError::Domain(format!("K_ν needs z > 0, got {z}")));
    }
    let upper = (1.0 + 60.0 / z).acosh() + 1.0;
    let scaled = integrate(|t: f64| (-z * (t.cosh() - 1.0)).exp() * (nu * t).cosh(), 0.0, upper, 1e-300, 1e-14)?;
    Ok(scaled.value * (-z).exp())
}

/// `K_ν(z)`: series for `z <= 2` and non-integer order, integral otherwise.
pub fn bessel_k(nu: f64, z: f64) -> Result<f64> {
    if z <= 2.0 && !near_integer(nu) {
        bessel_k_series(nu, z)
    } else {
        bessel_k_integral(nu, z)
    }
}

/// How [`rho_hat`] evaluates the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoPath {
    /// Bessel form for `|ξ| > 1e-3`, transform quadrature below.
    #[default]
    Auto,
    Bessel,
    Quadrature,
}

const RHO_CROSSOVER: f64 = 1e-3;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 1.0) {
        return Err(VarioError::Domain(format!("ρ̂ needs λ > 1, got {lambda}")));
    }
    Ok(())
}

fn rho_prefactor(lambda: f64) -> f64 {
    2.0 * PI.powf(0.5 * lambda) / gamma(0.5 * lambda)
}

/// `ρ̂(0) = √π Γ((λ-1)/2) / Γ(λ/2)`.
fn rho_hat_zero(lambda: f64) -> f64 {
    PI.sqrt() * gamma(0.5 * (lambda - 1.0)) / gamma(0.5 * lambda)
}

/// `ρ̂(ξ) = 2π^{λ/2} |ξ|^ν K_ν(2π|ξ|) / Γ(λ/2)` with `ν = (λ-1)/2`.
pub fn rho_hat_bessel(lambda: f64, xi: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let x = xi.abs();
    if x == 0.0 {
        return Ok(rho_hat_zero(lambda));
    }
    let nu = 0.5 * (lambda - 1.0);
    Ok(rho_prefactor(lambda) * x.powf(nu) * bessel_k(nu, 2.0 * PI * x)?)
}

/// `ρ̂(ξ) = Γ(λ/2)^{-1} ∫₀^∞ τ^{λ/2-1} e^{-τ} √(π/τ) e^{-π²ξ²/τ} dτ`,
/// integrated in `w = ln τ`.
pub fn rho_hat_quadrature(lambda: f64, xi: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if xi == 0.0 {
        return Ok(rho_hat_zero(lambda));
    }
    let a = 0.5 * lambda;
    let q = PI * PI * xi * xi;
    let lo = (q / 80.0).ln();
    let hi = 80f64.ln();
    let f = |w: f64| {
        let tau = w.exp();
        ((a - 0.5) * w - tau - q / tau).exp()
    };
    let mid = q.sqrt().ln().clamp(lo, hi);
    let left = integrate(f, lo, mid, 1e-300, 1e-14)?.value;
    let right = integrate(f, mid, hi, 1e-300, 1e-14)?.value;
    Ok(PI.sqrt() * (left + right) / gamma(a))
}

pub fn rho_hat(lambda: f64, xi: f64, path: RhoPath) -> Result<f64> {
    match path {
        RhoPath::Bessel => rho_hat_bessel(lambda, xi),
        RhoPath::Quadrature => rho_hat_quadrature(lambda, xi),
        RhoPath::Auto if xi.abs() > RHO_CROSSOVER => rho_hat_bessel(lambda, xi),
        RhoPath::Auto => rho_hat_quadrature(lambda, xi),
    }
}

/// `ρ̂′(ξ) = -2π A ξ^ν K_{ν-1}(2πξ)` for `ξ > 0`; odd in ξ.
pub fn rho_hat_d1(lambda: f64, xi: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if xi == 0.0 {
        return Err(VarioError::Domain("ρ̂′ is singular at 0".into()));
    }
    let x = xi.abs();
    let nu = 0.5 * (lambda - 1.0);
    let v = -2.0 * PI * rho_prefactor(lambda) * x.powf(nu) * bessel_k((nu - 1.0).abs(), 2.0 * PI * x)?;
    Ok(v * xi.signum())
}

/// `ρ̂″(ξ) = -2π A ξ^{ν-1} (K_{ν-1}(2πξ) - 2πξ K_{ν-2}(2πξ))`; even in ξ.
pub fn rho_hat_d2(lambda: f64, xi: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if xi == 0.0 {
        return Err(VarioError::Domain("ρ̂″ is singular at 0".into()));
    }
    let x = xi.abs();
    let nu = 0.5 * (lambda - 1.0);
    let z = 2.0 * PI * x;
    let k1 = bessel_k((nu - 1.0).abs(), z)?;
    let k2 = bessel_k((nu - 2.0).abs(), z)?;
    Ok(-2.0 * PI * rho_prefactor(lambda) * x.powf(nu - 1.0) * (k1 - z * k2))
}
