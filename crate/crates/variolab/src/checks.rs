//! The verification suite: one measured quantity per check, compared with a
//! tolerance that the config may override.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Deserialize;
use variolab_core::averages::{
    continuous_average_direct, continuous_averages, discrete_average_direct, discrete_averages,
    orbit_identity_residual, square_function, transference_gap, FiniteSystem, ScaleGrid,
    DEFAULT_TABLE_BUDGET,
};
use variolab_core::fields::{sample_ensemble, translate, EnsembleKind, EnsembleSpec, Field2D, Lattice2D, TrialRng};
use variolab_core::forms::{gaussian_positivity, tensorization_check, theta_forms, Evaluation};
use variolab_core::kernels::{
    build_chi, derive_family, verify_partition_of_unity, verify_symbol_bounds, KernelGrid, Profile,
};
use variolab_core::numerics::fit_loglog;
use variolab_core::variation::{octave_bounds, long_short_parts, variation, SampledCurve, LONG_SHORT_CONSTANT};
use variolab_core::Result;

use crate::config::KernelChoice;
use crate::experiments::{
    certificates_hold, jump_bound_violations, jump_counts, lattice_curve, truncation_trials, variation_ratio,
};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        }
    }

    pub fn holds(self, value: f64, tolerance: f64) -> bool {
        match self {
            Relation::AtMost => value <= tolerance,
            Relation::AtLeast => value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckSpec {
    pub name: &'static str,
    pub relation: Relation,
    pub default_tolerance: f64,
    pub what: &'static str,
}

const fn spec(name: &'static str, relation: Relation, default_tolerance: f64, what: &'static str) -> CheckSpec {
    CheckSpec { name, relation, default_tolerance, what }
}

pub const CHECKS: &[CheckSpec] = &[
    spec("translation_invariance", Relation::AtMost, 0.0, "max |‖τf‖_p - ‖f‖_p| on tori, p in {1,2,4}"),
    spec("partition_of_unity", Relation::AtMost, 1e-8, "max |Σ_{|k|<=12} θ̂(2^k ξ) - 1| on [2^-6, 2^6]"),
    spec("symbol_slopes", Relation::AtMost, 0.1, "max deviation of fitted ρ̂′, ρ̂″ exponents from λ-2, λ-3"),
    spec("telescoping", Relation::AtMost, 1e-10, "max relative residual of Θ + Θ̃ = Ξ_first - Ξ_last"),
    spec("tensorization", Relation::AtMost, 1e-10, "max relative residual of -t∂_t g_t = h_t * h_t"),
    spec("gaussian_positivity", Relation::AtLeast, -1e-10, "min over trials of min(Θ, Θ̃) / ‖F‖₄⁴"),
    spec("fast_paths", Relation::AtMost, 1e-12, "max relative gap between cumulative-sum and direct averages"),
    spec("orbit_unroll", Relation::AtMost, 1e-13, "max |M_n(f,g)(S^k T^l x) - Ã_n(F̃,G̃)(k,l)|"),
    spec("transference", Relation::AtMost, 0.0, "pointwise and ℓ² transference bound violations"),
    spec("variation_dp", Relation::AtMost, 0.0, "sequences where the DP differs from exhaustive enumeration"),
    spec("jump_bound", Relation::AtMost, 0.0, "(curve, ε) pairs with J(ε) ε² > (V²)² on normalized average curves"),
    spec("long_short", Relation::AtMost, LONG_SHORT_CONSTANT, "max V²(full)² / (V²(long)² + Σ V²(short)²)"),
    spec("octave_square_slack", Relation::AtLeast, -1e-6, "min (‖ta′‖² + quadrature error - sup Σ|Δa|²) / ‖ta′‖²"),
    spec("octave_constant_spread", Relation::AtMost, 2.0, "max/min over octaves of the product-bound constant"),
    spec("boundedness_slope", Relation::AtMost, 0.1, "log-log slope of sup V²²/(‖f‖₄²‖g‖₄²) against N"),
    spec("square_function_slope", Relation::AtMost, 0.1, "log-log slope of sup ‖S(F,G)‖₂/(‖F‖₄‖G‖₄) against N"),
    spec("growth_slope", Relation::AtMost, 0.6, "log-log slope of sup ‖T_m‖₂/(‖F‖₄‖G‖₄) against m"),
    spec("growth_certificate", Relation::AtMost, 0.0, "pairs violating ‖T_m‖ <= √m‖S‖ or ‖T_m‖ <= Σ per-scale norms"),
];

pub fn check_spec(name: &str) -> Option<&'static CheckSpec> {
    CHECKS.iter().find(|c| c.name == name)
}

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

/// Sizes and trial counts of the suite.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSettings {
    pub telescoping_trials: usize,
    pub telescoping_size: usize,
    pub tensorization_trials: usize,
    pub partition_points: usize,
    pub symbol_lambdas: Vec<f64>,
    pub positivity_trials: usize,
    pub fast_path_cases: usize,
    pub fast_path_max_size: usize,
    pub orbit_systems: usize,
    pub orbit_max_size: usize,
    pub orbit_max_n: usize,
    pub transference_pairs: usize,
    pub transference_size: usize,
    pub transference_ns: Vec<usize>,
    pub transference_q: u32,
    pub transference_stride: usize,
    pub variation_sequences: usize,
    pub variation_max_len: usize,
    pub jump_curves: usize,
    pub long_short_curves: usize,
    pub octave_curves: usize,
    pub octave_count: usize,
    pub envelope_sizes: Vec<usize>,
    pub envelope_trials: usize,
    pub square_sizes: Vec<usize>,
    pub square_trials: usize,
    pub square_spacing: f64,
    pub square_j: (i32, i32),
    pub growth_size: usize,
    pub growth_ms: Vec<usize>,
    pub growth_trials: usize,
    /// Checks to run; empty runs all of them.
    pub only: Vec<String>,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            telescoping_trials: 8,
            telescoping_size: 16,
            tensorization_trials: 16,
            partition_points: 513,
            symbol_lambdas: vec![1.25, 1.5],
            positivity_trials: 9,
            fast_path_cases: 20,
            fast_path_max_size: 32,
            orbit_systems: 20,
            orbit_max_size: 256,
            orbit_max_n: 8,
            transference_pairs: 3,
            transference_size: 16,
            transference_ns: vec![2, 4, 8],
            transference_q: 3,
            transference_stride: 4,
            variation_sequences: 200,
            variation_max_len: 12,
            jump_curves: 16,
            long_short_curves: 20,
            octave_curves: 40,
            octave_count: 4,
            envelope_sizes: vec![8, 16, 32],
            envelope_trials: 24,
            square_sizes: vec![16, 32],
            square_trials: 8,
            square_spacing: 0.125,
            square_j: (-3, 3),
            growth_size: 32,
            growth_ms: (1..=8).collect(),
            growth_trials: 8,
            only: Vec::new(),
        }
    }
}

impl SuiteSettings {
    /// Sizes of the full acceptance protocol.
    pub fn acceptance() -> Self {
        SuiteSettings {
            telescoping_trials: 100,
            tensorization_trials: 100,
            partition_points: 2001,
            positivity_trials: 100,
            fast_path_cases: 100,
            fast_path_max_size: 64,
            transference_pairs: 50,
            transference_size: 32,
            transference_ns: vec![2, 4, 8, 16],
            transference_stride: 2,
            variation_sequences: 500,
            jump_curves: 100,
            long_short_curves: 100,
            octave_curves: 100,
            envelope_sizes: vec![16, 32, 64, 128],
            envelope_trials: 200,
            square_sizes: vec![16, 32, 64, 128],
            square_trials: 200,
            growth_size: 128,
            growth_ms: (1..=12).collect(),
            growth_trials: 64,
            ..SuiteSettings::default()
        }
    }

    pub fn validate(&self) -> std::result::Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(format!("[verify] {m}")));
        for name in &self.only {
            if check_spec(name).is_none() {
                return bad(&format!("unknown check `{name}` in only; known: {}", check_names().join(", ")));
            }
        }
        if self.envelope_sizes.len() < 2 || self.square_sizes.len() < 2 {
            return bad("envelope_sizes and square_sizes need at least two sizes for a slope");
        }
        if self.growth_ms.len() < 3 || self.growth_ms.contains(&0) {
            return bad("growth_ms needs at least three positive values");
        }
        if self.telescoping_size < 2 || self.variation_max_len == 0 || self.fast_path_max_size < 2 {
            return bad("sizes must be at least 2");
        }
        if self.transference_ns.iter().any(|&n| n == 0 || n > self.transference_size) {
            return bad("transference_ns must lie in 1..=transference_size");
        }
        if self.square_j.0 > self.square_j.1 || 2f64.powi(self.square_j.0) < self.square_spacing {
            return bad("square_j must be ordered with 2^j0 >= square_spacing");
        }
        if self.orbit_max_n == 0 || self.orbit_max_size == 0 || self.octave_count == 0 {
            return bad("orbit and octave sizes must be positive");
        }
        Ok(())
    }
}

/// Inputs shared by every check.
pub struct SuiteContext<'a> {
    pub settings: &'a SuiteSettings,
    pub seed: u64,
    pub kernel: &'a KernelChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub detail: String,
}

fn stream(seed: u64, check: u64, trial: usize) -> TrialRng {
    TrialRng::new(seed, (check << 32) | trial as u64)
}

fn normal_field(rng: &mut TrialRng, lattice: Lattice2D) -> Field2D {
    Field2D::new(lattice, (0..lattice.len()).map(|_| rng.normal()).collect()).expect("finite samples")
}

fn l4_normalized(f: Field2D) -> Result<Field2D> {
    let n = f.lp_norm(4.0)?;
    Ok(if n > 0.0 { f.scaled(1.0 / n) } else { f })
}

fn trials<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

fn translation_invariance(ctx: &SuiteContext) -> Result<Measurement> {
    let worst = trials(16, |t| {
        let mut rng = stream(ctx.seed, 1, t);
        let n1 = 3 + rng.below(30) as usize;
        let n2 = 3 + rng.below(30) as usize;
        let f = normal_field(&mut rng, Lattice2D::torus(n1, n2)?);
        let shift = (rng.below(64) as i64 - 32, rng.below(64) as i64 - 32);
        let g = translate(&f, shift)?;
        let mut w = 0.0f64;
        for p in [1.0, 2.0, 4.0] {
            w = w.max((g.lp_norm(p)? - f.lp_norm(p)?).abs());
        }
        Ok(w)
    })?;
    Ok(Measurement { value: max_of(worst), detail: "16 random tori and shifts".into() })
}

fn partition_of_unity(ctx: &SuiteContext) -> Result<Measurement> {
    let family = derive_family(&build_chi(KernelGrid::default())?)?;
    let value = verify_partition_of_unity(&family.theta, (2f64.powi(-6), 2f64.powi(6)), 12, ctx.settings.partition_points)?;
    Ok(Measurement { value, detail: format!("{} log-spaced frequencies, K = 12", ctx.settings.partition_points) })
}

fn symbol_slopes(ctx: &SuiteContext) -> Result<Measurement> {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for &lambda in &ctx.settings.symbol_lambdas {
        let r = verify_symbol_bounds(lambda)?;
        let d1 = r.rho_d1.slope - (lambda - 2.0);
        let d2 = r.rho_d2.slope - (lambda - 3.0);
        worst = worst.max(d1.abs()).max(d2.abs());
        detail.push(format!("λ={lambda}: {:.4} {:.4}", r.rho_d1.slope, r.rho_d2.slope));
    }
    Ok(Measurement { value: worst, detail: detail.join("; ") })
}

fn telescoping(ctx: &SuiteContext) -> Result<Measurement> {
    let n = ctx.settings.telescoping_size;
    let scales = ScaleGrid::dyadic(0, 3)?;
    let rho = &ctx.kernel.profile;
    let residuals = trials(ctx.settings.telescoping_trials, |t| {
        let mut rng = stream(ctx.seed, 2, t);
        let f = l4_normalized(normal_field(&mut rng, Lattice2D::window(n, n, 0.5)?))?;
        let alpha = 0.5 + 1.5 * rng.uniform();
        let r = theta_forms(&f, &Profile::gaussian().dilated(alpha)?, rho, &scales, Evaluation::Separated)?;
        Ok(r.telescoping_residual())
    })?;
    Ok(Measurement {
        value: max_of(residuals),
        detail: format!("{n}x{n} window h=1/2, scales 1..8, ρ = {}", ctx.kernel.label),
    })
}

fn tensorization(ctx: &SuiteContext) -> Result<Measurement> {
    let residuals = trials(ctx.settings.tensorization_trials, |t| {
        let mut rng = stream(ctx.seed, 3, t);
        let alpha = 0.5 + 1.5 * rng.uniform();
        let scale = 0.5 + 1.5 * rng.uniform();
        let ds: Vec<f64> = (0..4).map(|_| 3.0 * alpha * scale * rng.uniform()).collect();
        // peak of -t∂_t g_{αt} is 1/(αt), at d = 0
        Ok(tensorization_check(alpha, scale, &ds)? * alpha * scale)
    })?;
    Ok(Measurement { value: max_of(residuals), detail: "random α, t in [1/2, 2], four separations".into() })
}

fn gaussian_positivity_check(ctx: &SuiteContext) -> Result<Measurement> {
    const DILATIONS: [f64; 3] = [0.5, 1.0, 2.0];
    let scales = ScaleGrid::dyadic(0, 2)?;
    let mins = trials(ctx.settings.positivity_trials, |t| {
        let mut rng = stream(ctx.seed, 4, t);
        let f = normal_field(&mut rng, Lattice2D::window(16, 16, 0.25)?);
        let (alpha, beta) = (DILATIONS[t % 3], DILATIONS[(t / 3) % 3]);
        let (theta, tilde) = gaussian_positivity(&f, alpha, beta, &scales)?;
        Ok(theta.min(tilde) / f.lp_norm(4.0)?.powi(4))
    })?;
    let value = mins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Measurement { value, detail: "16x16 window h=1/4, α, β in {1/2, 1, 2}, scales 1..4".into() })
}

fn relative_gap(a: &Field2D, b: &Field2D) -> f64 {
    let scale = b.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = a.samples().iter().zip(b.samples()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        gap
    } else {
        gap / scale
    }
}

fn fast_paths(ctx: &SuiteContext) -> Result<Measurement> {
    let max = ctx.settings.fast_path_max_size;
    let gaps = trials(ctx.settings.fast_path_cases, |t| {
        let mut rng = stream(ctx.seed, 5, t);
        let n1 = 2 + rng.below(max as u64 - 1) as usize;
        let n2 = 2 + rng.below(max as u64 - 1) as usize;
        let lattice = if t % 2 == 0 { Lattice2D::torus(n1, n2)? } else { Lattice2D::window(n1, n2, 1.0)? };
        let f = normal_field(&mut rng, lattice);
        let g = normal_field(&mut rng, lattice);
        let ns: Vec<usize> = (0..4).map(|_| 1 + rng.below(n1.max(n2) as u64) as usize).collect();
        let fast = discrete_averages(&f, &g, &ns, DEFAULT_TABLE_BUDGET)?;
        let mut worst = 0.0f64;
        for (&n, a) in ns.iter().zip(&fast) {
            worst = worst.max(relative_gap(a, &discrete_average_direct(&f, &g, n)?));
        }
        let h = [0.25, 0.5, 1.0][rng.below(3) as usize];
        let lattice = if t % 2 == 0 { Lattice2D::periodic_window(n1, n2, h)? } else { Lattice2D::window(n1, n2, h)? };
        let f = normal_field(&mut rng, lattice);
        let g = normal_field(&mut rng, lattice);
        let ts: Vec<f64> = (0..4).map(|_| h * (1.0 + 15.0 * rng.uniform())).collect();
        let indicator = Profile::indicator();
        let fast = continuous_averages(&f, &g, &indicator, &ts, DEFAULT_TABLE_BUDGET)?;
        for (&s, a) in ts.iter().zip(&fast) {
            worst = worst.max(relative_gap(a, &continuous_average_direct(&f, &g, &indicator, s)?));
        }
        Ok(worst)
    })?;
    Ok(Measurement { value: max_of(gaps), detail: format!("grids up to {max}x{max}, discrete and indicator") })
}

fn orbit_unroll(ctx: &SuiteContext) -> Result<Measurement> {
    let s = ctx.settings;
    let residuals = trials(s.orbit_systems, |t| {
        let mut rng = stream(ctx.seed, 6, t);
        let sys = FiniteSystem::random(&mut rng, s.orbit_max_size)?;
        let big_n = 1 + rng.below(s.orbit_max_n as u64) as usize;
        let f: Vec<f64> = (0..sys.size()).map(|_| rng.normal()).collect();
        let g: Vec<f64> = (0..sys.size()).map(|_| rng.normal()).collect();
        orbit_identity_residual(&sys, &f, &g, big_n)
    })?;
    Ok(Measurement {
        value: max_of(residuals),
        detail: format!("|X| <= {}, N <= {}", s.orbit_max_size, s.orbit_max_n),
    })
}

fn transference(ctx: &SuiteContext) -> Result<Measurement> {
    let s = ctx.settings;
    let n = s.transference_size;
    let per_pair = trials(s.transference_pairs, |t| {
        let mut rng = stream(ctx.seed, 7, t);
        let window = Lattice2D::window(n, n, 1.0)?;
        let f = l4_normalized(normal_field(&mut rng, window))?;
        let g = l4_normalized(normal_field(&mut rng, window))?;
        let mut violations = 0usize;
        let mut worst = 0.0f64;
        for &k in &s.transference_ns {
            let r = transference_gap(&f, &g, k, s.transference_q, s.transference_stride)?;
            violations += r.pointwise_violations + r.l2_violations;
            worst = worst.max(r.max_l2_gap / r.l2_bound);
        }
        Ok((violations, worst))
    })?;
    let violations: usize = per_pair.iter().map(|p| p.0).sum();
    let worst = max_of(per_pair.iter().map(|p| p.1));
    Ok(Measurement {
        value: violations as f64,
        detail: format!("{n}x{n} windows, n in {:?}, largest ℓ² gap / bound {worst:.4}", s.transference_ns),
    })
}

/// Best `Σ d^ϱ` over every chain starting at `i` with partial sum `acc`.
fn best_chain(values: &[f64], rho: f64, i: usize, acc: f64) -> f64 {
    let mut best = acc;
    for j in i + 1..values.len() {
        best = best.max(best_chain(values, rho, j, acc + (values[j] - values[i]).abs().powf(rho)));
    }
    best
}

fn variation_dp(ctx: &SuiteContext) -> Result<Measurement> {
    let s = ctx.settings;
    let mismatches = trials(s.variation_sequences, |t| {
        let mut rng = stream(ctx.seed, 8, t);
        let len = 1 + rng.below(s.variation_max_len as u64) as usize;
        let values: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let rho = (1 + t % 3) as f64;
        let dp = variation(&values, rho)?.partition_sum();
        let exhaustive = (0..len).map(|i| best_chain(&values, rho, i, 0.0)).fold(0.0, f64::max);
        Ok(usize::from(dp != exhaustive))
    })?;
    Ok(Measurement {
        value: mismatches.iter().sum::<usize>() as f64,
        detail: format!("{} sequences of length <= {}, ϱ in {{1,2,3}}", s.variation_sequences, s.variation_max_len),
    })
}

fn jump_bound(ctx: &SuiteContext) -> Result<Measurement> {
    const EPS: [f64; 5] = [0.02, 0.05, 0.1, 0.2, 0.5];
    let s = ctx.settings;
    let ns: Vec<usize> = (1..=8).collect();
    let violations = trials(s.jump_curves, |t| {
        let mut rng = stream(ctx.seed, 12, t);
        let lattice = Lattice2D::torus(8, 8)?;
        let (f, g) = (normal_field(&mut rng, lattice), normal_field(&mut rng, lattice));
        Ok(match lattice_curve(&f, &g, &ns)? {
            Some((dist, norm)) => {
                let (v2, counts) = jump_counts(&dist, norm, &EPS)?;
                jump_bound_violations(v2, &counts)
            }
            None => 0,
        })
    })?;
    Ok(Measurement {
        value: violations.iter().sum::<usize>() as f64,
        detail: format!("{} Gaussian pairs on the 8x8 torus, n = 1..8, ε in {EPS:?}", s.jump_curves),
    })
}

fn long_short(ctx: &SuiteContext) -> Result<Measurement> {
    let ratios = trials(ctx.settings.long_short_curves, |t| {
        let mut rng = stream(ctx.seed, 9, t);
        let scales: Vec<f64> = (0..40).map(|_| 1.0 + 1023.0 * rng.uniform()).collect();
        let c: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let a = |s: f64| c.iter().enumerate().map(|(k, ck)| ck * ((k as f64 + 1.0) * s.ln()).sin()).sum::<f64>();
        let (full, long, short) = long_short_parts(a, &scales)?;
        Ok(if long + short > 0.0 { full / (long + short) } else { 0.0 })
    })?;
    Ok(Measurement { value: max_of(ratios), detail: "40 random scales in [1, 1024]".into() })
}

/// Random trigonometric polynomial on the octave `[2^i, 2^{i+1}]`, written
/// in the relative coordinate `t / 2^i`.
fn random_curve(rng: &mut TrialRng, octave: i32) -> SampledCurve {
    let base = 2f64.powi(octave);
    let terms = 1 + rng.below(5) as usize;
    let coef: Vec<(f64, f64, f64)> = (0..terms)
        .map(|_| (rng.normal(), 8.0 * rng.uniform(), 2.0 * std::f64::consts::PI * rng.uniform()))
        .collect();
    let tau = 2.0 * std::f64::consts::PI;
    let t: Vec<f64> = (0..=512).map(|i| base * (1.0 + i as f64 / 512.0)).collect();
    let a = t.iter().map(|&s| coef.iter().map(|&(c, w, p)| c * (tau * w * s / base + p).sin()).sum()).collect();
    let da = t
        .iter()
        .map(|&s| coef.iter().map(|&(c, w, p)| c * tau * w / base * (tau * w * s / base + p).cos()).sum())
        .collect();
    SampledCurve { t, a, da }
}

fn octave_square_slack(ctx: &SuiteContext) -> Result<Measurement> {
    let slacks = trials(ctx.settings.octave_curves, |t| {
        let mut rng = stream(ctx.seed, 10, t);
        let b = octave_bounds(&random_curve(&mut rng, 0))?;
        Ok(if b.rhs_square > 0.0 { b.square_slack() / b.rhs_square } else { b.square_slack() })
    })?;
    let value = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Measurement { value, detail: format!("{} curves on [1, 2]", ctx.settings.octave_curves) })
}

fn octave_constant_spread(ctx: &SuiteContext) -> Result<Measurement> {
    let s = ctx.settings;
    let mut per_octave = Vec::new();
    for octave in 0..s.octave_count as i32 {
        let cs = trials(s.octave_curves, |t| {
            let mut rng = stream(ctx.seed, 11 + octave as u64, t);
            Ok(octave_bounds(&random_curve(&mut rng, octave))?.product_constant)
        })?;
        per_octave.push(max_of(cs));
    }
    let hi = max_of(per_octave.iter().copied());
    let lo = per_octave.iter().copied().fold(f64::INFINITY, f64::min);
    let value = if lo > 0.0 && hi.is_finite() { hi / lo } else { f64::INFINITY };
    let listed: Vec<String> = per_octave.iter().map(|c| format!("{c:.4}")).collect();
    Ok(Measurement { value, detail: format!("sup constant per octave: {}", listed.join(" ")) })
}

/// Supremum over the ensemble of `ratio(F, G)` for each size, and the
/// log-log slope of the suprema against the size.
pub fn envelope_slope(
    sizes: &[usize],
    seed: u64,
    trial_count: usize,
    lattice: impl Fn(usize) -> Result<Lattice2D>,
    ratio: impl Fn(&Field2D, &Field2D, usize) -> Result<Option<f64>> + Sync + Send,
) -> Result<(Vec<f64>, f64)> {
    let mut sups = Vec::new();
    for &n in sizes {
        let spec = EnsembleSpec { seed, trials: trial_count, kind: EnsembleKind::Rademacher, lattice: lattice(n)? };
        let ratios = trials(trial_count, |t| {
            let (f, g) = sample_ensemble(&spec, t)?;
            ratio(&f, &g, n)
        })?;
        sups.push(max_of(ratios.into_iter().flatten()));
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let fit = fit_loglog(&xs, &sups)?;
    Ok((sups, fit.slope))
}

fn format_sups(sizes: &[usize], sups: &[f64]) -> String {
    sizes.iter().zip(sups).map(|(n, s)| format!("{n}:{s:.5}")).collect::<Vec<_>>().join(" ")
}

fn boundedness_slope(ctx: &SuiteContext) -> Result<Measurement> {
    let s = ctx.settings;
    let (sups, slope) = envelope_slope(&s.envelope_sizes, ctx.seed, s.envelope_trials, |n| Lattice2D::torus(n, n), |f, g, n| {
        let ns: Vec<usize> = (1..=n).collect();
        variation_ratio(f, g, &ns, 2.0)
    })?;
    Ok(Measurement { value: slope, detail: format!("sup by N {}", format_sups(&s.envelope_sizes, &sups)) })
}

fn square_function_slope(ctx: &SuiteContext) -> Result<Measurement> {
    let s = ctx.settings;
    let psi = ctx.kernel.mean_zero();
    let (sups, slope) = envelope_slope(
        &s.square_sizes,
        ctx.seed,
        s.square_trials,
        |n| Lattice2D::periodic_window(n, n, s.square_spacing),
        |f, g, _| {
            let denom = f.lp_norm(4.0)? * g.lp_norm(4.0)?;
            if denom == 0.0 {
                return Ok(None);
            }
            Ok(Some(square_function(f, g, &psi, s.square_j)?.lp_norm(2.0)? / denom))
        },
    )?;
    Ok(Measurement { value: slope, detail: format!("sup by N {}", format_sups(&s.square_sizes, &sups)) })
}

/// `r(m) = sup_trials ‖T_m‖₂/(‖F‖₄‖G‖₄)` and the number of (trial, m) pairs
/// violating either certificate.
pub fn growth_study(spec: &EnsembleSpec, psi: &Profile, ms: &[usize]) -> Result<(Vec<f64>, usize)> {
    let per_trial = truncation_trials(spec, psi, ms)?;
    let mut sup = vec![0.0f64; ms.len()];
    let mut violations = 0;
    for reports in &per_trial {
        for (i, r) in reports.iter().enumerate() {
            sup[i] = sup[i].max(r.ratio);
            if !certificates_hold(r) {
                violations += 1;
            }
        }
    }
    Ok((sup, violations))
}

fn growth(ctx: &SuiteContext) -> Result<(Measurement, Measurement)> {
    let s = ctx.settings;
    let lattice = Lattice2D::torus(s.growth_size, s.growth_size)?;
    let spec = EnsembleSpec { seed: ctx.seed, trials: s.growth_trials, kind: EnsembleKind::Rademacher, lattice };
    let (sup, violations) = growth_study(&spec, &ctx.kernel.mean_zero(), &s.growth_ms)?;
    let xs: Vec<f64> = s.growth_ms.iter().map(|&m| m as f64).collect();
    let fit = fit_loglog(&xs, &sup)?;
    let listed: Vec<String> = s.growth_ms.iter().zip(&sup).map(|(m, r)| format!("{m}:{r:.4}")).collect();
    let n = s.growth_size;
    Ok((
        Measurement { value: fit.slope, detail: format!("{n}² torus, r(m) {}", listed.join(" ")) },
        Measurement {
            value: violations as f64,
            detail: format!("{} pairs x {} truncations", s.growth_trials, s.growth_ms.len()),
        },
    ))
}

/// Measures one check by name.
pub fn measure(name: &str, ctx: &SuiteContext) -> Result<Measurement> {
    match name {
        "translation_invariance" => translation_invariance(ctx),
        "partition_of_unity" => partition_of_unity(ctx),
        "symbol_slopes" => symbol_slopes(ctx),
        "telescoping" => telescoping(ctx),
        "tensorization" => tensorization(ctx),
        "gaussian_positivity" => gaussian_positivity_check(ctx),
        "fast_paths" => fast_paths(ctx),
        "orbit_unroll" => orbit_unroll(ctx),
        "transference" => transference(ctx),
        "variation_dp" => variation_dp(ctx),
        "jump_bound" => jump_bound(ctx),
        "long_short" => long_short(ctx),
        "octave_square_slack" => octave_square_slack(ctx),
        "octave_constant_spread" => octave_constant_spread(ctx),
        "boundedness_slope" => boundedness_slope(ctx),
        "square_function_slope" => square_function_slope(ctx),
        "growth_slope" => Ok(growth(ctx)?.0),
        "growth_certificate" => Ok(growth(ctx)?.1),
        other => Err(variolab_core::VarioError::InvalidValue(format!("unknown check {other}"))),
    }
}

pub fn outcome(spec: &CheckSpec, m: Measurement, tolerances: &BTreeMap<String, f64>) -> CheckOutcome {
    let tolerance = tolerances.get(spec.name).copied().unwrap_or(spec.default_tolerance);
    CheckOutcome {
        name: spec.name.to_string(),
        passed: spec.relation.holds(m.value, tolerance),
        value: m.value,
        relation: spec.relation,
        tolerance,
        detail: m.detail,
    }
}

/// Runs the configured checks in their fixed order.
pub fn run_suite(ctx: &SuiteContext, tolerances: &BTreeMap<String, f64>) -> Result<Vec<CheckOutcome>> {
    let selected = |name: &str| ctx.settings.only.is_empty() || ctx.settings.only.iter().any(|o| o == name);
    let mut out = Vec::new();
    let mut growth_pair = None;
    for spec in CHECKS.iter().filter(|c| selected(c.name)) {
        let m = match spec.name {
            "growth_slope" | "growth_certificate" => {
                if growth_pair.is_none() {
                    growth_pair = Some(growth(ctx)?);
                }
                let (slope, cert) = growth_pair.clone().unwrap();
                if spec.name == "growth_slope" {
                    slope
                } else {
                    cert
                }
            }
            name => measure(name, ctx)?,
        };
        out.push(outcome(spec, m, tolerances));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_chain_examples() {
        let v = [0.0, 1.0, 0.0, 1.0];
        assert_eq!((0..4).map(|i| best_chain(&v, 2.0, i, 0.0)).fold(0.0, f64::max), 3.0);
        assert_eq!(best_chain(&[5.0], 1.0, 0, 0.0), 0.0);
    }

    #[test]
    fn relations() {
        assert!(Relation::AtMost.holds(1.0, 1.0));
        assert!(!Relation::AtMost.holds(f64::NAN, 1.0));
        assert!(Relation::AtLeast.holds(-1e-12, -1e-10));
        assert!(!Relation::AtLeast.holds(f64::NAN, -1.0));
    }

    #[test]
    fn override_changes_only_that_check() {
        let spec = check_spec("telescoping").unwrap();
        let m = Measurement { value: 1e-15, detail: String::new() };
        let mut tol = BTreeMap::new();
        assert!(outcome(spec, m.clone(), &tol).passed);
        tol.insert("telescoping".to_string(), 1e-20);
        let o = outcome(spec, m, &tol);
        assert!(!o.passed);
        assert_eq!(o.tolerance, 1e-20);
    }

    #[test]
    fn default_settings_validate() {
        SuiteSettings::default().validate().unwrap();
        SuiteSettings::acceptance().validate().unwrap();
        let bad = SuiteSettings { only: vec!["nope".into()], ..SuiteSettings::default() };
        assert!(bad.validate().is_err());
    }
}
