//! The four commands. Trials run on the rayon pool and are collected in trial
//! order, so every report is independent of the thread count.

use rayon::prelude::*;
use variolab_core::averages::{
    discrete_averages, ergodic_double_averages, transference_gap, truncation_reports, FiniteSystem,
    TruncationReport, DEFAULT_TABLE_BUDGET,
};
use variolab_core::fields::{sample_ensemble, EnsembleKind, EnsembleSpec, Field2D, Lattice2D, TrialRng};
use variolab_core::kernels::Profile;
use variolab_core::numerics::fit_loglog;
use variolab_core::variation::{variation_report, DistanceMatrix};
use variolab_core::{Result, VarioError};

use crate::checks::{check_spec, outcome, run_suite, Measurement, SuiteContext};
use crate::config::{Command, Resolved, SystemChoice};
use crate::report::{Fit, Histogram, Provenance, Report, Row, Series};
use crate::CliError;

/// Distance matrix of the discrete averages `Ã_n(f, g)`, `n` in `ns`, with
/// `‖f‖₄ ‖g‖₄`; `None` when either field vanishes.
pub fn lattice_curve(f: &Field2D, g: &Field2D, ns: &[usize]) -> Result<Option<(DistanceMatrix, f64)>> {
    let norm = f.lp_norm(4.0)? * g.lp_norm(4.0)?;
    if norm == 0.0 {
        return Ok(None);
    }
    let averages = discrete_averages(f, g, ns, DEFAULT_TABLE_BUDGET)?;
    Ok(Some((DistanceMatrix::fields(&averages)?, norm)))
}

/// Same for the ergodic averages `M_n(f, g)` on the diagonal system
/// `X = ℤ_L`, `S = T = x + 1`, after forcing `|g| = |f|`.
pub fn diagonal_curve(f: &[f64], g: &[f64], ns: &[usize]) -> Result<Option<(DistanceMatrix, f64)>> {
    let len = f.len();
    let g: Vec<f64> = f.iter().zip(g).map(|(a, b)| if *b < 0.0 { -a.abs() } else { a.abs() }).collect();
    let line = Lattice2D::torus(1, len)?;
    let norm = Field2D::new(line, f.to_vec())?.lp_norm(4.0)? * Field2D::new(line, g.clone())?.lp_norm(4.0)?;
    if norm == 0.0 {
        return Ok(None);
    }
    let shift: Vec<usize> = (0..len).map(|x| (x + 1) % len).collect();
    let sys = FiniteSystem::new(shift.clone(), shift)?;
    let averages: Vec<Field2D> = ergodic_double_averages(&sys, f, &g, ns)?
        .into_iter()
        .map(|a| Field2D::new(line, a))
        .collect::<Result<_>>()?;
    Ok(Some((DistanceMatrix::fields(&averages)?, norm)))
}

fn curve_ratio(curve: Option<(DistanceMatrix, f64)>, rho: f64) -> Result<Option<f64>> {
    match curve {
        None => Ok(None),
        Some((dist, norm)) => {
            let v = variation_report(&dist, rho, &[])?.value / norm;
            Ok(Some(v * v))
        }
    }
}

/// `(V^ϱ)² / (‖f‖₄² ‖g‖₄²)` of the discrete averages.
pub fn variation_ratio(f: &Field2D, g: &Field2D, ns: &[usize], rho: f64) -> Result<Option<f64>> {
    curve_ratio(lattice_curve(f, g, ns)?, rho)
}

pub fn diagonal_ratio(f: &[f64], g: &[f64], ns: &[usize], rho: f64) -> Result<Option<f64>> {
    curve_ratio(diagonal_curve(f, g, ns)?, rho)
}

/// `V²` of the curve divided by `norm`, and `J(ε)` of that normalized curve.
pub fn jump_counts(dist: &DistanceMatrix, norm: f64, eps: &[f64]) -> Result<(f64, Vec<(f64, usize)>)> {
    let scaled: Vec<f64> = eps.iter().map(|e| e * norm).collect();
    let r = variation_report(dist, 2.0, &scaled)?;
    Ok((r.value / norm, eps.iter().zip(&r.jump_counts).map(|(e, (_, j))| (*e, *j)).collect()))
}

/// Number of ε with `J(ε) ε² > (V²)²`, relative slack 1e-12.
pub fn jump_bound_violations(v2: f64, counts: &[(f64, usize)]) -> usize {
    counts.iter().filter(|(e, j)| *j as f64 * e * e > v2 * v2 * (1.0 + 1e-12)).count()
}

pub fn truncation_trials(spec: &EnsembleSpec, psi: &Profile, ms: &[usize]) -> Result<Vec<Vec<TruncationReport>>> {
    (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let (f, g) = sample_ensemble(spec, t)?;
            truncation_reports(&f, &g, psi, ms)
        })
        .collect()
}

/// `‖T_m‖ <= √m ‖S‖` and `‖T_m‖ <= Σ_j ‖A_j‖`, each with relative slack 1e-12.
pub fn certificates_hold(r: &TruncationReport) -> bool {
    let per_scale: f64 = r.per_scale_norms.iter().sum();
    r.certificate_holds && r.tm_norm <= per_scale * (1.0 + 1e-12)
}

fn provenance(cfg: &Resolved) -> Provenance {
    Provenance {
        command: cfg.command.name().to_string(),
        seed: cfg.ensemble.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: variolab_core::VERSION.to_string(),
        config_sha256: cfg.config_hash.clone(),
    }
}

fn log_fit(xs: &[f64], ys: &[f64]) -> Option<Fit> {
    let (x, y): (Vec<f64>, Vec<f64>) = xs.iter().zip(ys).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (*a, *b)).unzip();
    if x.len() < 2 {
        return None;
    }
    fit_loglog(&x, &y).ok().map(|f| Fit::from_line(&f))
}

pub fn run(cfg: &Resolved) -> std::result::Result<Report, CliError> {
    match cfg.command {
        Command::Verify => run_verify(cfg),
        Command::Estimate => run_estimate(cfg),
        Command::Growth => run_growth(cfg),
        Command::Transfer => run_transfer(cfg),
    }
}

pub fn run_verify(cfg: &Resolved) -> std::result::Result<Report, CliError> {
    let ctx = SuiteContext { settings: &cfg.verify, seed: cfg.ensemble.seed, kernel: &cfg.kernel };
    let mut report = Report::new(provenance(cfg));
    report.checks = run_suite(&ctx, &cfg.tolerances)?;
    Ok(report)
}

/// One evaluation of the estimate objective.
struct Objective<'a> {
    cfg: &'a Resolved,
    ns: Vec<usize>,
}

impl Objective<'_> {
    fn curve(&self, f: &Field2D, g: &Field2D) -> Result<Option<(DistanceMatrix, f64)>> {
        match self.cfg.estimate.system {
            SystemChoice::Lattice => lattice_curve(f, g, &self.ns),
            SystemChoice::Diagonal => diagonal_curve(f.samples(), g.samples(), &self.ns),
        }
    }

    fn eval(&self, f: &Field2D, g: &Field2D) -> Result<Option<f64>> {
        curve_ratio(self.curve(f, g)?, self.cfg.estimate.rho)
    }

    /// Ratio plus, when epsilons are configured, the jump counts and `V²`.
    fn draw(&self, f: &Field2D, g: &Field2D) -> Result<Option<(f64, Option<(f64, Vec<(f64, usize)>)>)>> {
        let Some((dist, norm)) = self.curve(f, g)? else { return Ok(None) };
        let v = variation_report(&dist, self.cfg.estimate.rho, &[])?.value / norm;
        let eps = &self.cfg.estimate.epsilons;
        let jumps = if eps.is_empty() { None } else { Some(jump_counts(&dist, norm, eps)?) };
        Ok(Some((v * v, jumps)))
    }
}

/// Greedy coordinate search from `(f, g)`: sign flips for sign-valued
/// ensembles, Gaussian perturbations otherwise; a move is kept only when it
/// increases the ratio. Returns the best ratio after each step.
fn local_search(obj: &Objective, f: &Field2D, g: &Field2D, start: f64, rng: &mut TrialRng) -> Result<Vec<f64>> {
    let est = &obj.cfg.estimate;
    let flips = obj.cfg.ensemble.kind == EnsembleKind::Rademacher;
    let lattice = *f.lattice();
    let (mut fs, mut gs) = (f.samples().to_vec(), g.samples().to_vec());
    let mut best = start;
    let mut trace = Vec::with_capacity(est.search_steps);
    for _ in 0..est.search_steps {
        let which_f = rng.sign() > 0.0;
        let i = rng.below(fs.len() as u64) as usize;
        let target = if which_f { &mut fs } else { &mut gs };
        let old = target[i];
        target[i] = if flips { -old } else { old + est.step_size * rng.normal() };
        let cand = obj.eval(&Field2D::new(lattice, fs.clone())?, &Field2D::new(lattice, gs.clone())?)?;
        match cand {
            Some(r) if r > best => best = r,
            _ => {
                let target = if which_f { &mut fs } else { &mut gs };
                target[i] = old;
            }
        }
        trace.push(best);
    }
    Ok(trace)
}

/// Trial index space above this offset is reserved for search streams.
const SEARCH_STREAM: u64 = 1 << 40;

pub fn run_estimate(cfg: &Resolved) -> std::result::Result<Report, CliError> {
    let (n1, n2) = cfg.lattice.dims();
    let ns = match &cfg.scales {
        Some(s) => s.as_counts().ok_or_else(|| {
            CliError::Config("estimate needs integer scales n >= 1 in [scales]".into())
        })?,
        None => (1..=n1.min(n2)).collect(),
    };
    let obj = Objective { cfg, ns };
    let spec = &cfg.ensemble;
    let audited: Vec<_> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let (f, g) = sample_ensemble(spec, t)?;
            obj.draw(&f, &g)
        })
        .collect::<Result<_>>()?;
    let draws: Vec<Option<f64>> = audited.iter().map(|d| d.as_ref().map(|d| d.0)).collect();

    let mut report = Report::new(provenance(cfg));
    let n_max = *obj.ns.iter().max().unwrap_or(&0) as f64;
    let mut sup = 0.0f64;
    let mut ratios = Vec::new();
    let mut running = Vec::new();
    for (t, r) in draws.iter().enumerate() {
        match r {
            Some(r) => {
                sup = sup.max(*r);
                ratios.push((t, *r));
                running.push(((t + 1) as f64, sup));
                report.rows.push(Row { trial: t, seed: spec.seed, ratio: *r, grid: n_max, sup });
            }
            None => report.notes.push(format!("trial {t} skipped: a zero field makes the ratio 0/0")),
        }
    }
    let values: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    report.histogram = Some(Histogram::of(&values, cfg.estimate.histogram_bins));
    report.envelope.push(("sup_ratio".into(), sup));

    let mut order = ratios.clone();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let starts: Vec<(usize, f64)> = order.into_iter().take(cfg.estimate.restarts).collect();
    let traces: Vec<(usize, Vec<f64>)> = starts
        .par_iter()
        .map(|&(t, r)| {
            let (f, g) = sample_ensemble(spec, t)?;
            let mut rng = TrialRng::new(spec.seed, SEARCH_STREAM + t as u64);
            Ok((t, local_search(&obj, &f, &g, r, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let refined = traces.iter().filter_map(|(_, tr)| tr.last().copied()).fold(sup, f64::max);
    report.envelope.push(("refined_sup_ratio".into(), refined));
    for (t, tr) in &traces {
        if tr.last().copied().unwrap_or(0.0) > draws[*t].unwrap_or(0.0) {
            report.notes.push(format!("search from trial {t} raised the ratio to {}", tr.last().unwrap()));
        }
    }
    report.series.push(Series { name: "running_sup".into(), points: running });
    if let Some((_, tr)) = traces.first() {
        report.series.push(Series {
            name: "search".into(),
            points: tr.iter().enumerate().map(|(i, r)| ((i + 1) as f64, *r)).collect(),
        });
    }
    if !cfg.estimate.epsilons.is_empty() {
        let audits: Vec<_> = audited.iter().flatten().filter_map(|d| d.1.as_ref()).collect();
        let violations: usize = audits.iter().map(|(v2, counts)| jump_bound_violations(*v2, counts)).sum();
        for (i, &eps) in cfg.estimate.epsilons.iter().enumerate() {
            let most = audits.iter().map(|(_, c)| c[i].1).max().unwrap_or(0);
            report.envelope.push((format!("max_jumps({eps})"), most as f64));
        }
        report.checks.push(outcome(
            check_spec("jump_bound").unwrap(),
            Measurement {
                value: violations as f64,
                detail: format!("{} draws, ε in {:?}", audits.len(), cfg.estimate.epsilons),
            },
            &cfg.tolerances,
        ));
    }
    if cfg.estimate.system == SystemChoice::Diagonal {
        report.notes.push("diagonal preset: S = T on ℤ_L with |g| = |f|, a single-average variation".into());
    }
    Ok(report)
}

pub fn run_growth(cfg: &Resolved) -> std::result::Result<Report, CliError> {
    let ms = &cfg.growth.ms;
    let psi = cfg.kernel.mean_zero();
    let per_trial = truncation_trials(&cfg.ensemble, &psi, ms)?;
    let mut report = Report::new(provenance(cfg));
    let mut sup = vec![0.0f64; ms.len()];
    let mut cert = vec![0.0f64; ms.len()];
    let mut violations = 0usize;
    for (t, reports) in per_trial.iter().enumerate() {
        for (i, r) in reports.iter().enumerate() {
            sup[i] = sup[i].max(r.ratio);
            if r.tm_norm > 0.0 {
                let scale = r.ratio / r.tm_norm;
                cert[i] = cert[i].max((r.m as f64).sqrt() * r.square_norm * scale);
            }
            if !certificates_hold(r) {
                violations += 1;
            }
            report.rows.push(Row { trial: t, seed: cfg.ensemble.seed, ratio: r.ratio, grid: r.m as f64, sup: sup[i] });
        }
    }
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let positive = xs.iter().zip(&sup).filter(|(m, r)| **m > 0.0 && **r > 0.0).count();
    if positive < 3 {
        return Err(CliError::Config(format!(
            "growth fit needs at least 3 values of m with r(m) > 0, got {positive}"
        )));
    }
    report.fit = log_fit(&xs, &sup);
    let slope = report.fit.map(|f| f.slope).unwrap_or(f64::NAN);
    for (m, r) in ms.iter().zip(&sup) {
        report.envelope.push((format!("r({m})"), *r));
    }
    report.series.push(Series { name: "sup_ratio".into(), points: xs.iter().copied().zip(sup.iter().copied()).collect() });
    report.series.push(Series { name: "certificate".into(), points: xs.iter().copied().zip(cert).collect() });
    let specs = [check_spec("growth_slope").unwrap(), check_spec("growth_certificate").unwrap()];
    report.checks.push(outcome(
        specs[0],
        Measurement { value: slope, detail: format!("m in {ms:?}") },
        &cfg.tolerances,
    ));
    report.checks.push(outcome(
        specs[1],
        Measurement { value: violations as f64, detail: format!("{} pairs", cfg.ensemble.trials) },
        &cfg.tolerances,
    ));
    Ok(report)
}

pub fn run_transfer(cfg: &Resolved) -> std::result::Result<Report, CliError> {
    let tr = &cfg.transfer;
    let spec = &cfg.ensemble;
    let per_trial: Vec<Vec<(f64, f64, usize)>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let (f, g) = sample_ensemble(spec, t)?;
            let (nf, ng) = (f.lp_norm(4.0)?, g.lp_norm(4.0)?);
            if nf == 0.0 || ng == 0.0 {
                return Ok(Vec::new());
            }
            let (f, g) = (f.scaled(1.0 / nf), g.scaled(1.0 / ng));
            tr.ns
                .iter()
                .map(|&n| {
                    let r = transference_gap(&f, &g, n, tr.q, tr.stride)?;
                    Ok((r.max_l2_gap, r.l2_bound, r.pointwise_violations + r.l2_violations))
                })
                .collect()
        })
        .collect::<Result<_>>()
        .map_err(|e| match e {
            VarioError::Capacity(m) => CliError::Config(m),
            e => e.into(),
        })?;
    let mut report = Report::new(provenance(cfg));
    let mut sup = vec![0.0f64; tr.ns.len()];
    let mut violations = 0usize;
    for (t, gaps) in per_trial.iter().enumerate() {
        if gaps.is_empty() {
            report.notes.push(format!("trial {t} skipped: a zero field cannot be normalized"));
            continue;
        }
        for (i, &(gap, bound, v)) in gaps.iter().enumerate() {
            sup[i] = sup[i].max(gap);
            violations += v;
            let ratio = if bound > 0.0 { gap / bound } else { 0.0 };
            report.rows.push(Row { trial: t, seed: spec.seed, ratio, grid: tr.ns[i] as f64, sup: sup[i] });
        }
    }
    let xs: Vec<f64> = tr.ns.iter().map(|&n| n as f64).collect();
    report.fit = if xs.len() >= 3 { log_fit(&xs, &sup) } else { None };
    report.series.push(Series { name: "sup_l2_gap".into(), points: xs.iter().copied().zip(sup.iter().copied()).collect() });
    report.series.push(Series { name: "bound_4_over_n".into(), points: xs.iter().map(|&n| (n, 4.0 / n)).collect() });
    for (n, s) in tr.ns.iter().zip(&sup) {
        report.envelope.push((format!("sup_l2_gap(n={n})"), *s));
    }
    report.checks.push(outcome(
        check_spec("transference").unwrap(),
        Measurement { value: violations as f64, detail: format!("n in {:?}, q = {}", tr.ns, tr.q) },
        &cfg.tolerances,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_inputs_have_zero_ratio() {
        let lattice = Lattice2D::torus(8, 8).unwrap();
        let one = Field2D::from_fn(lattice, |_, _| 1.0).unwrap();
        let ns: Vec<usize> = (1..=8).collect();
        assert_eq!(variation_ratio(&one, &one, &ns, 2.0).unwrap(), Some(0.0));
        assert_eq!(diagonal_ratio(one.samples(), one.samples(), &ns, 2.0).unwrap(), Some(0.0));
        let zero = Field2D::zeros(lattice);
        assert_eq!(variation_ratio(&zero, &one, &ns, 2.0).unwrap(), None);
    }

    #[test]
    fn jump_counts_use_the_normalized_curve() {
        let dist = DistanceMatrix::scalars(&[0.0, 2.0, 0.0, 2.0]).unwrap();
        let (v2, counts) = jump_counts(&dist, 2.0, &[0.5, 1.0, 1.5]).unwrap();
        assert!((v2 - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(counts, [(0.5, 3), (1.0, 3), (1.5, 0)]);
        assert_eq!(jump_bound_violations(v2, &counts), 0);
        assert_eq!(jump_bound_violations(1.0, &[(1.0, 2)]), 1);
    }

    #[test]
    fn diagonal_is_a_single_average() {
        // with S = T the double average is the single average of f·g
        let f = [1.0, -2.0, 0.5, 3.0, -1.0];
        let g = [1.0, 1.0, -1.0, 1.0, -1.0];
        let ns = [1, 2, 3, 5];
        let r = diagonal_ratio(&f, &g, &ns, 2.0).unwrap().unwrap();
        let prod: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a * a.abs() * b.signum()).collect();
        let avg = |n: usize| -> Vec<f64> {
            (0..5).map(|x| (0..n).map(|i| prod[(x + i) % 5]).sum::<f64>() / n as f64).collect()
        };
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let curves: Vec<Vec<f64>> = ns.iter().map(|&n| avg(n)).collect();
        let mut best = 0.0f64;
        for mask in 1u32..16 {
            let idx: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
            best = best.max(idx.windows(2).map(|w| d(&curves[w[0]], &curves[w[1]]).powi(2)).sum());
        }
        let n4 = f.iter().map(|v| v.powi(4)).sum::<f64>().sqrt();
        assert!((r - best / (n4 * n4)).abs() <= 1e-12 * r.max(1.0));
    }
}
