//! Acceptance run: one PASS/FAIL line per criterion at full protocol sizes,
//! each also held to its runtime budget. Exits nonzero if any line fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use variolab::checks::{check_spec, measure, outcome, CheckOutcome, SuiteContext, SuiteSettings};
use variolab::config::KernelChoice;
use variolab_core::kernels::Profile;

const SEED: u64 = 7;

struct Line {
    id: u32,
    title: &'static str,
    passed: bool,
    summary: String,
}

fn run_checks(ctx: &SuiteContext, names: &[&str]) -> Vec<CheckOutcome> {
    let tolerances = BTreeMap::new();
    names
        .iter()
        .map(|name| {
            let spec = check_spec(name).expect("known check");
            match measure(name, ctx) {
                Ok(m) => outcome(spec, m, &tolerances),
                Err(e) => CheckOutcome {
                    name: name.to_string(),
                    passed: false,
                    value: f64::NAN,
                    relation: spec.relation,
                    tolerance: spec.default_tolerance,
                    detail: format!("error: {e}"),
                },
            }
        })
        .collect()
}

fn criterion(
    id: u32,
    title: &'static str,
    budget: Duration,
    ctx: &SuiteContext,
    names: &[&str],
    lines: &mut Vec<Line>,
) {
    let start = Instant::now();
    let outcomes = run_checks(ctx, names);
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let mut parts: Vec<String> = outcomes
        .iter()
        .map(|o| {
            format!(
                "{}={} {} {} [{}]",
                o.name,
                variolab::report::num(o.value),
                o.relation.symbol(),
                variolab::report::num(o.tolerance),
                o.detail
            )
        })
        .collect();
    parts.push(format!("{:.1}s of {}s", elapsed.as_secs_f64(), budget.as_secs()));
    lines.push(Line { id, title, passed: in_budget && outcomes.iter().all(|o| o.passed), summary: parts.join("; ") });
    print_line(lines.last().unwrap());
}

fn print_line(l: &Line) {
    println!("{} {:>2} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.id, l.title, l.summary);
}

fn run_verify(config: &Path, out: &Path, threads: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_variolab"))
        .args(["verify", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .env_remove("VARIOLAB_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.code() != Some(0) {
        return Err(format!("exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    Ok(())
}

fn determinism(lines: &mut Vec<Line>) {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("temp dir");
    let config = dir.path().join("verify.toml");
    std::fs::write(&config, "command = \"verify\"\n").expect("write config");
    let (one, eight) = (dir.path().join("t1"), dir.path().join("t8"));
    let result = run_verify(&config, &one, 1).and_then(|_| run_verify(&config, &eight, 8)).and_then(|_| {
        let mut compared = Vec::new();
        for file in ["checks.csv", "report.csv"] {
            let a = std::fs::read(one.join(file)).map_err(|e| format!("{file}: {e}"))?;
            let b = std::fs::read(eight.join(file)).map_err(|e| format!("{file}: {e}"))?;
            if a != b {
                return Err(format!("{file} differs between thread counts"));
            }
            compared.push(format!("{file} {} bytes identical", a.len()));
        }
        Ok(compared.join(", "))
    });
    let (passed, summary) = match result {
        Ok(s) => (true, s),
        Err(e) => (false, e),
    };
    let summary = format!("{summary}; {:.1}s", start.elapsed().as_secs_f64());
    lines.push(Line { id: 13, title: "verify CSV identical with --threads 1 and --threads 8", passed, summary });
    print_line(lines.last().unwrap());
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this target
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let settings = SuiteSettings::acceptance();
    let kernel = KernelChoice { label: "gaussian".into(), profile: Profile::gaussian() };
    let ctx = SuiteContext { settings: &settings, seed: SEED, kernel: &kernel };
    let min = |m: u64| Duration::from_secs(60 * m);
    let secs = Duration::from_secs;
    let mut lines = Vec::new();

    criterion(1, "telescoping and tensorization identities", min(2), &ctx, &["telescoping", "tensorization"], &mut lines);
    criterion(2, "partition of unity", secs(30), &ctx, &["partition_of_unity"], &mut lines);
    criterion(3, "transference gap bound", min(2), &ctx, &["transference"], &mut lines);
    criterion(4, "orbit unroll identity", secs(30), &ctx, &["orbit_unroll"], &mut lines);
    criterion(5, "variation DP against enumeration", min(1), &ctx, &["variation_dp"], &mut lines);
    criterion(6, "fast paths against direct sums", min(3), &ctx, &["fast_paths"], &mut lines);
    criterion(7, "variation envelope flat in N", min(15), &ctx, &["boundedness_slope"], &mut lines);
    criterion(8, "square function envelope flat in N", min(10), &ctx, &["square_function_slope"], &mut lines);
    criterion(9, "truncation growth and certificates", min(10), &ctx, &["growth_slope", "growth_certificate"], &mut lines);
    criterion(10, "Gaussian form positivity", min(2), &ctx, &["gaussian_positivity"], &mut lines);
    criterion(11, "octave square bound and product constants", min(1), &ctx, &["octave_square_slack", "octave_constant_spread"], &mut lines);
    criterion(12, "symbol derivative exponents", min(1), &ctx, &["symbol_slopes"], &mut lines);
    determinism(&mut lines);

    let failed = lines.iter().filter(|l| !l.passed).count();
    println!("acceptance: {} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
