use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use variolab::report::{self, parse_report_csv, Provenance, Report, Row, Series};
use variolab_core::fields::{write_field, Field2D, Lattice2D};

fn variolab(sub: &str, config: &Path, out: Option<&Path>) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_variolab"));
    cmd.arg(sub).arg("--config").arg(config).env_remove(variolab::OUT_ENV);
    if let Some(out) = out {
        cmd.arg("--out").arg(out);
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn variolab")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read_rows(dir: &Path) -> Vec<Row> {
    let text = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    parse_report_csv(&text).unwrap().0
}

const BASELINE: &str = r#"
command = "estimate"
[lattice]
kind = "torus"
n1 = 32
n2 = 32
[scales]
list = [1, 2, 4, 8, 16]
[ensemble]
kind = "rademacher"
seed = 7
trials = 200
[estimate]
search_steps = 0
"#;

#[test]
fn default_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "empty.toml", "");
    let out = dir.path().join("out");
    let result = run(&mut variolab("verify", &config, Some(&out)));
    assert_eq!(result.status.code(), Some(0), "{}", String::from_utf8_lossy(&result.stderr));
    let checks = std::fs::read_to_string(out.join("checks.csv")).unwrap();
    assert_eq!(checks.lines().count(), 1 + variolab::checks::check_names().len());
    assert!(checks.lines().skip(1).all(|l| l.split(',').nth(1) == Some("true")));
    assert!(out.join("provenance.json").exists());
}

#[test]
fn corrupted_kernel_file_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = write(dir.path(), "broken.kernel", "\u{1}\u{2}garbage\u{ff}");
    let config = write(dir.path(), "run.toml", "[kernel]\nkind = \"file\"\npath = \"broken.kernel\"\n");
    let result = run(&mut variolab("verify", &config, Some(&dir.path().join("out"))));
    assert_eq!(result.status.code(), Some(variolab::EXIT_IO));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains(kernel.file_name().unwrap().to_str().unwrap()), "{stderr}");
}

#[test]
fn tightened_tolerance_fails_only_that_check() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "tight.toml", "[tolerances]\ntelescoping = 1e-20\n");
    let out = dir.path().join("out");
    let result = run(&mut variolab("verify", &config, Some(&out)));
    assert_eq!(result.status.code(), Some(variolab::EXIT_CHECK_FAILED));
    let checks = std::fs::read_to_string(out.join("checks.csv")).unwrap();
    let failed: Vec<&str> = checks
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("false"))
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(failed, ["telescoping"]);
}

#[test]
fn constant_fields_have_zero_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let ones = Field2D::from_fn(Lattice2D::torus(8, 8).unwrap(), |_, _| 1.0).unwrap();
    write_field(&dir.path().join("f.field"), &ones).unwrap();
    write_field(&dir.path().join("g.field"), &ones).unwrap();
    let config = write(
        dir.path(),
        "ones.toml",
        "[lattice]\nkind = \"torus\"\nn1 = 8\nn2 = 8\n[ensemble]\nkind = \"custom-file\"\nf_path = \"f.field\"\ng_path = \"g.field\"\ntrials = 1\n",
    );
    let out = dir.path().join("out");
    let result = run(&mut variolab("estimate", &config, Some(&out)));
    assert_eq!(result.status.code(), Some(0), "{}", String::from_utf8_lossy(&result.stderr));
    let rows = read_rows(&out);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ratio == 0.0 && r.sup == 0.0));
}

#[test]
fn rademacher_baseline_is_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "baseline.toml", BASELINE);
    let out = dir.path().join("out");
    let result = run(&mut variolab("estimate", &config, Some(&out)));
    assert_eq!(result.status.code(), Some(0));
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 200);
    assert_eq!(rows.last().unwrap().sup.to_bits(), 1.0041503906249998f64.to_bits());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "baseline.toml", BASELINE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&mut variolab("estimate", &config, Some(&a))).status.success());
    assert!(run(variolab("estimate", &config, Some(&b)).args(["--threads", "3"])).status.success());
    for file in ["report.csv", "histogram.csv", "plot.svg", "provenance.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}

fn provenance() -> Provenance {
    Provenance {
        command: "estimate".into(),
        seed: 1,
        version: "0.1.0".into(),
        core_version: variolab_core::VERSION.into(),
        config_sha256: "00".into(),
    }
}

#[test]
fn empty_report_csv_is_header_only() {
    let text = report::report_csv(&Report::new(provenance())).unwrap();
    assert_eq!(text.trim_end(), report::REPORT_COLUMNS.join(","));
    let (rows, fit) = parse_report_csv(&text).unwrap();
    assert!(rows.is_empty() && fit.is_none());
}

#[test]
fn report_csv_round_trips() {
    let mut r = Report::new(provenance());
    r.rows = (0..5)
        .map(|t| Row { trial: t, seed: 1, ratio: 0.1 * t as f64 + 1e-17, grid: 2f64.powi(t as i32), sup: 3.0e20 })
        .collect();
    r.fit = Some(report::Fit { slope: 0.0123, ci_low: -0.5, ci_high: 0.5246 });
    let (rows, fit) = parse_report_csv(&report::report_csv(&r).unwrap()).unwrap();
    assert_eq!(rows, r.rows);
    assert_eq!(fit, r.fit);
}

#[test]
fn svg_has_one_polyline_per_series() {
    let series: Vec<Series> = (1..=3)
        .map(|k| Series { name: format!("s{k}"), points: (1..=4).map(|i| (i as f64, (k * i) as f64)).collect() })
        .collect();
    let svg = report::svg_plot("test", &series);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(lines.len(), series.len());
    let names: Vec<_> = lines.iter().map(|n| n.attribute("data-series").unwrap()).collect();
    assert_eq!(names, ["s1", "s2", "s3"]);
}

#[test]
fn growth_needs_three_truncations() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "growth.toml", "[growth]\nms = [1, 2]\n");
    let result = run(&mut variolab("growth", &config, Some(&dir.path().join("out"))));
    assert_eq!(result.status.code(), Some(variolab::EXIT_CONFIG));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "typo.toml", "[lattice]\nsize = 4\n");
    let result = run(&mut variolab("verify", &config, None));
    assert_eq!(result.status.code(), Some(variolab::EXIT_CONFIG));
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&mut variolab("verify", &dir.path().join("absent.toml"), None));
    assert_eq!(result.status.code(), Some(variolab::EXIT_IO));
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "est.toml", &format!("{BASELINE}[output]\ndir = \"from-config\"\n"));
    let (flag, env) = (dir.path().join("from-flag"), dir.path().join("from-env"));

    let result = run(variolab("estimate", &config, Some(&flag)).env(variolab::OUT_ENV, &env));
    assert!(result.status.success());
    assert!(flag.join("report.csv").exists() && !env.exists());

    let result = run(variolab("estimate", &config, None).env(variolab::OUT_ENV, &env));
    assert!(result.status.success());
    assert!(env.join("report.csv").exists());
    assert!(!dir.path().join("from-config").exists());

    let result = run(&mut variolab("estimate", &config, None));
    assert!(result.status.success());
    assert!(dir.path().join("from-config").join("report.csv").exists());
}

#[test]
fn epsilons_add_jump_counts_and_bound_check() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASELINE.replace("search_steps = 0", "search_steps = 0\nepsilons = [0.05, 0.3]");
    let config = write(dir.path(), "eps.toml", &text);
    let out = dir.path().join("out");
    let result = run(&mut variolab("estimate", &config, Some(&out)));
    assert_eq!(result.status.code(), Some(0));
    let checks = std::fs::read_to_string(out.join("checks.csv")).unwrap();
    assert!(checks.lines().nth(1).unwrap().starts_with("jump_bound,true,0,"), "{checks}");
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("max_jumps(0.05)") && summary.contains("max_jumps(0.3)"));
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let (cfg, raw) = variolab::config::RunConfig::load(&path).unwrap();
        let command = cfg.command.expect("shipped configs name their command");
        cfg.resolve(command, &dir, &raw).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert_eq!(seen, 5);
}
