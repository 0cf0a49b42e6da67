//! Report assembly and emission as CSV, SVG and plain text.
//!
//! `report.csv` has the fixed columns `trial,seed,ratio,grid,sup,slope,ci_low,ci_high`.
//! Trial rows leave the fit columns empty; at most one row with `trial = fit`
//! carries the fitted slope and its 95% interval. Numbers are written in
//! shortest round-trip form, so re-parsing reproduces them exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use variolab_core::numerics::LineFit;

use crate::checks::CheckOutcome;
use crate::config::OutputFormat;
use crate::CliError;

pub const REPORT_COLUMNS: [&str; 8] = ["trial", "seed", "ratio", "grid", "sup", "slope", "ci_low", "ci_high"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub trial: usize,
    pub seed: u64,
    pub ratio: f64,
    /// `n` for estimate and transfer rows, `m` for growth rows.
    pub grid: f64,
    /// Running supremum over the trials so far at this grid value.
    pub sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Fit {
    /// Slope with a two-sided 95% Student t interval.
    pub fn from_line(fit: &LineFit) -> Fit {
        let half = if fit.points > 2 && fit.slope_se.is_finite() {
            let t = StudentsT::new(0.0, 1.0, (fit.points - 2) as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.975);
            t * fit.slope_se
        } else {
            f64::NAN
        };
        Fit { slope: fit.slope, ci_low: fit.slope - half, ci_high: fit.slope + half }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[0, max]`.
    pub fn of(values: &[f64], bins: usize) -> Histogram {
        let hi = values.iter().copied().fold(0.0f64, f64::max);
        let hi = if hi > 0.0 { hi } else { 1.0 };
        let edges: Vec<f64> = (0..=bins).map(|i| hi * i as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / hi) * bins as f64).floor() as usize;
            counts[b.min(bins - 1)] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub version: String,
    pub core_version: String,
    pub config_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub provenance: Provenance,
    pub rows: Vec<Row>,
    pub fit: Option<Fit>,
    pub series: Vec<Series>,
    pub checks: Vec<CheckOutcome>,
    /// Named constants; every one is an empirical lower envelope of the
    /// unknown best constant.
    pub envelope: Vec<(String, f64)>,
    pub histogram: Option<Histogram>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(provenance: Provenance) -> Self {
        Report {
            provenance,
            rows: Vec::new(),
            fit: None,
            series: Vec::new(),
            checks: Vec::new(),
            envelope: Vec::new(),
            histogram: None,
            notes: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn csv_error(e: csv::Error) -> CliError {
    let msg = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: PathBuf::from("<csv>"), source },
        _ => CliError::Config(format!("csv: {msg}")),
    }
}

pub fn report_csv(report: &Report) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).map_err(csv_error)?;
    for r in &report.rows {
        w.write_record([r.trial.to_string(), r.seed.to_string(), num(r.ratio), num(r.grid), num(r.sup)].iter().chain(&[
            String::new(),
            String::new(),
            String::new(),
        ]))
        .map_err(csv_error)?;
    }
    if let Some(f) = &report.fit {
        let seed = report.provenance.seed.to_string();
        w.write_record(["fit", &seed, "", "", "", &num(f.slope), &num(f.ci_low), &num(f.ci_high)])
            .map_err(csv_error)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv_error(e.into_error().into()))?).expect("csv is utf-8"))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| CliError::Config(format!("report.csv: bad {what} `{s}`")))
}

/// Rows and fit of a `report.csv`.
pub fn parse_report_csv(text: &str) -> Result<(Vec<Row>, Option<Fit>), CliError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != REPORT_COLUMNS {
        return Err(CliError::Config(format!("report.csv: unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    let mut fit = None;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        if &rec[0] == "fit" {
            fit = Some(Fit {
                slope: parse_f64(&rec[5], "slope")?,
                ci_low: parse_f64(&rec[6], "ci_low")?,
                ci_high: parse_f64(&rec[7], "ci_high")?,
            });
        } else {
            rows.push(Row {
                trial: rec[0].parse().map_err(|_| CliError::Config(format!("report.csv: bad trial `{}`", &rec[0])))?,
                seed: rec[1].parse().map_err(|_| CliError::Config(format!("report.csv: bad seed `{}`", &rec[1])))?,
                ratio: parse_f64(&rec[2], "ratio")?,
                grid: parse_f64(&rec[3], "grid")?,
                sup: parse_f64(&rec[4], "sup")?,
            });
        }
    }
    Ok((rows, fit))
}

pub fn checks_csv(checks: &[CheckOutcome]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check", "passed", "value", "relation", "tolerance", "detail"]).map_err(csv_error)?;
    for c in checks {
        w.write_record([
            c.name.as_str(),
            if c.passed { "true" } else { "false" },
            &num(c.value),
            c.relation.symbol(),
            &num(c.tolerance),
            &c.detail,
        ])
        .map_err(csv_error)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv_error(e.into_error().into()))?).expect("csv is utf-8"))
}

fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", num(h.edges[i]), num(h.edges[i + 1]), c));
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Log-log plot with one polyline per series; points with a non-positive
/// coordinate are dropped.
pub fn svg_plot(title: &str, series: &[Series]) -> String {
    let (w, h, pad) = (640.0, 420.0, 56.0);
    let logs: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.log10(), p.1.log10())).collect())
        .collect();
    let all: Vec<(f64, f64)> = logs.iter().flatten().copied().collect();
    let span = |sel: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{pad}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
         <rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n\
         <text x=\"{pad}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">log10 x: {x0:.3} .. {x1:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">log10 y: {y0:.3} .. {y1:.3}</text>\n",
        escape(title),
        w - 2.0 * pad,
        h - 2.0 * pad,
        h - 20.0,
        w / 2.0,
        h - 20.0,
    );
    for (i, (s, pts)) in series.iter().zip(&logs).enumerate() {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let colour = PALETTE[i % PALETTE.len()];
        out.push_str(&format!(
            "<polyline data-series=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            escape(&s.name),
            coords.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{colour}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            w - pad - 150.0,
            pad + 16.0 + 14.0 * i as f64,
            escape(&s.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

pub fn text_summary(report: &Report) -> String {
    let p = &report.provenance;
    let mut out = format!(
        "variolab {} ({} core {})\nseed {}\nconfig sha256 {}\n",
        p.command, p.version, p.core_version, p.seed, p.config_sha256
    );
    if !report.checks.is_empty() {
        out.push_str("\nchecks:\n");
        for c in &report.checks {
            out.push_str(&format!(
                "  {} {:<24} {} {} {}  ({})\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                num(c.value),
                c.relation.symbol(),
                num(c.tolerance),
                c.detail
            ));
        }
    }
    if !report.envelope.is_empty() {
        out.push_str("\nempirical lower envelopes (not proven constants):\n");
        for (name, v) in &report.envelope {
            out.push_str(&format!("  {name} = {}\n", num(*v)));
        }
    }
    if let Some(f) = &report.fit {
        out.push_str(&format!("\nfitted slope {} (95% CI {} .. {})\n", num(f.slope), num(f.ci_low), num(f.ci_high)));
    }
    for n in &report.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

#[derive(Serialize)]
struct ProvenanceFile<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    envelope_label: &'static str,
    envelope: Vec<(&'a str, f64)>,
    fit: Option<Fit>,
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
    written.push(path);
    Ok(())
}

/// Writes the report files into `dir` and returns their paths.
pub fn emit_report(report: &Report, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        write(dir.join("report.csv"), &report_csv(report)?, &mut written)?;
        if !report.checks.is_empty() {
            write(dir.join("checks.csv"), &checks_csv(&report.checks)?, &mut written)?;
        }
        if let Some(h) = &report.histogram {
            write(dir.join("histogram.csv"), &histogram_csv(h), &mut written)?;
        }
    }
    if formats.contains(&OutputFormat::Svg) {
        let title = format!("variolab {}", report.provenance.command);
        write(dir.join("plot.svg"), &svg_plot(&title, &report.series), &mut written)?;
    }
    if formats.contains(&OutputFormat::Text) {
        write(dir.join("summary.txt"), &text_summary(report), &mut written)?;
    }
    let prov = ProvenanceFile {
        provenance: &report.provenance,
        envelope_label: "empirical lower envelope",
        envelope: report.envelope.iter().map(|(n, v)| (n.as_str(), *v)).collect(),
        fit: report.fit,
    };
    let json = serde_json::to_string_pretty(&prov).expect("provenance serializes");
    write(dir.join("provenance.json"), &(json + "\n"), &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provenance() -> Provenance {
        Provenance {
            command: "estimate".into(),
            seed: 3,
            version: "0".into(),
            core_version: "0".into(),
            config_sha256: String::new(),
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let csv = report_csv(&Report::new(provenance())).unwrap();
        assert_eq!(csv, "trial,seed,ratio,grid,sup,slope,ci_low,ci_high\n");
        assert_eq!(parse_report_csv(&csv).unwrap(), (vec![], None));
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, -0.0, 1.5, 1e-17, -3.25e-9, 1e300, 0.1 + 0.2, f64::MIN_POSITIVE, 123456.789] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits(), "{x}");
        }
        assert_eq!(num(1e-17), "1e-17");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn histogram_bins() {
        let h = Histogram::of(&[0.0, 0.5, 1.0, 0.99], 2);
        assert_eq!(h.counts, vec![1, 3]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
        assert_eq!(Histogram::of(&[0.0], 3).counts, vec![1, 0, 0]);
    }

    #[test]
    fn fit_interval_is_symmetric() {
        let fit = LineFit { slope: 0.5, intercept: 0.0, slope_se: 0.1, rms_residual: 0.0, points: 12 };
        let f = Fit::from_line(&fit);
        assert!((f.ci_high - 0.5 - (0.5 - f.ci_low)).abs() < 1e-15);
        // t_{0.975, 10} = 2.228
        assert!((f.ci_high - 0.5 - 0.2228).abs() < 1e-3);
    }
}
