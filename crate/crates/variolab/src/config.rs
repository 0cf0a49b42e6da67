//! Run configuration: a single TOML file, every section optional.
//!
//! The grammar is documented in the crate README. Unknown keys are rejected
//! at every level; relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use variolab_core::averages::ScaleGrid;
use variolab_core::fields::{EnsembleKind, EnsembleSpec, Lattice2D};
use variolab_core::kernels::{build_chi, Kernel1D, KernelGrid, Profile};

use crate::checks::SuiteSettings;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    Estimate,
    Growth,
    Transfer,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Estimate => "estimate",
            Command::Growth => "growth",
            Command::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub scales: Option<ScalesConfig>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub growth: GrowthConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub verify: SuiteSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeChoice {
    Torus,
    Window,
    PeriodicWindow,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub kind: LatticeChoice,
    pub n1: usize,
    pub n2: usize,
    pub spacing: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { kind: LatticeChoice::Torus, n1: 32, n2: 32, spacing: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Indicator,
    #[default]
    Gaussian,
    ChiFamily,
    File,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Kernel container, for `kind = "file"` only.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicRange {
    pub from: i32,
    pub to: i32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerOctave {
    pub from: i32,
    pub to: i32,
    pub count: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalesConfig {
    pub list: Option<Vec<f64>>,
    pub dyadic: Option<DyadicRange>,
    pub per_octave: Option<PerOctave>,
}

impl ScalesConfig {
    pub fn grid(&self) -> Result<ScaleGrid, CliError> {
        let grid = match (&self.list, &self.dyadic, &self.per_octave) {
            (Some(list), None, None) => ScaleGrid::new(list.clone()),
            (None, Some(d), None) => ScaleGrid::dyadic(d.from, d.to),
            (None, None, Some(p)) => {
                if p.count == 0 || p.from >= p.to {
                    return Err(CliError::Config(
                        "scales.per_octave needs count >= 1 and from < to".into(),
                    ));
                }
                let mut s: Vec<f64> = (p.from..p.to)
                    .flat_map(|k| (0..p.count).map(move |i| 2f64.powf(k as f64 + i as f64 / p.count as f64)))
                    .collect();
                s.push(2f64.powi(p.to));
                ScaleGrid::new(s)
            }
            _ => {
                return Err(CliError::Config(
                    "[scales] needs exactly one of list, dyadic, per_octave".into(),
                ))
            }
        };
        grid.map_err(|e| CliError::Config(format!("[scales]: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleChoice {
    GaussianWhite,
    Rademacher,
    DeltaSpike,
    SmoothLowpass,
    CustomFile,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub kind: EnsembleChoice,
    pub seed: u64,
    pub trials: usize,
    pub f_path: Option<PathBuf>,
    pub g_path: Option<PathBuf>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { kind: EnsembleChoice::Rademacher, seed: 7, trials: 32, f_path: None, g_path: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Svg,
    Text,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, formats: vec![OutputFormat::Csv, OutputFormat::Svg, OutputFormat::Text] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemChoice {
    /// Sequences on the configured lattice and the discrete averages.
    Lattice,
    /// `X = ℤ_{|lattice|}`, `S = T` the unit shift, `|g| = |f|`.
    Diagonal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub system: SystemChoice,
    pub rho: f64,
    pub search_steps: usize,
    pub restarts: usize,
    pub step_size: f64,
    pub histogram_bins: usize,
    pub epsilons: Vec<f64>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            system: SystemChoice::Lattice,
            rho: 2.0,
            search_steps: 32,
            restarts: 1,
            step_size: 0.25,
            histogram_bins: 16,
            epsilons: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConfig {
    pub ms: Vec<usize>,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig { ms: (1..=8).collect() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub ns: Vec<usize>,
    pub q: u32,
    pub stride: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig { ns: vec![2, 4, 8, 16], q: 3, stride: 2 }
    }
}

/// Averaging kernel selected by `[kernel]`.
#[derive(Debug, Clone)]
pub struct KernelChoice {
    pub label: String,
    pub profile: Profile,
}

impl KernelChoice {
    /// The kernel itself when it has mean zero, otherwise `φ - 2φ(2·)`.
    pub fn mean_zero(&self) -> Profile {
        if self.profile.mass().abs() <= 1e-8 {
            self.profile.clone()
        } else {
            self.profile.psi_of()
        }
    }
}

/// Configuration with files loaded and every default applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub lattice: Lattice2D,
    pub kernel: KernelChoice,
    pub scales: Option<ScaleGrid>,
    pub ensemble: EnsembleSpec,
    pub tolerances: BTreeMap<String, f64>,
    pub formats: Vec<OutputFormat>,
    pub output_dir: Option<PathBuf>,
    pub estimate: EstimateConfig,
    pub growth: GrowthConfig,
    pub transfer: TransferConfig,
    pub verify: SuiteSettings,
    /// SHA-256 of the raw config bytes, lower-case hex.
    pub config_hash: String,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        let cfg = toml::from_str(&text).map_err(|e: toml::de::Error| {
            CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_end()))
        })?;
        Ok((cfg, text))
    }

    /// Applies defaults, checks consistency and loads referenced files.
    pub fn resolve(&self, command: Command, base_dir: &Path, raw: &str) -> Result<Resolved, CliError> {
        use sha2::{Digest, Sha256};
        if let Some(c) = self.command {
            if c != command {
                return Err(CliError::Config(format!(
                    "config is for `{}` but the `{}` subcommand was invoked",
                    c.name(),
                    command.name()
                )));
            }
        }
        let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let l = &self.lattice;
        let lattice = match l.kind {
            LatticeChoice::Torus => {
                if l.spacing != 1.0 {
                    return Err(CliError::Config("[lattice] a torus has spacing 1".into()));
                }
                Lattice2D::torus(l.n1, l.n2)
            }
            LatticeChoice::Window => Lattice2D::window(l.n1, l.n2, l.spacing),
            LatticeChoice::PeriodicWindow => Lattice2D::periodic_window(l.n1, l.n2, l.spacing),
        }
        .map_err(|e| CliError::Config(format!("[lattice]: {e}")))?;

        if (self.kernel.kind == KernelKind::File) != self.kernel.path.is_some() {
            return Err(CliError::Config("[kernel] path is required for kind = \"file\" and allowed only there".into()));
        }
        let kernel = match self.kernel.kind {
            KernelKind::Indicator => KernelChoice { label: "indicator".into(), profile: Profile::indicator() },
            KernelKind::Gaussian => KernelChoice { label: "gaussian".into(), profile: Profile::gaussian() },
            KernelKind::ChiFamily => {
                let chi = build_chi(KernelGrid::default())?;
                KernelChoice { label: "chi-family".into(), profile: Profile::from_kernel(&chi)? }
            }
            KernelKind::File => {
                let path = at(self.kernel.path.as_deref().expect("checked above"));
                let k = Kernel1D::read_file(&path)?;
                let profile = Profile::from_kernel(&k)
                    .map_err(|e| CliError::Config(format!("kernel file {}: {e}", path.display())))?;
                KernelChoice { label: format!("file:{}", path.display()), profile }
            }
        };

        let e = &self.ensemble;
        if e.trials == 0 {
            return Err(CliError::Config("[ensemble] trials must be at least 1".into()));
        }
        let kind = match e.kind {
            EnsembleChoice::GaussianWhite => EnsembleKind::GaussianWhite,
            EnsembleChoice::Rademacher => EnsembleKind::Rademacher,
            EnsembleChoice::DeltaSpike => EnsembleKind::DeltaSpike,
            EnsembleChoice::SmoothLowpass => EnsembleKind::SmoothLowpass,
            EnsembleChoice::CustomFile => match (&e.f_path, &e.g_path) {
                (Some(f), Some(g)) => EnsembleKind::CustomFile {
                    f_path: at(f).to_string_lossy().into_owned(),
                    g_path: at(g).to_string_lossy().into_owned(),
                },
                _ => {
                    return Err(CliError::Config(
                        "[ensemble] kind = \"custom-file\" needs f_path and g_path".into(),
                    ))
                }
            },
        };
        if e.kind != EnsembleChoice::CustomFile && (e.f_path.is_some() || e.g_path.is_some()) {
            return Err(CliError::Config("[ensemble] f_path/g_path are only used by custom-file".into()));
        }
        let ensemble = EnsembleSpec { seed: e.seed, trials: e.trials, kind, lattice };

        let scales = self.scales.as_ref().map(|s| s.grid()).transpose()?;
        let known = crate::checks::check_names();
        for (name, tol) in &self.tolerances {
            if !known.contains(&name.as_str()) {
                return Err(CliError::Config(format!(
                    "[tolerances] unknown check `{name}`; known checks: {}",
                    known.join(", ")
                )));
            }
            if !tol.is_finite() {
                return Err(CliError::Config(format!("[tolerances] {name} must be finite")));
            }
        }
        if !(self.estimate.rho >= 1.0) {
            return Err(CliError::Config("[estimate] rho must be at least 1".into()));
        }
        if self.estimate.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(CliError::Config("[estimate] epsilons must be positive".into()));
        }
        if self.estimate.histogram_bins == 0 {
            return Err(CliError::Config("[estimate] histogram_bins must be at least 1".into()));
        }
        if self.transfer.ns.is_empty() || self.transfer.ns.contains(&0) {
            return Err(CliError::Config("[transfer] ns must be a nonempty list of positive integers".into()));
        }
        if command == Command::Growth && self.growth.ms.len() < 3 {
            return Err(CliError::Config(format!(
                "[growth] ms has {} values; the slope fit needs at least 3",
                self.growth.ms.len()
            )));
        }
        self.verify.validate()?;

        Ok(Resolved {
            command,
            lattice,
            kernel,
            scales,
            ensemble,
            tolerances: self.tolerances.clone(),
            formats: self.output.formats.clone(),
            output_dir: self.output.dir.as_ref().map(|p| at(p)),
            estimate: self.estimate.clone(),
            growth: self.growth.clone(),
            transfer: self.transfer.clone(),
            verify: self.verify.clone(),
            config_hash: hex(&Sha256::digest(raw.as_bytes())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        let r = cfg.resolve(Command::Verify, Path::new("."), "").unwrap();
        assert_eq!(r.lattice, Lattice2D::torus(32, 32).unwrap());
        assert_eq!(r.kernel.label, "gaussian");
        assert_eq!(r.ensemble.seed, 7);
        assert!(r.scales.is_none());
        assert_eq!(r.config_hash.len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("colour = 1").is_err());
        assert!(RunConfig::parse("[lattice]\nn3 = 4").is_err());
        assert!(RunConfig::parse("[kernel]\nkind = \"gaussian\"\nwidth = 2").is_err());
        assert!(RunConfig::parse("[scales]\nlist = [1.0]\nextra = 1").is_err());
    }

    #[test]
    fn scale_specs() {
        let cfg = RunConfig::parse("[scales]\nper_octave = { from = 0, to = 2, count = 2 }").unwrap();
        let g = cfg.scales.unwrap().grid().unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.scales()[4], 4.0);
        assert!((g.scales()[1] - 2f64.sqrt()).abs() < 1e-15);
        let cfg = RunConfig::parse("[scales]\nlist = [1.0, 2.0]\ndyadic = { from = 0, to = 1 }").unwrap();
        assert!(cfg.scales.unwrap().grid().is_err());
    }

    #[test]
    fn consistency_errors() {
        let bad = |text: &str, cmd: Command| RunConfig::parse(text).unwrap().resolve(cmd, Path::new("."), text);
        assert!(matches!(bad("command = \"growth\"", Command::Verify), Err(CliError::Config(_))));
        assert!(matches!(bad("[tolerances]\nnonsense = 1.0", Command::Verify), Err(CliError::Config(_))));
        assert!(matches!(bad("[growth]\nms = [1, 2]", Command::Growth), Err(CliError::Config(_))));
        assert!(matches!(bad("[lattice]\nspacing = 0.5", Command::Verify), Err(CliError::Config(_))));
        assert!(matches!(bad("[ensemble]\nkind = \"custom-file\"", Command::Estimate), Err(CliError::Config(_))));
    }
}
