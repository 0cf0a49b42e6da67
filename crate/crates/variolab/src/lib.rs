//! Batch experiments over the `variolab_core` library: the verification
//! suite, constant estimation, truncation growth and transference studies.

use std::path::PathBuf;

use thiserror::Error;
use variolab_core::VarioError;

pub mod checks;
pub mod config;
pub mod experiments;
pub mod report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] VarioError),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                VarioError::Io { .. } | VarioError::Format { .. } => EXIT_IO,
                VarioError::Numeric(_) => EXIT_CHECK_FAILED,
                _ => EXIT_CONFIG,
            },
        }
    }
}

/// One CLI invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: config::Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    /// Worker threads; `None` or 0 uses one per core.
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub struct Completed {
    pub report: report::Report,
    pub out_dir: PathBuf,
    pub written: Vec<PathBuf>,
}

/// Environment variable overriding the output directory (below `--out`).
pub const OUT_ENV: &str = "VARIOLAB_OUT";

/// Loads the config, runs the command on a local thread pool and writes the
/// report. `--out` wins over `VARIOLAB_OUT`, which wins over `[output] dir`.
pub fn execute(inv: &Invocation) -> Result<Completed, CliError> {
    let (cfg, raw) = config::RunConfig::load(&inv.config)?;
    let base = inv.config.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    let resolved = cfg.resolve(inv.command, &base, &raw)?;
    let out_dir = inv
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| resolved.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("variolab-out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(inv.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} threads: {e}", inv.threads.unwrap_or(0))))?;
    let report = pool.install(|| experiments::run(&resolved))?;
    let written = report::emit_report(&report, &out_dir, &resolved.formats)?;
    Ok(Completed { report, out_dir, written })
}
