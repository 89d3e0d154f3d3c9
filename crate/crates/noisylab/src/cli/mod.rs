//! Batch command surface: invariant checks, loss audits, data synthesis,
//! experiment runs and report/figure emission. Every command writes its
//! artifacts plus one [`RunManifest`] under the `--out` directory.

mod checks;
mod data;
mod figures;
mod train;

pub use train::{DataSpec, ExperimentConfig};

use crate::error::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Exit codes: success / falsified check / usage error / I/O error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "noisylab", version, about = "Label-noise analysis toolkit")]
pub struct Cli {
    /// Artifact directory; created if absent.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed; falls back to NOISYLAB_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Label-noise transforms on conditionals and label files.
    #[command(subcommand)]
    Noise(NoiseCommand),
    /// Property and verdict checks; falsification sets exit code 1.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Grid and analytic risk minimisers for one conditional.
    Minimize(checks::MinimizeArgs),
    /// Calibration maps, entropy pair and decision agreement for a problem.
    Calibrate(checks::CalibrateArgs),
    /// Dataset synthesis, ingestion and noise injection.
    #[command(subcommand)]
    Data(DataCommand),
    /// Train an MLP per a JSON experiment config.
    Train(train::TrainArgs),
    /// Summarize metrics CSVs of finished runs.
    Report(figures::ReportArgs),
    /// Emit SVG charts from a metrics CSV.
    Figures(figures::FiguresArgs),
}

#[derive(Subcommand, Debug)]
pub enum NoiseCommand {
    /// Apply the closed-form noisy transform to a conditional and invert it.
    Transform(data::TransformArgs),
    /// Resample labels of an IDX label file under symmetric noise.
    Flip(data::FlipArgs),
}

#[derive(Subcommand, Debug)]
pub enum CheckCommand {
    /// Decision-agreement, entropy-increase and miscalibration properties on
    /// random finite problems.
    Props(checks::PropsArgs),
    /// Symmetry, properness and robustness verdicts for one loss.
    Loss(checks::LossArgs),
    /// Determinant-based loss: minimiser search cross-check and noise
    /// invariance of the loss gap.
    Dmi(checks::DmiArgs),
}

/// Shared flags resolved once per invocation.
#[derive(Args, Debug, Clone)]
pub struct Common {}

/// Provenance record; exactly one per artifact directory. The embedded
/// resolved config plus seed reproduce the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub created_unix: u64,
    pub outputs: Vec<String>,
    pub version: String,
}

pub fn config_hash(config: &serde_json::Value, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).expect("serializable config"));
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
    outputs: &[&Path],
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config_hash: config_hash(&config, seed),
        config,
        seed,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("NOISYLAB_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

/// Parses a comma-separated probability vector.
pub fn parse_probs(text: &str) -> Result<crate::ProbVector> {
    let values: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| Error::InvalidParameter(format!("bad probability list: {e}")))?;
    crate::ProbVector::new(values)
}

/// Runs one parsed invocation and returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    let seed = resolve_seed(cli.seed);
    let result = match cli.command {
        Command::Noise(NoiseCommand::Transform(args)) => data::noise_transform(&cli.out, args),
        Command::Noise(NoiseCommand::Flip(args)) => data::noise_flip(&cli.out, seed, args),
        Command::Check(CheckCommand::Props(args)) => checks::check_props(&cli.out, seed, args),
        Command::Check(CheckCommand::Loss(args)) => checks::check_loss(&cli.out, seed, args),
        Command::Check(CheckCommand::Dmi(args)) => checks::check_dmi(&cli.out, seed, args),
        Command::Minimize(args) => checks::minimize(&cli.out, args),
        Command::Calibrate(args) => checks::calibrate(&cli.out, args),
        Command::Data(DataCommand::Circles(args)) => data::data_circles(&cli.out, seed, args),
        Command::Data(DataCommand::Idx(args)) => data::data_idx(&cli.out, args),
        Command::Data(DataCommand::Inject(args)) => data::data_inject(&cli.out, seed, args),
        Command::Train(args) => train::train(&cli.out, cli.seed, args),
        Command::Report(args) => figures::report(&cli.out, args),
        Command::Figures(args) => figures::figures(&cli.out, args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io(_) | Error::Idx(_) | Error::Checkpoint(_) => EXIT_IO,
                _ => EXIT_USAGE,
            }
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum DataCommand {
    /// Two concentric noisy rings with balanced binary labels.
    Circles(data::CirclesArgs),
    /// Ingest an IDX image/label pair into the dataset cache format.
    Idx(data::IdxArgs),
    /// Inject symmetric label noise into a cached dataset.
    Inject(data::InjectArgs),
}
