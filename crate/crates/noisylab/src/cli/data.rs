//! Data-facing commands: conditional transforms, label flipping, dataset
//! synthesis, IDX ingestion and noise injection.

use super::{ensure_dir, parse_probs, write_json, write_manifest, EXIT_OK};
use crate::datasets::{
    load_idx_pair, make_circles, make_noisy_dataset, read_cache, read_idx, write_cache,
    write_idx_labels, IdxContent,
};
use crate::error::{Error, Result};
use crate::noise::{clean_conditional, noisy_conditional, NoiseModel};
use crate::rng::seeded;
use crate::ProbVector;
use clap::Args;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Clean conditional as comma-separated probabilities, e.g. 0.7,0.2,0.1.
    #[arg(long)]
    pub g: String,
    /// Flip probability; must satisfy 0 <= omega < (K-1)/K.
    #[arg(long)]
    pub omega: f64,
}

#[derive(Serialize)]
struct TransformReport {
    g: ProbVector,
    omega: f64,
    noisy: ProbVector,
    recovered: ProbVector,
    round_trip_error: f64,
}

pub fn noise_transform(out: &Path, args: TransformArgs) -> Result<i32> {
    let g = parse_probs(&args.g)?;
    let noisy = noisy_conditional(&g, args.omega)?;
    let recovered = clean_conditional(&noisy, args.omega)?;
    let report = TransformReport {
        round_trip_error: recovered.linf_distance(&g),
        g,
        omega: args.omega,
        noisy,
        recovered,
    };
    ensure_dir(out)?;
    let report_path = out.join("transform.json");
    write_json(&report_path, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_manifest(out, "noise transform", serde_json::to_value(&report)?, 0, &[&report_path])?;
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct FlipArgs {
    /// IDX label file to resample.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub omega: f64,
}

#[derive(Serialize)]
struct FlipReport {
    input: String,
    omega: f64,
    seed: u64,
    n: usize,
    changed: usize,
    changed_fraction: f64,
}

pub fn noise_flip(out: &Path, seed: u64, args: FlipArgs) -> Result<i32> {
    let labels = match read_idx(&args.labels)? {
        IdxContent::Labels(labels) => labels,
        IdxContent::Images { .. } => {
            return Err(Error::InvalidParameter("expected a label file, found images".into()))
        }
    };
    let k = 10;
    let noise = NoiseModel::symmetric(args.omega, k)?;
    let flipped = noise.flip_labels(&labels, None, &mut seeded(seed))?;
    let changed = labels.iter().zip(&flipped).filter(|(a, b)| a != b).count();

    ensure_dir(out)?;
    let labels_path = out.join("labels.idx");
    write_idx_labels(&labels_path, &flipped)?;
    let report = FlipReport {
        input: args.labels.display().to_string(),
        omega: args.omega,
        seed,
        n: labels.len(),
        changed,
        changed_fraction: changed as f64 / labels.len().max(1) as f64,
    };
    let report_path = out.join("flip.json");
    write_json(&report_path, &report)?;
    println!("flipped {}/{} labels", changed, labels.len());
    write_manifest(
        out,
        "noise flip",
        serde_json::to_value(&report)?,
        seed,
        &[&labels_path, &report_path],
    )?;
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct CirclesArgs {
    /// Total sample count; split evenly between the rings.
    #[arg(long)]
    pub n: usize,
    /// Gaussian perturbation sigma per coordinate.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Inner-ring radius.
    #[arg(long, default_value_t = 0.5)]
    pub factor: f64,
}

pub fn data_circles(out: &Path, seed: u64, args: CirclesArgs) -> Result<i32> {
    let mut dataset = make_circles(args.n, args.sigma, args.factor, &mut seeded(seed))?;
    dataset.meta.seed = Some(seed);
    ensure_dir(out)?;
    let cache_path = out.join("circles.nlds");
    let csv_path = out.join("circles.csv");
    write_cache(&cache_path, &dataset)?;
    std::fs::write(&csv_path, dataset.to_csv())?;
    println!("wrote {} samples to {}", dataset.len(), cache_path.display());
    write_manifest(
        out,
        "data circles",
        serde_json::json!({"n": args.n, "sigma": args.sigma, "factor": args.factor}),
        seed,
        &[&cache_path, &csv_path],
    )?;
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct IdxArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Serialize)]
struct IdxSummary {
    n: usize,
    dim: usize,
    k: usize,
    label_counts: Vec<usize>,
}

pub fn data_idx(out: &Path, args: IdxArgs) -> Result<i32> {
    let dataset = load_idx_pair(&args.images, &args.labels)?;
    let mut counts = vec![0usize; dataset.k];
    for y in &dataset.labels {
        counts[y.index()] += 1;
    }
    let summary = IdxSummary {
        n: dataset.len(),
        dim: dataset.dim(),
        k: dataset.k,
        label_counts: counts,
    };
    ensure_dir(out)?;
    let cache_path = out.join("dataset.nlds");
    let summary_path = out.join("summary.json");
    write_cache(&cache_path, &dataset)?;
    write_json(&summary_path, &summary)?;
    println!("ingested {} samples of dim {}", summary.n, summary.dim);
    write_manifest(
        out,
        "data idx",
        serde_json::json!({
            "images": args.images.display().to_string(),
            "labels": args.labels.display().to_string(),
        }),
        0,
        &[&cache_path, &summary_path],
    )?;
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct InjectArgs {
    /// Cached dataset (.nlds) to corrupt.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub omega: f64,
}

#[derive(Serialize)]
struct InjectReport {
    input: String,
    omega: f64,
    seed: u64,
    n: usize,
    changed_fraction: f64,
}

pub fn data_inject(out: &Path, seed: u64, args: InjectArgs) -> Result<i32> {
    let clean = read_cache(&args.input)?;
    let noise = NoiseModel::symmetric(args.omega, clean.k)?;
    let noisy = make_noisy_dataset(&clean, &noise, &mut seeded(seed), seed)?;
    let changed = noisy
        .labels
        .iter()
        .zip(noisy.clean_labels.as_deref().unwrap_or(&noisy.labels))
        .filter(|(a, b)| a != b)
        .count();
    ensure_dir(out)?;
    let cache_path = out.join("noisy.nlds");
    write_cache(&cache_path, &noisy)?;
    let report = InjectReport {
        input: args.input.display().to_string(),
        omega: args.omega,
        seed,
        n: noisy.len(),
        changed_fraction: changed as f64 / noisy.len().max(1) as f64,
    };
    let report_path = out.join("inject.json");
    write_json(&report_path, &report)?;
    println!("changed fraction {:.4}", report.changed_fraction);
    write_manifest(
        out,
        "data inject",
        serde_json::to_value(&report)?,
        seed,
        &[&cache_path, &report_path],
    )?;
    Ok(EXIT_OK)
}
