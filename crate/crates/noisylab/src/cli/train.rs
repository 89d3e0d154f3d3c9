//! Experiment runner: resolves a JSON config (flags win over file values),
//! prepares data, trains, and writes metrics, checkpoints and a manifest.
//! `--grid` fans independent configs out across worker threads.

use super::{config_hash, ensure_dir, write_json, write_manifest, EXIT_OK};
use crate::datasets::{
    load_idx_pair, make_circles, make_noisy_dataset, read_cache, split, LabeledDataset,
};
use crate::error::{Error, Result};
use crate::losses::LossId;
use crate::noise::NoiseModel;
use crate::rng::derive_stream;
use crate::trainer::{
    evaluate_model, metrics_to_csv, save_checkpoint, train_run, DataSplit, TrainConfig,
    TrainOutcome,
};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Where the train/val/test data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    /// Concentric-rings generator plus a seeded split.
    Circles {
        n: usize,
        sigma: f64,
        factor: f64,
        split: (usize, usize, usize),
    },
    /// IDX image/label pair plus a seeded split.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        split: (usize, usize, usize),
    },
    /// Pre-built dataset caches, one per role.
    Cache {
        train: PathBuf,
        val: Option<PathBuf>,
        test: PathBuf,
    },
}

/// Full experiment description: data source, injected flip probability and
/// training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub data: DataSpec,
    /// Symmetric flip probability injected into train and validation labels;
    /// test labels stay clean.
    pub omega: f64,
    /// Seed for data generation, splitting and noise injection.
    pub seed: u64,
    pub train: TrainConfig,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Experiment config JSON.
    #[arg(long, required_unless_present = "grid", conflicts_with = "grid")]
    pub config: Option<PathBuf>,
    /// JSON array of experiment configs run in parallel, one subdirectory
    /// per config.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Override: epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override: training loss.
    #[arg(long)]
    pub loss: Option<super::checks::LossIdArg>,
    /// Override: learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Override: flip probability.
    #[arg(long)]
    pub omega: Option<f64>,
}

fn apply_overrides(config: &mut ExperimentConfig, seed_flag: Option<u64>, args: &TrainArgs) {
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    if let Some(loss) = args.loss {
        config.train.loss = LossId::from(loss);
    }
    if let Some(lr) = args.learning_rate {
        config.train.learning_rate = lr;
    }
    if let Some(omega) = args.omega {
        config.omega = omega;
    }
    if let Some(seed) = seed_flag {
        config.seed = seed;
        config.train.seed = seed;
    }
}

/// Materializes the three splits; noise goes into train and validation
/// labels only.
pub fn prepare_data(
    config: &ExperimentConfig,
) -> Result<(LabeledDataset, Option<LabeledDataset>, LabeledDataset)> {
    let (train, val, test) = match &config.data {
        DataSpec::Circles { n, sigma, factor, split: sizes } => {
            let data = make_circles(*n, *sigma, *factor, &mut derive_stream(config.seed, 10))?;
            let (train, val, test) = split(&data, *sizes, &mut derive_stream(config.seed, 11))?;
            (train, Some(val), test)
        }
        DataSpec::Idx { images, labels, split: sizes } => {
            let data = load_idx_pair(images, labels)?;
            let (train, val, test) = split(&data, *sizes, &mut derive_stream(config.seed, 11))?;
            (train, Some(val), test)
        }
        DataSpec::Cache { train, val, test } => (
            read_cache(train)?,
            val.as_ref().map(|p| read_cache(p)).transpose()?,
            read_cache(test)?,
        ),
    };
    if config.omega == 0.0 {
        return Ok((train, val, test));
    }
    let noise = NoiseModel::symmetric(config.omega, train.k)?;
    let noisy_train =
        make_noisy_dataset(&train, &noise, &mut derive_stream(config.seed, 12), config.seed)?;
    let noisy_val = val
        .map(|v| make_noisy_dataset(&v, &noise, &mut derive_stream(config.seed, 13), config.seed))
        .transpose()?;
    Ok((noisy_train, noisy_val, test))
}

/// Runs one experiment into `dir`; returns the outcome for inspection.
pub fn run_experiment(dir: &Path, config: &ExperimentConfig) -> Result<TrainOutcome> {
    ensure_dir(dir)?;
    let (train_set, val_set, test_set) = prepare_data(config)?;
    let outcome = train_run(
        &config.train,
        &DataSplit {
            train: &train_set,
            val: val_set.as_ref(),
            test: &test_set,
        },
    )?;

    let config_value = serde_json::to_value(config)?;
    let hash = config_hash(&config_value, config.seed);

    let metrics_path = dir.join("metrics.csv");
    std::fs::write(&metrics_path, metrics_to_csv(&outcome.metrics))?;
    let config_path = dir.join("config.json");
    write_json(&config_path, config)?;
    let final_path = dir.join("final.nlck");
    save_checkpoint(&final_path, &outcome.final_model, config.train.seed, &hash)?;
    let mut outputs = vec![metrics_path.clone(), config_path, final_path];
    if let Some(best) = &outcome.best_model {
        let best_path = dir.join("best.nlck");
        save_checkpoint(&best_path, best, config.train.seed, &hash)?;
        outputs.push(best_path);
    }

    let selected = evaluate_model(outcome.selected_model(), &test_set, config.train.loss)?;
    let summary = serde_json::json!({
        "test_accuracy": selected.accuracy,
        "test_loss": selected.mean_loss,
        "test_ece": selected.ece,
        "test_entropy": selected.mean_entropy,
        "stopped_epoch": outcome.stopped_epoch,
        "recorded_epochs": outcome.metrics.len(),
    });
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    outputs.push(summary_path);

    let output_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(dir, "train", config_value, config.seed, &output_refs)?;
    println!(
        "{}: test accuracy {:.4}, test entropy {:.4}",
        config.name.as_deref().unwrap_or("run"),
        selected.accuracy,
        selected.mean_entropy
    );
    Ok(outcome)
}

pub fn train(out: &Path, seed_flag: Option<u64>, args: TrainArgs) -> Result<i32> {
    if let Some(grid_path) = &args.grid {
        let text = std::fs::read_to_string(grid_path)?;
        let mut configs: Vec<ExperimentConfig> = serde_json::from_str(&text)?;
        for config in &mut configs {
            apply_overrides(config, seed_flag, &args);
        }
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = configs
                .iter()
                .enumerate()
                .map(|(i, config)| {
                    let dir = out.join(config.name.clone().unwrap_or_else(|| format!("run{i}")));
                    scope.spawn(move || run_experiment(&dir, config).map(|_| ()))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| match h.join() {
                    Ok(result) => result,
                    Err(_) => Err(Error::Config("worker panicked".into())),
                })
                .collect()
        });
        for result in results {
            result?;
        }
        return Ok(EXIT_OK);
    }

    let config_path = args
        .config
        .clone()
        .ok_or_else(|| Error::Config("--config or --grid is required".into()))?;
    let text = std::fs::read_to_string(&config_path)?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)?;
    apply_overrides(&mut config, seed_flag, &args);
    run_experiment(out, &config)?;
    Ok(EXIT_OK)
}
