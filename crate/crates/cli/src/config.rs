//! Experiment configuration: optional TOML file merged with command-line
//! flags. Flags win over file values; unset values fall back to defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use copt_core::encoder::Architecture;
use copt_core::train::{AdamConfig, ProtocolKind, TrainConfig};
use copt_core::{PenaltyWeights, TaskKind};
use serde::Deserialize;

/// Everything a config file may set. Unknown keys are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub task: Option<TaskKind>,
    pub tasks: Option<Vec<TaskKind>>,
    pub data: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub protocol: Option<ProtocolKind>,
    pub source_task: Option<TaskKind>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub hidden_dim: Option<usize>,
    pub num_layers: Option<usize>,
    pub wavelet_scales: Option<usize>,
    pub complement_features: Option<bool>,
    pub penalty_a: Option<f64>,
    pub penalty_b: Option<f64>,
    pub decode_seeds: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Training hyperparameters shared by `train`, `train-multi` and `transfer`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// TOML file with default values for any of these options
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset (JSONL, optionally .gz)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation dataset; defaults to the training set
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Run directory for run.json and checkpoint.json
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub num_layers: Option<usize>,
    #[arg(long)]
    pub wavelet_scales: Option<usize>,
    /// Append complement-graph statistics to the node features
    #[arg(long)]
    pub complement_features: Option<bool>,
    #[arg(long)]
    pub penalty_a: Option<f64>,
    #[arg(long)]
    pub penalty_b: Option<f64>,
    /// Decoder seeds used for validation metrics
    #[arg(long)]
    pub decode_seeds: Option<usize>,
}

/// Flags merged over a config file.
pub struct Resolved {
    pub file: ExperimentConfig,
    pub train: TrainConfig,
    pub data: PathBuf,
    pub val: Option<PathBuf>,
    pub out: PathBuf,
}

impl TrainFlags {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let defaults = TrainConfig::default();
        let arch_default = Architecture::default();
        let complement = self.complement_features.or(file.complement_features).unwrap_or(false);
        let arch = Architecture {
            input_dim: if complement { 6 } else { 3 },
            hidden_dim: self.hidden_dim.or(file.hidden_dim).unwrap_or(arch_default.hidden_dim),
            num_layers: self.num_layers.or(file.num_layers).unwrap_or(arch_default.num_layers),
            wavelet_scales: self.wavelet_scales.or(file.wavelet_scales).unwrap_or(arch_default.wavelet_scales),
            leaky_slope: arch_default.leaky_slope,
        };
        let penalties = PenaltyWeights::new(
            self.penalty_a.or(file.penalty_a).unwrap_or(defaults.penalties.a),
            self.penalty_b.or(file.penalty_b).unwrap_or(defaults.penalties.b),
        )?;
        let train = TrainConfig {
            epochs: self.epochs.or(file.epochs).unwrap_or(defaults.epochs),
            adam: AdamConfig { lr: self.lr.or(file.lr).unwrap_or(defaults.adam.lr), ..AdamConfig::default() },
            batch_size: self.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
            penalties,
            decode_seeds: self.decode_seeds.or(file.decode_seeds).unwrap_or(defaults.decode_seeds),
            seed: self.seed.or(file.seed).unwrap_or(defaults.seed),
            arch,
            ..defaults
        };
        train.validate()?;
        let data = self.data.clone().or(file.data.clone()).context("no training data: pass --data or set `data` in the config")?;
        let val = self.val.clone().or(file.val.clone());
        let out = self.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("run"));
        Ok(Resolved { file, train, data, val, out })
    }
}
