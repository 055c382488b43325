use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ModelConfig;

/// Joint-training configuration. The file format is plain `key = value`
/// lines with `#` comments; see the README for the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub l2_weight: f64,
    pub feat_weight: f64,
    pub holdout_frac: f64,
    /// Checkpoint cadence in epochs.
    pub checkpoint_every: usize,
    pub workers: usize,
    /// Frozen feature-extractor channel progression.
    pub feat_channels: Vec<usize>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/train"),
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 1,
            l2_weight: 1.0,
            feat_weight: 0.1,
            holdout_frac: 0.05,
            checkpoint_every: 1,
            workers: 1,
            feat_channels: vec![16, 32, 64],
            model: ModelConfig::default(),
        }
    }
}

fn bad(field: &str, detail: impl std::fmt::Display) -> TrainError {
    TrainError::Config(format!("{field}: {detail}"))
}

impl TrainConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_str_cfg(&text)
    }

    pub fn from_str_cfg(text: &str) -> Result<Self, TrainError> {
        let mut cfg = TrainConfig::default();
        let mut saw_dataset = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("config", format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dataset" => {
                    cfg.dataset = PathBuf::from(value);
                    saw_dataset = true;
                }
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "epochs" => cfg.epochs = value.parse().map_err(|e| bad("epochs", e))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad("batch_size", e))?,
                "learning_rate" => {
                    cfg.learning_rate = value.parse().map_err(|e| bad("learning_rate", e))?
                }
                "seed" => cfg.seed = value.parse().map_err(|e| bad("seed", e))?,
                "l2_weight" => cfg.l2_weight = value.parse().map_err(|e| bad("l2_weight", e))?,
                "feat_weight" => {
                    cfg.feat_weight = value.parse().map_err(|e| bad("feat_weight", e))?
                }
                "holdout_frac" => {
                    cfg.holdout_frac = value.parse().map_err(|e| bad("holdout_frac", e))?
                }
                "checkpoint_every" => {
                    cfg.checkpoint_every = value.parse().map_err(|e| bad("checkpoint_every", e))?
                }
                "workers" => cfg.workers = value.parse().map_err(|e| bad("workers", e))?,
                other => return Err(bad(other, "unknown configuration key")),
            }
        }
        if !saw_dataset {
            return Err(bad("dataset", "missing required key"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(bad("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be positive"));
        }
        if self.learning_rate <= 0.0 {
            return Err(bad("learning_rate", "must be positive"));
        }
        if self.l2_weight < 0.0 || self.feat_weight < 0.0 {
            return Err(bad("l2_weight/feat_weight", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.holdout_frac) {
            return Err(bad("holdout_frac", "must be in [0,1)"));
        }
        if self.checkpoint_every == 0 {
            return Err(bad("checkpoint_every", "must be positive"));
        }
        if self.workers == 0 {
            return Err(bad("workers", "must be positive"));
        }
        self.model.validate().map_err(|e| bad("model", e))
    }
}
