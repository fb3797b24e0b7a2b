use std::path::PathBuf;

use crate::config::{parse_value, Configurable};
use crate::error::{Error, Result};
use crate::net::ModelConfig;

/// Optimization settings plus the model they train.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub model: ModelConfig,
    /// Optimizer steps; ignored when `epochs > 0`.
    pub steps: usize,
    /// Full passes over the dataset (the long schedule); 0 selects `steps`.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    /// Print a progress line every this many steps (0 = silent).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset"),
            model: ModelConfig::default(),
            steps: 200,
            epochs: 0,
            batch_size: 4,
            lr: 2e-4,
            grad_clip: 1.0,
            seed: 0,
            checkpoint: None,
            log: None,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    /// Number of optimizer steps for a dataset of `samples` items.
    pub fn total_steps(&self, samples: usize) -> usize {
        if self.epochs > 0 {
            self.epochs * samples.div_ceil(self.batch_size.min(samples).max(1))
        } else {
            self.steps
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.steps == 0 && self.epochs == 0 {
            return Err(Error::config("either steps or epochs must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::config(format!("grad_clip must be positive, got {}", self.grad_clip)));
        }
        self.model.validate()
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl Configurable for TrainConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "steps" => self.steps = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "grad_clip" => self.grad_clip = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "checkpoint" => self.checkpoint = opt_path(value),
            "log" => self.log = opt_path(value),
            "log_every" => self.log_every = parse_value(key, value)?,
            _ => return self.model.set(key, value),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(String, String)> {
        let mut e = vec![
            ("dataset".to_string(), self.dataset.display().to_string()),
            ("steps".to_string(), self.steps.to_string()),
            ("epochs".to_string(), self.epochs.to_string()),
            ("batch_size".to_string(), self.batch_size.to_string()),
            ("lr".to_string(), self.lr.to_string()),
            ("grad_clip".to_string(), self.grad_clip.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("checkpoint".to_string(), show_path(&self.checkpoint)),
            ("log".to_string(), show_path(&self.log)),
            ("log_every".to_string(), self.log_every.to_string()),
        ];
        e.extend(self.model.entries());
        e
    }
}
