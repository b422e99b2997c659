//! Experiment configuration.
//!
//! A user config is a partial JSON object. It is merged over the defaults
//! for its task, then parsed strictly, so the stored `config.json` of a run
//! always lists every setting that influenced it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::data::{AugmentConfig, InputSpec};
use crate::hierarchy::{hex_digest, CategoryGrouping};
use crate::losses::SegLoss;
use crate::metrics::Aggregation;
use crate::models::ModelSpec;
use crate::Task;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config must be a JSON object with a \"task\" field")]
    MissingTask,
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Optimizer and learning-rate schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub lr_init: f64,
    pub lr_final: f64,
    pub epochs_per_cycle: usize,
    pub cycles: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl ScheduleConfig {
    pub fn for_task(task: Task) -> Self {
        let (epochs_per_cycle, cycles, batch_size) = match task {
            Task::Classify => (10, 5, 8),
            Task::Segment => (50, 20, 4),
        };
        Self {
            lr_init: 0.01,
            lr_final: 1e-8,
            epochs_per_cycle,
            cycles,
            batch_size,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_per_cycle * self.cycles
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.lr_final > 0.0 && self.lr_init > self.lr_final && self.lr_init.is_finite()) {
            return bad("schedule needs lr_init > lr_final > 0");
        }
        if self.epochs_per_cycle == 0 || self.cycles == 0 || self.batch_size == 0 {
            return bad("epochs_per_cycle, cycles and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("momentum must be in [0, 1) and weight_decay non-negative");
        }
        Ok(())
    }
}

/// Everything a run needs, fully materialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Run name: results go to `<output_dir>/<name>/fold<i>/`.
    pub name: String,
    pub output_dir: PathBuf,
    /// Hierarchy JSON; `null` selects the built-in Hyper-Kvasir taxonomy.
    pub hierarchy: Option<PathBuf>,
    pub category_grouping: CategoryGrouping,
    pub train_manifest: Option<PathBuf>,
    /// Without a validation manifest, fold `holdout_fold` of the training
    /// manifest's k-fold split is held out.
    pub val_manifest: Option<PathBuf>,
    /// External test set scored by the ensembled fold models after `cv`.
    pub test_manifest: Option<PathBuf>,
    pub holdout_fold: usize,
    pub folds: usize,
    pub stratified_folds: bool,
    pub model: ModelSpec,
    pub input: InputSpec,
    pub schedule: ScheduleConfig,
    pub augment: AugmentConfig,
    /// Replicate minority classes to the majority count every epoch.
    pub oversample: bool,
    pub seg_loss: SegLoss,
    pub tta: bool,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn defaults(task: Task) -> Self {
        Self {
            task,
            name: "run".into(),
            output_dir: "runs".into(),
            hierarchy: None,
            category_grouping: CategoryGrouping::Global,
            train_manifest: None,
            val_manifest: None,
            test_manifest: None,
            holdout_fold: 0,
            folds: 5,
            stratified_folds: true,
            model: match task {
                Task::Classify => ModelSpec::TinyCnn { width: 16 },
                Task::Segment => ModelSpec::DoubleTinyUnet { width: 8 },
            },
            input: InputSpec::default(),
            schedule: ScheduleConfig::for_task(task),
            augment: AugmentConfig::default(),
            oversample: task == Task::Classify,
            seg_loss: SegLoss::default(),
            tta: true,
            aggregation: Aggregation::PerImageMean,
            seed: 0,
        }
    }

    /// Merges a partial JSON object over the defaults of its task.
    pub fn from_value(partial: Value) -> Result<Self, ConfigError> {
        let task: Task = partial
            .get("task")
            .cloned()
            .ok_or(ConfigError::MissingTask)
            .and_then(|t| serde_json::from_value(t).map_err(ConfigError::from))?;
        let mut full = serde_json::to_value(Self::defaults(task)).expect("defaults serialize");
        merge(&mut full, partial);
        let cfg: Self = serde_json::from_value(full)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.schedule.validate()?;
        if self.model.task() != self.task {
            return Err(ConfigError::Invalid(format!(
                "model \"{}\" is a {} model but task is {}",
                self.model.key(),
                self.model.task(),
                self.task
            )));
        }
        if self.folds < 2 {
            return Err(ConfigError::Invalid("folds must be at least 2".into()));
        }
        if self.holdout_fold >= self.folds {
            return Err(ConfigError::Invalid(format!(
                "holdout_fold {} out of range for {} folds",
                self.holdout_fold, self.folds
            )));
        }
        if self.input.width == 0 || self.input.height == 0 || self.input.std.iter().any(|&s| s <= 0.0) {
            return Err(ConfigError::Invalid("input size and std must be positive".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(ConfigError::Invalid(format!("bad run name \"{}\"", self.name)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn run_root(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

/// Recursive object merge; non-object values in `patch` replace `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}
