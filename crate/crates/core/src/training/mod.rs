//! Optimization protocol: SGD with cosine warm restarts, per-epoch
//! validation, best-checkpoint retention and k-fold orchestration.

mod classify;
mod cv;
mod eval;
mod fit;
mod run_dir;
mod schedule;
mod segment;

pub use classify::train_classifier;
pub use cv::{
    cv_classify, cv_segment, load_class_data, load_hierarchy, load_seg_data, run_cv, run_train, CvOutcome, CvSummary,
    TestOutcome,
};
pub use eval::{classification_report, predict_class_probs, predict_mask_probs, segmentation_report};
pub use fit::run_seed;
pub use run_dir::{read_metrics_csv, RunDir};
pub use schedule::{epoch_lr, lr_at, lr_trace};
pub use segment::train_segmenter;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::data::DataError;
use crate::exec::Execution;
use crate::hierarchy::HierarchyError;
use crate::losses::LossError;
use crate::metrics::MetricError;
use crate::models::{CheckpointError, ModelError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("epoch position {t} outside [0, {n}]")]
    ScheduleDomain { t: f64, n: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (records {records:?})")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        records: Vec<usize>,
    },
    #[error("{0}")]
    Setup(String),
    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<TrainError>,
    },
}

impl TrainError {
    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One row of the per-epoch trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub cycle: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_metric: f64,
}

/// Progress and bookkeeping of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub fold: Option<usize>,
    pub seed: u64,
    /// Number of epochs completed, counting any resumed-from epochs.
    pub epoch: usize,
    pub cycle: usize,
    pub metric_name: String,
    pub best_metric: Option<f64>,
    pub best_epoch: Option<usize>,
    pub best_checkpoint: Option<PathBuf>,
    pub history: Vec<EpochRecord>,
}

impl RunState {
    pub fn new(fold: Option<usize>, seed: u64, metric_name: &str) -> Self {
        Self {
            fold,
            seed,
            epoch: 0,
            cycle: 0,
            metric_name: metric_name.to_string(),
            best_metric: None,
            best_epoch: None,
            best_checkpoint: None,
            history: Vec::new(),
        }
    }

    /// Appends an epoch; returns whether it beat the best metric so far.
    /// Ties keep the earlier epoch.
    pub fn record(&mut self, rec: EpochRecord) -> bool {
        let improved = self.best_metric.is_none_or(|b| rec.val_metric > b);
        if improved {
            self.best_metric = Some(rec.val_metric);
            self.best_epoch = Some(rec.epoch);
        }
        self.epoch = rec.epoch + 1;
        self.cycle = rec.cycle;
        self.history.push(rec);
        improved
    }

    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.train_loss).collect()
    }

    pub fn val_metrics(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.val_metric).collect()
    }

    pub fn lrs(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.lr).collect()
    }
}

/// Run-level knobs that do not change results.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub exec: Execution,
    /// Where to write checkpoints and traces; `None` keeps everything in memory.
    pub run_dir: Option<PathBuf>,
    /// Checkpoint stem to continue from.
    pub resume: Option<PathBuf>,
    pub fold: Option<usize>,
    /// Bounds concurrently trained folds in `cv`.
    pub jobs: usize,
}

/// Record indices of a training and a validation set, possibly living in
/// two different datasets.
#[derive(Clone, Copy, Debug)]
pub struct Split<'a, D> {
    pub train: &'a D,
    pub train_idx: &'a [usize],
    pub val: &'a D,
    pub val_idx: &'a [usize],
}

pub(crate) const PREDICT_CHUNK: usize = 16;
