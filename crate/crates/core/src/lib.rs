//! Hierarchical multi-task classification of gastrointestinal images and
//! double encoder-decoder polyp segmentation.
//!
//! - [`hierarchy`]: tract → category → finding taxonomy, probability aggregation
//! - [`losses`]: hierarchical cross-entropy, dual-supervision segmentation loss
//! - [`metrics`]: MCC, micro-F1, Jaccard, Dice, precision, recall
//! - [`data`]: manifests, stratified folds, oversampling, preprocessing, augmentation
//! - [`models`]: networks, flip TTA, ensembling, checkpoints
//! - [`training`]: cosine warm-restart SGD, validation monitoring, cross-validation

pub mod config;
pub mod data;
pub mod exec;
pub mod hierarchy;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod training;

pub use exec::Execution;
pub use hierarchy::{AggregationMap, CategoryGrouping, LabelHierarchy};
pub use losses::{HierLoss, HierLossWeights, HierTarget, SegLoss};
pub use metrics::{Aggregation, ConfusionMatrix, MetricReport};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classify,
    Segment,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Segment => "segment",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
