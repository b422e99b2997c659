//! Dataset ingestion, fold construction, epoch sampling, preprocessing and
//! augmentation.

mod augment;
mod folds;
mod image;
mod loader;
mod manifest;
mod sampler;
pub mod synthetic;

pub use self::image::{load_mask, load_rgb, mask_to_tensor, preprocess, preprocess_pair, rgb_to_tensor};
pub use augment::{augment, AugmentConfig, AugmentPlan};
pub use folds::{build_folds, build_plain_folds, FoldPlan, FoldSplit};
pub use loader::{ClassificationData, EpochAugment, SegmentationData};
pub use manifest::{
    load_classification_manifest, load_segmentation_manifest, resolve_data_path, write_classification_manifest,
    write_segmentation_manifest, ClassRecord, MaskPair, SampleManifest, DATA_DIR_ENV,
};
pub use sampler::{oversample_epoch, shuffle_epoch};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::HierarchyError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: cannot decode image: {message}")]
    Decode { path: String, message: String },
    #[error("{path}: cannot encode image: {message}")]
    Encode { path: String, message: String },
    #[error("mask {mask} is {mask_size:?} but image {image} is {image_size:?}")]
    SizeMismatch {
        image: String,
        mask: String,
        image_size: (u32, u32),
        mask_size: (u32, u32),
    },
    #[error("{manifest}:{line}: unknown finding \"{finding}\"")]
    UnknownFinding {
        manifest: String,
        line: usize,
        finding: String,
    },
    #[error("{manifest}:{line}: duplicate path {path}")]
    DuplicatePath {
        manifest: String,
        line: usize,
        path: String,
    },
    #[error("{0}: manifest has no records")]
    EmptyManifest(String),
    #[error("fold count must be at least 2, got {0}")]
    FoldCount(usize),
    #[error("{n} records cannot fill {k} folds")]
    TooFewRecords { n: usize, k: usize },
    #[error("empty sample set")]
    EmptySubset,
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// Network input contract: resize target and per-channel normalization
/// applied after scaling to [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub width: u32,
    pub height: u32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for InputSpec {
    /// 640×512 with identity normalization.
    fn default() -> Self {
        Self {
            width: 640,
            height: 512,
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

impl InputSpec {
    /// Identity normalization at a custom size.
    pub fn toy(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    /// Statistics expected by BiT checkpoints (inputs mapped to [-1, 1]).
    pub fn bit() -> Self {
        Self {
            mean: [0.5; 3],
            std: [0.5; 3],
            ..Self::default()
        }
    }

    /// ImageNet statistics, as used by most torchvision-style encoders.
    pub fn imagenet() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
            ..Self::default()
        }
    }

    /// In-place `(x − mean) / std` on a (3, H, W) tensor.
    pub fn normalize(&self, x: &mut ndarray::Array3<f32>) {
        for (c, mut plane) in x.outer_iter_mut().enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            plane.mapv_inplace(|v| (v - m) / s);
        }
    }
}
