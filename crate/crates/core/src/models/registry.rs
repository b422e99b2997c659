use serde::{Deserialize, Serialize};

use super::{DoubleEncoderDecoder, ModelError, TinyCnn, TinyUnet};
use crate::rng::{rng_for, tag};
use crate::Task;

/// Architecture plus its size knobs. Serialized into configs and
/// checkpoint sidecars so a checkpoint can be rebuilt without the config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// From-scratch classifier for desk-scale runs.
    TinyCnn { width: usize },
    /// Two from-scratch U-Nets in the double encoder-decoder arrangement.
    DoubleTinyUnet { width: usize },
    /// Reference classifier: BiT-M ResNet-50x1 with ImageNet-21k weights.
    BitResnet50x1,
    /// Reference segmenter: two DPN-92 encoders with feature-pyramid decoders.
    DoubleDpn92Fpn,
}

pub type Segmenter = DoubleEncoderDecoder<TinyUnet, TinyUnet>;

impl ModelSpec {
    pub fn key(&self) -> &'static str {
        match self {
            ModelSpec::TinyCnn { .. } => "tiny-cnn",
            ModelSpec::DoubleTinyUnet { .. } => "double-tiny-unet",
            ModelSpec::BitResnet50x1 => "bit-m-r50x1",
            ModelSpec::DoubleDpn92Fpn => "double-dpn92-fpn",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            ModelSpec::TinyCnn { .. } | ModelSpec::BitResnet50x1 => Task::Classify,
            ModelSpec::DoubleTinyUnet { .. } | ModelSpec::DoubleDpn92Fpn => Task::Segment,
        }
    }

    fn wrong_task(&self, wanted: Task) -> ModelError {
        ModelError::WrongTask {
            key: self.key().to_string(),
            actual: self.task().name(),
            wanted: wanted.name(),
        }
    }

    /// Fresh classifier with seeded initialisation.
    pub fn build_classifier(&self, n_classes: usize, seed: u64) -> Result<TinyCnn, ModelError> {
        match *self {
            ModelSpec::TinyCnn { width } => {
                Ok(TinyCnn::new(width, n_classes, &mut rng_for(seed, &[tag::INIT])))
            }
            ModelSpec::BitResnet50x1 => Err(ModelError::ReferenceOnly(self.key().into())),
            _ => Err(self.wrong_task(Task::Classify)),
        }
    }

    /// Fresh double encoder-decoder with seeded initialisation.
    pub fn build_segmenter(&self, seed: u64) -> Result<Segmenter, ModelError> {
        match *self {
            ModelSpec::DoubleTinyUnet { width } => {
                let mut rng = rng_for(seed, &[tag::INIT]);
                let first = TinyUnet::new("first", 3, width, &mut rng);
                let second = TinyUnet::new("second", 4, width, &mut rng);
                DoubleEncoderDecoder::new(first, second)
            }
            ModelSpec::DoubleDpn92Fpn => Err(ModelError::ReferenceOnly(self.key().into())),
            _ => Err(self.wrong_task(Task::Segment)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegistryEntry {
    pub key: &'static str,
    pub spec: ModelSpec,
    pub trainable_here: bool,
    pub description: &'static str,
}

pub fn registry() -> Vec<RegistryEntry> {
    vec![
        RegistryEntry {
            key: "tiny-cnn",
            spec: ModelSpec::TinyCnn { width: 16 },
            trainable_here: true,
            description: "3-stage CNN + global pooling, one logit per finding",
        },
        RegistryEntry {
            key: "double-tiny-unet",
            spec: ModelSpec::DoubleTinyUnet { width: 8 },
            trainable_here: true,
            description: "two 2-level U-Nets, second one fed RGB + first-stage probabilities",
        },
        RegistryEntry {
            key: "bit-m-r50x1",
            spec: ModelSpec::BitResnet50x1,
            trainable_here: false,
            description: "reference: BiT-M ResNet-50x1 (ImageNet-21k weights, user supplied)",
        },
        RegistryEntry {
            key: "double-dpn92-fpn",
            spec: ModelSpec::DoubleDpn92Fpn,
            trainable_here: false,
            description: "reference: DPN-92 encoders + feature-pyramid decoders, doubled",
        },
    ]
}

pub fn lookup(key: &str) -> Result<ModelSpec, ModelError> {
    registry()
        .into_iter()
        .find(|e| e.key == key)
        .map(|e| e.spec)
        .ok_or_else(|| ModelError::UnknownModel(key.to_string()))
}
