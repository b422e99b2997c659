//! Classifier and double encoder-decoder networks, test-time augmentation
//! and ensembling.

mod checkpoint;
mod classifier;
mod double;
mod registry;
mod tta;
mod unet;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta};
pub use classifier::TinyCnn;
pub use double::{ChannelProbe, DoubleEncoderDecoder, DoubleTape, DualLogits};
pub use registry::{lookup, registry, ModelSpec, RegistryEntry, Segmenter};
pub use tta::{
    argmax_rows, ensemble, softmax_rows, threshold, tta_classify, tta_classify_batch, tta_segment,
    tta_segment_batch, FLIPS,
};
pub use unet::TinyUnet;

use ndarray::Array2;
use thiserror::Error;

use crate::exec::Execution;
use crate::nn::{Param, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {expected} input channels, got {found}")]
    Channels { expected: usize, found: usize },
    #[error("input {height}x{width} is not divisible by {divisor}")]
    Spatial {
        height: usize,
        width: usize,
        divisor: usize,
    },
    #[error("second network must take 4 channels (RGB + first-stage map), takes {0}")]
    SecondStageChannels(usize),
    #[error("ensemble member {index} has shape {found:?}, expected {expected:?}")]
    EnsembleShape {
        index: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("ensemble needs at least one member")]
    EmptyEnsemble,
    #[error("unknown model key \"{0}\"")]
    UnknownModel(String),
    #[error("model \"{0}\" is a reference configuration that this CPU substrate cannot instantiate")]
    ReferenceOnly(String),
    #[error("model \"{key}\" is a {actual} model, not a {wanted} model")]
    WrongTask {
        key: String,
        actual: &'static str,
        wanted: &'static str,
    },
}

/// A trainable network with a hand-written backward pass.
///
/// `forward_train` returns the activations `backward` needs; `backward`
/// accumulates parameter gradients and returns the gradient of the input.
pub trait Module: Send + Sync {
    type Output;
    type Tape: Send;

    fn in_channels(&self) -> usize;

    /// H and W must be multiples of this.
    fn spatial_divisor(&self) -> usize {
        1
    }

    fn forward_train(&self, x: &Tensor) -> Result<(Self::Output, Self::Tape), ModelError>;

    fn backward(&mut self, tape: Self::Tape, grad: &Self::Output) -> Tensor;

    fn forward(&self, x: &Tensor) -> Result<Self::Output, ModelError> {
        Ok(self.forward_train(x)?.0)
    }

    fn params(&self) -> Vec<&Param>;

    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Selects sequential or data-parallel kernels.
    fn set_exec(&mut self, _exec: Execution) {}

    fn check_input(&self, x: &Tensor) -> Result<(), ModelError> {
        let (_, c, h, w) = x.dim();
        if c != self.in_channels() {
            return Err(ModelError::Channels {
                expected: self.in_channels(),
                found: c,
            });
        }
        let d = self.spatial_divisor();
        if h % d != 0 || w % d != 0 {
            return Err(ModelError::Spatial {
                height: h,
                width: w,
                divisor: d,
            });
        }
        Ok(())
    }
}

/// Anything that maps an image batch to per-finding logits (N, n_classes).
pub trait ClassificationModel: Sync {
    fn class_logits(&self, x: &Tensor) -> Result<Array2<f32>, ModelError>;
}

/// Anything that maps an image batch to a mask logit map (N, 1, H, W).
pub trait SegmentationModel: Sync {
    fn mask_logits(&self, x: &Tensor) -> Result<Tensor, ModelError>;
}

impl ClassificationModel for TinyCnn {
    fn class_logits(&self, x: &Tensor) -> Result<Array2<f32>, ModelError> {
        self.forward(x)
    }
}

impl SegmentationModel for TinyUnet {
    fn mask_logits(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        self.forward(x)
    }
}

impl SegmentationModel for ChannelProbe {
    fn mask_logits(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        self.forward(x)
    }
}

impl<A, B> SegmentationModel for DoubleEncoderDecoder<A, B>
where
    A: Module<Output = Tensor>,
    B: Module<Output = Tensor>,
{
    /// Final (second-stage) logits.
    fn mask_logits(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.forward(x)?.second)
    }
}

/// Sum of squared gradient entries over a parameter set, square-rooted.
pub fn grad_norm(params: &[&Param]) -> f64 {
    params
        .iter()
        .map(|p| p.grad_norm().powi(2))
        .sum::<f64>()
        .sqrt()
}
