use ndarray::Ix4;

use super::eval::{predict_mask_probs, segmentation_report};
use super::fit::{fit, run_seed, FitSpec};
use super::{RunState, Split, TrainError, TrainOptions};
use crate::config::ExperimentConfig;
use crate::data::{shuffle_epoch, EpochAugment, SegmentationData};
use crate::metrics::Aggregation;
use crate::models::{DualLogits, Module, SegmentationModel};
use crate::rng::{derive_seed, tag};

/// Trains both heads of a double encoder-decoder, monitoring the
/// per-image mean Dice of the second head on the validation set.
pub fn train_segmenter<M>(
    model: &mut M,
    split: Split<'_, SegmentationData>,
    cfg: &ExperimentConfig,
    opts: &TrainOptions,
) -> Result<RunState, TrainError>
where
    M: Module<Output = DualLogits> + SegmentationModel,
{
    if split.train_idx.is_empty() || split.val_idx.is_empty() {
        return Err(TrainError::Setup("empty training or validation split".into()));
    }
    let exec = opts.exec;
    let bs = cfg.schedule.batch_size;
    let seed = run_seed(cfg, opts.fold);
    let val_masks: Vec<_> = split.val_idx.iter().map(|&i| &split.val.masks[i]).collect();

    let train_epoch = |model: &mut M, sgd: &mut crate::nn::Sgd, epoch: usize, lr: f32| {
        let order = shuffle_epoch(split.train_idx, derive_seed(seed, &[tag::EPOCH, epoch as u64]))?;
        let aug = cfg.augment.enabled.then_some(EpochAugment {
            cfg: &cfg.augment,
            seed,
            epoch,
        });
        let mut total = 0.0;
        for (b, chunk) in order.chunks(bs).enumerate() {
            let (x, mask) = split.train.batch(chunk, b * bs, aug, exec);
            let (out, tape) = model.forward_train(&x)?;
            let (l, g1, g2) = cfg.seg_loss.loss_and_grad(
                out.first.view().into_dyn(),
                out.second.view().into_dyn(),
                mask.view().into_dyn(),
            )?;
            if !l.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: b,
                    loss: l,
                    records: chunk.to_vec(),
                });
            }
            let grad = DualLogits {
                first: g1.into_dimensionality::<Ix4>().expect("4-d logits"),
                second: g2.into_dimensionality::<Ix4>().expect("4-d logits"),
            };
            model.backward(tape, &grad);
            sgd.step(&mut model.params_mut(), lr);
            total += l * chunk.len() as f64;
        }
        Ok(total / order.len() as f64)
    };
    let validate = |model: &M| {
        let probs = predict_mask_probs(std::slice::from_ref(model), split.val, split.val_idx, false, exec)?;
        let report = segmentation_report(&probs, &val_masks, Aggregation::PerImageMean, exec)?;
        Ok(report.f1.expect("segmentation report has f1"))
    };
    fit(
        model,
        FitSpec {
            cfg,
            opts,
            metric_name: "dice",
            hierarchy_hash: None,
        },
        train_epoch,
        validate,
    )
}
