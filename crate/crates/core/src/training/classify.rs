use ndarray::Array2;

use super::eval::{classification_report, predict_class_probs};
use super::fit::{fit, FitSpec};
use super::{RunState, Split, TrainError, TrainOptions};
use crate::config::ExperimentConfig;
use crate::data::{oversample_epoch, shuffle_epoch, ClassificationData, EpochAugment};
use crate::hierarchy::LabelHierarchy;
use crate::losses::HierLoss;
use crate::metrics::mcc_checked;
use crate::models::{ClassificationModel, Module};
use crate::rng::{derive_seed, tag};

/// Trains with the hierarchical loss, monitoring validation MCC.
pub fn train_classifier<M>(
    model: &mut M,
    hierarchy: &LabelHierarchy,
    split: Split<'_, ClassificationData>,
    cfg: &ExperimentConfig,
    opts: &TrainOptions,
) -> Result<RunState, TrainError>
where
    M: Module<Output = Array2<f32>> + ClassificationModel,
{
    if split.train_idx.is_empty() || split.val_idx.is_empty() {
        return Err(TrainError::Setup("empty training or validation split".into()));
    }
    let loss = HierLoss::with_grouping(hierarchy, cfg.category_grouping);
    let exec = opts.exec;
    let bs = cfg.schedule.batch_size;
    let seed = super::fit::run_seed(cfg, opts.fold);
    let val_labels: Vec<usize> = split.val_idx.iter().map(|&i| split.val.labels[i]).collect();

    let train_epoch = |model: &mut M, sgd: &mut crate::nn::Sgd, epoch: usize, lr: f32| {
        let epoch_seed = derive_seed(seed, &[tag::EPOCH, epoch as u64]);
        let order = if cfg.oversample {
            oversample_epoch(&split.train.labels, split.train_idx, epoch_seed)?
        } else {
            shuffle_epoch(split.train_idx, epoch_seed)?
        };
        let aug = cfg.augment.enabled.then_some(EpochAugment {
            cfg: &cfg.augment,
            seed,
            epoch,
        });
        let mut total = 0.0;
        for (b, chunk) in order.chunks(bs).enumerate() {
            let (x, labels) = split.train.batch(chunk, b * bs, aug, exec);
            let (logits, tape) = model.forward_train(&x)?;
            let targets = labels
                .iter()
                .map(|&f| loss.target(f))
                .collect::<Result<Vec<_>, _>>()?;
            let (l, grad) = loss.batch_loss_and_grad(logits.mapv(f64::from).view(), &targets, exec)?;
            if !l.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: b,
                    loss: l,
                    records: chunk.to_vec(),
                });
            }
            model.backward(tape, &grad.mapv(|g| g as f32));
            sgd.step(&mut model.params_mut(), lr);
            total += l * chunk.len() as f64;
        }
        Ok(total / order.len() as f64)
    };
    let validate = |model: &M| {
        let probs = predict_class_probs(std::slice::from_ref(model), split.val, split.val_idx, false, exec)?;
        let (_, cm) = classification_report(&probs, &val_labels)?;
        Ok(mcc_checked(&cm)?.value)
    };
    fit(
        model,
        FitSpec {
            cfg,
            opts,
            metric_name: "mcc",
            hierarchy_hash: Some(hierarchy.hash()),
        },
        train_epoch,
        validate,
    )
}
