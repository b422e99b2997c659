use ndarray::{concatenate, Array2, Axis};

use super::{TrainError, PREDICT_CHUNK};
use crate::data::{ClassificationData, SegmentationData};
use crate::exec::Execution;
use crate::losses::sigmoid;
use crate::metrics::{dataset_seg_report, Aggregation, ConfusionMatrix, MetricReport};
use crate::models::{
    argmax_rows, ensemble, softmax_rows, threshold, tta_classify_batch, tta_segment_batch,
    ClassificationModel, SegmentationModel,
};
use crate::nn::Tensor;

/// Finding probabilities (N, n_find) for `idx`, averaged over `models`;
/// each member uses flip TTA when `tta` is set.
pub fn predict_class_probs<M: ClassificationModel>(
    models: &[M],
    data: &ClassificationData,
    idx: &[usize],
    tta: bool,
    exec: Execution,
) -> Result<Array2<f64>, TrainError> {
    let mut members = Vec::with_capacity(models.len());
    for m in models {
        let mut parts = Vec::new();
        for chunk in idx.chunks(PREDICT_CHUNK) {
            let (x, _) = data.batch(chunk, 0, None, exec);
            parts.push(if tta {
                tta_classify_batch(m, &x, exec)?
            } else {
                softmax_rows(&m.class_logits(&x)?)
            });
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        members.push(concatenate(Axis(0), &views).map_err(|e| TrainError::Setup(e.to_string()))?);
    }
    Ok(ensemble(&members)?)
}

/// Foreground probabilities (N, 1, H, W), averaged over `models`.
pub fn predict_mask_probs<M: SegmentationModel>(
    models: &[M],
    data: &SegmentationData,
    idx: &[usize],
    tta: bool,
    exec: Execution,
) -> Result<Tensor, TrainError> {
    let mut members = Vec::with_capacity(models.len());
    for m in models {
        let mut parts = Vec::new();
        for chunk in idx.chunks(PREDICT_CHUNK) {
            let (x, _) = data.batch(chunk, 0, None, exec);
            parts.push(if tta {
                tta_segment_batch(m, &x, exec)?
            } else {
                m.mask_logits(&x)?.mapv(|l| sigmoid(l as f64) as f32)
            });
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        members.push(concatenate(Axis(0), &views).map_err(|e| TrainError::Setup(e.to_string()))?);
    }
    Ok(ensemble(&members)?)
}

/// Argmax predictions against `labels`.
pub fn classification_report(
    probs: &Array2<f64>,
    labels: &[usize],
) -> Result<(MetricReport, ConfusionMatrix), TrainError> {
    let pred = argmax_rows(probs);
    let cm = ConfusionMatrix::from_labels(labels, &pred, probs.ncols())?;
    Ok((MetricReport::classification(&cm)?, cm))
}

/// Thresholds `probs` at 0.5 and scores them against `masks`.
pub fn segmentation_report(
    probs: &Tensor,
    masks: &[&ndarray::Array3<f32>],
    aggregation: Aggregation,
    exec: Execution,
) -> Result<MetricReport, TrainError> {
    if probs.len_of(Axis(0)) != masks.len() {
        return Err(TrainError::Setup(format!(
            "{} predictions for {} masks",
            probs.len_of(Axis(0)),
            masks.len()
        )));
    }
    let pred = threshold(probs, 0.5);
    let pairs: Vec<_> = pred
        .outer_iter()
        .zip(masks)
        .map(|(p, g)| (p.into_dyn(), g.view().into_dyn()))
        .collect();
    Ok(dataset_seg_report(&pairs, aggregation, exec)?)
}
