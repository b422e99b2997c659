//! Four-way flip test-time augmentation and member averaging.

use ndarray::{Array, Array2, Array3, Axis, Dimension};
use num_traits::Float;

use super::{ClassificationModel, ModelError, SegmentationModel};
use crate::exec::Execution;
use crate::hierarchy::softmax;
use crate::losses::sigmoid;
use crate::nn::{flip_spatial, Tensor};

/// (horizontal, vertical) flips: identity, h-flip, v-flip, both.
pub const FLIPS: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

/// Row-wise softmax in `f64`.
pub fn softmax_rows(logits: &Array2<f32>) -> Array2<f64> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (dst, row) in out.rows_mut().into_iter().zip(logits.rows()) {
        let z: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        dst.into_iter().zip(softmax(&z)).for_each(|(d, p)| *d = p);
    }
    out
}

/// Mean of the softmax outputs over the four flipped versions of each image.
pub fn tta_classify_batch<M: ClassificationModel + ?Sized>(
    model: &M,
    x: &Tensor,
    exec: Execution,
) -> Result<Array2<f64>, ModelError> {
    let probs = exec.map(&FLIPS, |&(h, v)| {
        model
            .class_logits(&flip_spatial(x, h, v))
            .map(|l| softmax_rows(&l))
    });
    let probs: Vec<Array2<f64>> = probs.into_iter().collect::<Result<_, _>>()?;
    ensemble(&probs)
}

/// Single-image form of [`tta_classify_batch`]; `image` is (3, H, W).
pub fn tta_classify<M: ClassificationModel + ?Sized>(
    model: &M,
    image: &Array3<f32>,
) -> Result<Vec<f64>, ModelError> {
    let x = image.clone().insert_axis(Axis(0));
    let p = tta_classify_batch(model, &x, Execution::default())?;
    Ok(p.row(0).to_vec())
}

/// Mean foreground probability over the four flips, each prediction
/// flipped back to the original frame before averaging.
pub fn tta_segment_batch<M: SegmentationModel + ?Sized>(
    model: &M,
    x: &Tensor,
    exec: Execution,
) -> Result<Tensor, ModelError> {
    let maps = exec.map(&FLIPS, |&(h, v)| {
        model.mask_logits(&flip_spatial(x, h, v)).map(|logits| {
            let probs = logits.mapv(|l| sigmoid(l as f64) as f32);
            flip_spatial(&probs, h, v)
        })
    });
    let maps: Vec<Tensor> = maps.into_iter().collect::<Result<_, _>>()?;
    ensemble(&maps)
}

/// Single-image form of [`tta_segment_batch`]; returns a (1, H, W) map.
pub fn tta_segment<M: SegmentationModel + ?Sized>(
    model: &M,
    image: &Array3<f32>,
) -> Result<Array3<f32>, ModelError> {
    let x = image.clone().insert_axis(Axis(0));
    let p = tta_segment_batch(model, &x, Execution::default())?;
    Ok(p.index_axis_move(Axis(0), 0))
}

/// Arithmetic mean of equally shaped members, summed in member order.
pub fn ensemble<A, D>(members: &[Array<A, D>]) -> Result<Array<A, D>, ModelError>
where
    A: Float,
    D: Dimension,
{
    let first = members.first().ok_or(ModelError::EmptyEnsemble)?;
    let mut acc = first.clone();
    for (index, m) in members.iter().enumerate().skip(1) {
        if m.shape() != first.shape() {
            return Err(ModelError::EnsembleShape {
                index,
                expected: first.shape().to_vec(),
                found: m.shape().to_vec(),
            });
        }
        acc.zip_mut_with(m, |a, &b| *a = *a + b);
    }
    let n = A::from(members.len()).expect("member count fits the float type");
    acc.mapv_inplace(|v| v / n);
    Ok(acc)
}

/// Index of the largest entry of each row (first one on ties).
pub fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Binary mask from a probability map: `p >= t` → 1.
pub fn threshold<D: Dimension>(probs: &Array<f32, D>, t: f32) -> Array<f32, D> {
    probs.mapv(|p| if p >= t { 1.0 } else { 0.0 })
}
