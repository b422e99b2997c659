//! Hierarchical classification loss and dual-supervision segmentation loss.
//!
//! The classifier emits one logit per finding. Tract and category
//! log-probabilities are obtained by log-sum-exp over the findings of each
//! coarse class, and each level contributes a cross-entropy term weighted by
//! `log(n_level)`.

use ndarray::{Array2, ArrayD, ArrayView2, ArrayViewD, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::hierarchy::{
    aggregate_logits, check_finite, logsumexp, logsumexp_over, AggregationMap, CategoryGrouping,
    HierarchyError, LabelHierarchy,
};

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("target {target:?} is inconsistent with the hierarchy (expected {expected:?})")]
    InconsistentTarget {
        target: HierTarget,
        expected: HierTarget,
    },
    #[error("finding index {0} out of range")]
    FindingOutOfRange(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch has {logits} logit rows but {targets} targets")]
    BatchMismatch { logits: usize, targets: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("mask value {0} is not 0 or 1")]
    NonBinaryMask(f32),
}

/// Per-level weights of the hierarchical loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierLossWeights {
    pub tract: f64,
    pub category: f64,
    pub finding: f64,
}

impl HierLossWeights {
    /// `log(n)` for each level, with `n` the class count of that level under `grouping`.
    pub fn from_hierarchy(h: &LabelHierarchy, grouping: CategoryGrouping) -> Self {
        Self {
            tract: (h.n_tract() as f64).ln(),
            category: (h.category_map(grouping).n_groups() as f64).ln(),
            finding: (h.n_find() as f64).ln(),
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        Self {
            tract: self.tract * s,
            category: self.category * s,
            finding: self.finding * s,
        }
    }
}

/// Labels of one sample at all three levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierTarget {
    pub finding: usize,
    pub category: usize,
    pub tract: usize,
}

/// Unweighted per-level cross-entropies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelTerms {
    pub tract: f64,
    pub category: f64,
    pub finding: f64,
}

impl LevelTerms {
    pub fn weighted(&self, w: &HierLossWeights) -> f64 {
        w.tract * self.tract + w.category * self.category + w.finding * self.finding
    }
}

/// The hierarchical loss bound to a taxonomy.
#[derive(Clone, Debug)]
pub struct HierLoss<'h> {
    pub hierarchy: &'h LabelHierarchy,
    pub grouping: CategoryGrouping,
    pub weights: HierLossWeights,
}

impl<'h> HierLoss<'h> {
    pub fn new(hierarchy: &'h LabelHierarchy) -> Self {
        Self::with_grouping(hierarchy, CategoryGrouping::Global)
    }

    pub fn with_grouping(hierarchy: &'h LabelHierarchy, grouping: CategoryGrouping) -> Self {
        Self {
            hierarchy,
            grouping,
            weights: HierLossWeights::from_hierarchy(hierarchy, grouping),
        }
    }

    pub fn weights(mut self, weights: HierLossWeights) -> Self {
        self.weights = weights;
        self
    }

    fn category_map(&self) -> &AggregationMap {
        self.hierarchy.category_map(self.grouping)
    }

    /// The consistent target for a finding.
    pub fn target(&self, finding: usize) -> Result<HierTarget, LossError> {
        if finding >= self.hierarchy.n_find() {
            return Err(LossError::FindingOutOfRange(finding));
        }
        Ok(HierTarget {
            finding,
            category: self.category_map().group_of[finding],
            tract: self.hierarchy.tract_map().group_of[finding],
        })
    }

    fn check_target(&self, t: &HierTarget) -> Result<(), LossError> {
        let expected = self.target(t.finding)?;
        if expected != *t {
            return Err(LossError::InconsistentTarget {
                target: *t,
                expected,
            });
        }
        Ok(())
    }

    /// Unweighted cross-entropy at each level.
    pub fn terms(&self, z: &[f64], target: &HierTarget) -> Result<LevelTerms, LossError> {
        self.check_target(target)?;
        let tract = aggregate_logits(z, self.hierarchy.tract_map())?;
        let category = aggregate_logits(z, self.category_map())?;
        Ok(LevelTerms {
            tract: -tract[target.tract],
            category: -category[target.category],
            finding: (logsumexp(z) - z[target.finding]).max(0.0),
        })
    }

    pub fn loss(&self, z: &[f64], target: &HierTarget) -> Result<f64, LossError> {
        Ok(self.terms(z, target)?.weighted(&self.weights))
    }

    /// Loss and its gradient with respect to the logits.
    ///
    /// With `s = softmax(z)` and `q_G` the softmax restricted to group `G`,
    /// `∂/∂z [−log P(G)] = s − q_G`, so the gradient is
    /// `(w_t + w_c + w_f)·s − w_t·q_tract − w_c·q_cat − w_f·e_find`.
    pub fn loss_and_grad(&self, z: &[f64], target: &HierTarget) -> Result<(f64, Vec<f64>), LossError> {
        self.check_target(target)?;
        if z.len() != self.hierarchy.n_find() {
            return Err(HierarchyError::LengthMismatch {
                expected: self.hierarchy.n_find(),
                found: z.len(),
            }
            .into());
        }
        check_finite(z)?;
        let w = &self.weights;
        let lse = logsumexp(z);
        let tract_members = &self.hierarchy.tract_map().membership[target.tract];
        let cat_members = &self.category_map().membership[target.category];
        let lse_tract = logsumexp_over(z, tract_members.iter().copied());
        let lse_cat = logsumexp_over(z, cat_members.iter().copied());
        let terms = LevelTerms {
            tract: (lse - lse_tract).max(0.0),
            category: (lse - lse_cat).max(0.0),
            finding: (lse - z[target.finding]).max(0.0),
        };

        let w_sum = w.tract + w.category + w.finding;
        let mut grad: Vec<f64> = z.iter().map(|&v| w_sum * (v - lse).exp()).collect();
        for &k in tract_members {
            grad[k] -= w.tract * (z[k] - lse_tract).exp();
        }
        for &k in cat_members {
            grad[k] -= w.category * (z[k] - lse_cat).exp();
        }
        grad[target.finding] -= w.finding;
        Ok((terms.weighted(w), grad))
    }

    fn check_batch(&self, z: &ArrayView2<f64>, targets: &[HierTarget]) -> Result<(), LossError> {
        if targets.is_empty() {
            return Err(LossError::EmptyBatch);
        }
        if z.nrows() != targets.len() {
            return Err(LossError::BatchMismatch {
                logits: z.nrows(),
                targets: targets.len(),
            });
        }
        if z.ncols() != self.hierarchy.n_find() {
            return Err(HierarchyError::LengthMismatch {
                expected: self.hierarchy.n_find(),
                found: z.ncols(),
            }
            .into());
        }
        Ok(())
    }

    /// Mean loss over a batch of logit rows.
    pub fn batch_loss(&self, z: ArrayView2<f64>, targets: &[HierTarget]) -> Result<f64, LossError> {
        self.check_batch(&z, targets)?;
        let mut total = 0.0;
        for (row, t) in z.outer_iter().zip(targets) {
            total += self.loss(&row.to_vec(), t)?;
        }
        Ok(total / targets.len() as f64)
    }

    /// Mean loss and its gradient (already divided by the batch size).
    pub fn batch_loss_and_grad(
        &self,
        z: ArrayView2<f64>,
        targets: &[HierTarget],
        exec: Execution,
    ) -> Result<(f64, Array2<f64>), LossError> {
        self.check_batch(&z, targets)?;
        let rows: Vec<Vec<f64>> = z.outer_iter().map(|r| r.to_vec()).collect();
        let per_sample = exec.map_range(rows.len(), |i| self.loss_and_grad(&rows[i], &targets[i]));
        let n = targets.len() as f64;
        let mut grad = Array2::zeros(z.raw_dim());
        let mut total = 0.0;
        for (i, r) in per_sample.into_iter().enumerate() {
            let (l, g) = r?;
            total += l;
            for (dst, src) in grad.row_mut(i).iter_mut().zip(g) {
                *dst = src / n;
            }
        }
        Ok((total / n, grad))
    }
}

/// Hierarchical loss with global category grouping.
pub fn hier_loss(
    z: &[f64],
    target: &HierTarget,
    w: &HierLossWeights,
    h: &LabelHierarchy,
) -> Result<f64, LossError> {
    HierLoss::new(h).weights(*w).loss(z, target)
}

/// Mean hierarchical loss over a batch, global category grouping.
pub fn hier_loss_batch(
    z: ArrayView2<f64>,
    targets: &[HierTarget],
    w: &HierLossWeights,
    h: &LabelHierarchy,
) -> Result<f64, LossError> {
    HierLoss::new(h).weights(*w).batch_loss(z, targets)
}

/// `−[y·log σ(l) + (1−y)·log(1−σ(l))]`, stable for any finite `l`.
#[inline]
pub fn bce_with_logits(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of the two supervision heads of the double encoder-decoder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegLoss {
    pub head1: f64,
    pub head2: f64,
}

impl Default for SegLoss {
    fn default() -> Self {
        Self {
            head1: 1.0,
            head2: 1.0,
        }
    }
}

fn check_seg_shapes(
    a: &ArrayViewD<f32>,
    b: &ArrayViewD<f32>,
    mask: &ArrayViewD<f32>,
) -> Result<(), LossError> {
    for other in [b, mask] {
        if a.shape() != other.shape() {
            return Err(LossError::ShapeMismatch(a.shape().to_vec(), other.shape().to_vec()));
        }
    }
    if let Some(&v) = mask.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(LossError::NonBinaryMask(v));
    }
    Ok(())
}

/// Mean per-pixel binary cross-entropy of one logit map.
pub fn mean_bce(logits: &ArrayViewD<f32>, mask: &ArrayViewD<f32>) -> f64 {
    let n = logits.len().max(1) as f64;
    let mut total = 0.0;
    Zip::from(logits).and(mask).for_each(|&l, &y| {
        total += bce_with_logits(l as f64, y as f64);
    });
    total / n
}

impl SegLoss {
    pub fn loss(
        &self,
        logits_1: ArrayViewD<f32>,
        logits_2: ArrayViewD<f32>,
        mask: ArrayViewD<f32>,
    ) -> Result<f64, LossError> {
        check_seg_shapes(&logits_1, &logits_2, &mask)?;
        Ok(self.head1 * mean_bce(&logits_1, &mask) + self.head2 * mean_bce(&logits_2, &mask))
    }

    /// Loss plus gradients with respect to both logit maps.
    pub fn loss_and_grad(
        &self,
        logits_1: ArrayViewD<f32>,
        logits_2: ArrayViewD<f32>,
        mask: ArrayViewD<f32>,
    ) -> Result<(f64, ArrayD<f32>, ArrayD<f32>), LossError> {
        let loss = self.loss(logits_1.view(), logits_2.view(), mask.view())?;
        let n = logits_1.len().max(1) as f64;
        let grad = |logits: &ArrayViewD<f32>, w: f64| {
            let mut g = ArrayD::<f32>::zeros(logits.raw_dim());
            Zip::from(&mut g)
                .and(logits)
                .and(&mask)
                .for_each(|g, &l, &y| *g = (w * (sigmoid(l as f64) - y as f64) / n) as f32);
            g
        };
        Ok((loss, grad(&logits_1, self.head1), grad(&logits_2, self.head2)))
    }
}

/// Equal-weight dual-supervision loss.
pub fn seg_loss(
    logits_1: ArrayViewD<f32>,
    logits_2: ArrayViewD<f32>,
    mask: ArrayViewD<f32>,
) -> Result<f64, LossError> {
    SegLoss::default().loss(logits_1, logits_2, mask)
}
