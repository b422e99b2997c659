//! Classification (MCC, micro-F1) and segmentation (Jaccard, F1/Dice,
//! precision, recall) metrics.

use ndarray::{ArrayViewD, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("class index {index} out of range for {n_class} classes")]
    ClassOutOfRange { index: usize, n_class: usize },
    #[error("{truth} truth labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("mask shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("cannot average reports with different aggregation modes")]
    MixedAggregation,
}

/// Square count matrix, rows = true class, columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_class: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_class: usize) -> Self {
        Self {
            n_class,
            counts: vec![0; n_class * n_class],
        }
    }

    /// Builds a matrix from a row-major grid.
    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "confusion matrix must be square");
        Self {
            n_class: n,
            counts: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_labels(truth: &[usize], pred: &[usize], n_class: usize) -> Result<Self, MetricError> {
        if truth.len() != pred.len() {
            return Err(MetricError::LengthMismatch {
                truth: truth.len(),
                pred: pred.len(),
            });
        }
        let mut cm = Self::new(n_class);
        for (&t, &p) in truth.iter().zip(pred) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<(), MetricError> {
        for index in [truth, pred] {
            if index >= self.n_class {
                return Err(MetricError::ClassOutOfRange {
                    index,
                    n_class: self.n_class,
                });
            }
        }
        self.counts[truth * self.n_class + pred] += 1;
        Ok(())
    }

    pub fn n_class(&self) -> usize {
        self.n_class
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_class + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_class).map(|k| self.get(k, k)).sum()
    }

    pub fn true_counts(&self) -> Vec<u64> {
        (0..self.n_class)
            .map(|t| (0..self.n_class).map(|p| self.get(t, p)).sum())
            .collect()
    }

    pub fn pred_counts(&self) -> Vec<u64> {
        (0..self.n_class)
            .map(|p| (0..self.n_class).map(|t| self.get(t, p)).sum())
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_class.max(1)).map(<[u64]>::to_vec).collect()
    }
}

/// MCC value together with whether its denominator vanished.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mcc {
    pub value: f64,
    pub degenerate: bool,
}

/// Multiclass Matthews correlation (Gorodkin's R_K):
/// `(c·s − Σ p_k t_k) / √((s² − Σ p_k²)(s² − Σ t_k²))`,
/// with `c` the trace, `s` the total, `t`/`p` the true/predicted class counts.
/// A zero denominator yields 0 and sets the degenerate flag.
pub fn mcc_checked(cm: &ConfusionMatrix) -> Result<Mcc, MetricError> {
    let s = cm.total() as f64;
    if s == 0.0 {
        return Err(MetricError::Empty);
    }
    let c = cm.trace() as f64;
    let t: Vec<f64> = cm.true_counts().into_iter().map(|v| v as f64).collect();
    let p: Vec<f64> = cm.pred_counts().into_iter().map(|v| v as f64).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        return Ok(Mcc {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Mcc {
        value: ((c * s - pt) / denom).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

pub fn mcc(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    mcc_checked(cm).map(|m| m.value)
}

/// Micro-averaged F1 from class-pooled TP/FP/FN.
pub fn f1_micro(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    if cm.total() == 0 {
        return Err(MetricError::Empty);
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    let pred = cm.pred_counts();
    let truth = cm.true_counts();
    for k in 0..cm.n_class() {
        let d = cm.get(k, k);
        tp += d;
        fp += pred[k] - d;
        fn_ += truth[k] - d;
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Pixel counts of a predicted mask against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl PixelCounts {
    /// Counts over two maps; values `>= 0.5` are foreground.
    pub fn from_masks(pred: &ArrayViewD<f32>, gt: &ArrayViewD<f32>) -> Result<Self, MetricError> {
        if pred.shape() != gt.shape() {
            return Err(MetricError::ShapeMismatch(pred.shape().to_vec(), gt.shape().to_vec()));
        }
        let mut c = PixelCounts::default();
        Zip::from(pred).and(gt).for_each(|&p, &g| match (p >= 0.5, g >= 0.5) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        });
        Ok(c)
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }

    /// Scores from counts. Both masks empty scores 1 on every metric;
    /// any other 0/0 ratio is 0.
    pub fn scores(&self) -> SegScores {
        if self.tp + self.fp + self.fn_ == 0 {
            return SegScores {
                jaccard: 1.0,
                f1: 1.0,
                precision: 1.0,
                recall: 1.0,
            };
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        SegScores {
            jaccard: ratio(self.tp, self.tp + self.fp + self.fn_),
            f1: ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub jaccard: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn seg_scores(pred: &ArrayViewD<f32>, gt: &ArrayViewD<f32>) -> Result<SegScores, MetricError> {
    Ok(PixelCounts::from_masks(pred, gt)?.scores())
}

/// How segmentation scores are combined across images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Score each image, then take the arithmetic mean.
    #[default]
    PerImageMean,
    /// Sum pixel counts over the dataset, then score once.
    Pooled,
}

/// One row of results. Fields that do not apply to the task are `None`
/// (serialized as `null`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub mcc: Option<f64>,
    pub f1_micro: Option<f64>,
    pub jaccard: Option<f64>,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub n_samples: usize,
    pub aggregation: Aggregation,
}

impl MetricReport {
    pub fn classification(cm: &ConfusionMatrix) -> Result<Self, MetricError> {
        Ok(Self {
            mcc: Some(mcc(cm)?),
            f1_micro: Some(f1_micro(cm)?),
            jaccard: None,
            f1: None,
            precision: None,
            recall: None,
            n_samples: cm.total() as usize,
            aggregation: Aggregation::Pooled,
        })
    }

    fn segmentation(s: SegScores, n_samples: usize, aggregation: Aggregation) -> Self {
        Self {
            mcc: None,
            f1_micro: None,
            jaccard: Some(s.jaccard),
            f1: Some(s.f1),
            precision: Some(s.precision),
            recall: Some(s.recall),
            n_samples,
            aggregation,
        }
    }

    /// Field-wise arithmetic mean, e.g. over cross-validation folds.
    /// `n_samples` is summed.
    pub fn mean(reports: &[MetricReport]) -> Result<Self, MetricError> {
        let first = reports.first().ok_or(MetricError::Empty)?;
        if reports.iter().any(|r| r.aggregation != first.aggregation) {
            return Err(MetricError::MixedAggregation);
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> Option<f64>| -> Option<f64> {
            let vals: Option<Vec<f64>> = reports.iter().map(f).collect();
            vals.map(|v| v.iter().sum::<f64>() / n)
        };
        Ok(Self {
            mcc: avg(|r| r.mcc),
            f1_micro: avg(|r| r.f1_micro),
            jaccard: avg(|r| r.jaccard),
            f1: avg(|r| r.f1),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            n_samples: reports.iter().map(|r| r.n_samples).sum(),
            aggregation: first.aggregation,
        })
    }
}

/// Segmentation report over (prediction, ground truth) pairs.
pub fn dataset_seg_report(
    pairs: &[(ArrayViewD<f32>, ArrayViewD<f32>)],
    aggregation: Aggregation,
    exec: Execution,
) -> Result<MetricReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let counts: Vec<Result<PixelCounts, MetricError>> =
        exec.map(pairs, |(p, g)| PixelCounts::from_masks(p, g));
    let counts: Vec<PixelCounts> = counts.into_iter().collect::<Result<_, _>>()?;
    let scores = match aggregation {
        Aggregation::PerImageMean => {
            let n = counts.len() as f64;
            let per: Vec<SegScores> = counts.iter().map(PixelCounts::scores).collect();
            SegScores {
                jaccard: per.iter().map(|s| s.jaccard).sum::<f64>() / n,
                f1: per.iter().map(|s| s.f1).sum::<f64>() / n,
                precision: per.iter().map(|s| s.precision).sum::<f64>() / n,
                recall: per.iter().map(|s| s.recall).sum::<f64>() / n,
            }
        }
        Aggregation::Pooled => counts
            .iter()
            .fold(PixelCounts::default(), |a, &b| a.merge(b))
            .scores(),
    };
    Ok(MetricReport::segmentation(scores, pairs.len(), aggregation))
}
