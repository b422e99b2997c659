use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::eval::{classification_report, predict_class_probs, predict_mask_probs, segmentation_report};
use super::fit::run_seed;
use super::{train_classifier, train_segmenter, RunDir, RunState, Split, TrainError, TrainOptions};
use crate::config::ExperimentConfig;
use crate::data::{
    build_folds, build_plain_folds, load_classification_manifest, load_segmentation_manifest, resolve_data_path,
    ClassificationData, FoldPlan, SegmentationData,
};
use crate::exec::Execution;
use crate::hierarchy::LabelHierarchy;
use crate::metrics::MetricReport;
use crate::models::{Segmenter, TinyCnn};
use crate::nn::Tensor;
use crate::Task;

/// Ensembled predictions on an external test set.
#[derive(Clone, Debug)]
pub struct TestOutcome<P> {
    pub report: MetricReport,
    pub predictions: P,
    pub members: usize,
}

/// Result of k-fold training. `models` hold each fold's best weights.
#[derive(Clone, Debug)]
pub struct CvOutcome<M, P> {
    pub plan: FoldPlan,
    pub states: Vec<RunState>,
    pub models: Vec<M>,
    pub fold_reports: Vec<MetricReport>,
    pub mean: MetricReport,
    pub test: Option<TestOutcome<P>>,
}

/// What `cv` writes to `<run root>/cv_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub task: Task,
    pub folds: usize,
    pub config_hash: String,
    pub fold_reports: Vec<MetricReport>,
    pub mean: MetricReport,
    pub best_metrics: Vec<Option<f64>>,
    pub checkpoints: Vec<Option<PathBuf>>,
    pub test: Option<MetricReport>,
    pub ensemble_members: usize,
    pub tta: bool,
}

impl<M, P> CvOutcome<M, P> {
    fn summary(&self, cfg: &ExperimentConfig) -> CvSummary {
        CvSummary {
            task: cfg.task,
            folds: self.states.len(),
            config_hash: cfg.hash(),
            fold_reports: self.fold_reports.clone(),
            mean: self.mean.clone(),
            best_metrics: self.states.iter().map(|s| s.best_metric).collect(),
            checkpoints: self.states.iter().map(|s| s.best_checkpoint.clone()).collect(),
            test: self.test.as_ref().map(|t| t.report.clone()),
            ensemble_members: self.models.len(),
            tta: cfg.tta,
        }
    }
}

fn fold_options(opts: &TrainOptions, fold: usize) -> TrainOptions {
    TrainOptions {
        exec: opts.exec,
        run_dir: opts.run_dir.as_ref().map(|r| r.join(format!("fold{fold}"))),
        resume: None,
        fold: Some(fold),
        jobs: 1,
    }
}

/// Runs `train_fold` for every fold, at most `opts.jobs` at a time.
/// Results come back ordered by fold id whatever the scheduling.
fn each_fold<R: Send>(
    k: usize,
    opts: &TrainOptions,
    train_fold: impl Fn(usize) -> Result<R, TrainError> + Sync + Send,
) -> Result<Vec<R>, TrainError> {
    let run = || {
        let fold_exec = if opts.jobs > 1 { Execution::Parallel } else { Execution::Sequential };
        fold_exec.map_range(k, |f| {
            train_fold(f).map_err(|e| TrainError::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
    };
    let results = if opts.jobs > 1 {
        opts.exec.with_jobs(opts.jobs, run)
    } else {
        run()
    };
    results.into_iter().collect()
}

/// k-fold classification. With `opts.run_dir` set, fold `i` writes to
/// `<run_dir>/fold<i>`.
pub fn cv_classify(
    cfg: &ExperimentConfig,
    hierarchy: &LabelHierarchy,
    data: &ClassificationData,
    test: Option<&ClassificationData>,
    opts: &TrainOptions,
) -> Result<CvOutcome<TinyCnn, Array2<f64>>, TrainError> {
    let plan = if cfg.stratified_folds {
        build_folds(&data.labels, cfg.folds, cfg.seed)?
    } else {
        build_plain_folds(data.len(), cfg.folds, cfg.seed)?
    };
    let exec = opts.exec;
    let results = each_fold(plan.k, opts, |f| {
        let split = plan.split(f);
        let fold_opts = fold_options(opts, f);
        let mut model = cfg
            .model
            .build_classifier(hierarchy.n_find(), run_seed(cfg, Some(f)))?;
        let state = train_classifier(
            &mut model,
            hierarchy,
            Split {
                train: data,
                train_idx: &split.train,
                val: data,
                val_idx: &split.val,
            },
            cfg,
            &fold_opts,
        )?;
        let probs = predict_class_probs(std::slice::from_ref(&model), data, &split.val, cfg.tta, exec)?;
        let labels: Vec<usize> = split.val.iter().map(|&i| data.labels[i]).collect();
        let (report, _) = classification_report(&probs, &labels)?;
        Ok((state, model, report))
    })?;
    let (states, models, fold_reports) = unzip3(results);
    let mean = MetricReport::mean(&fold_reports)?;
    let test = match test {
        Some(t) => {
            let idx: Vec<usize> = (0..t.len()).collect();
            let probs = predict_class_probs(&models, t, &idx, cfg.tta, exec)?;
            let (report, _) = classification_report(&probs, &t.labels)?;
            Some(TestOutcome {
                report,
                predictions: probs,
                members: models.len(),
            })
        }
        None => None,
    };
    Ok(CvOutcome {
        plan,
        states,
        models,
        fold_reports,
        mean,
        test,
    })
}

/// k-fold segmentation (plain, unstratified folds).
pub fn cv_segment(
    cfg: &ExperimentConfig,
    data: &SegmentationData,
    test: Option<&SegmentationData>,
    opts: &TrainOptions,
) -> Result<CvOutcome<Segmenter, Tensor>, TrainError> {
    let plan = build_plain_folds(data.len(), cfg.folds, cfg.seed)?;
    let exec = opts.exec;
    let results = each_fold(plan.k, opts, |f| {
        let split = plan.split(f);
        let fold_opts = fold_options(opts, f);
        let mut model = cfg.model.build_segmenter(run_seed(cfg, Some(f)))?;
        let state = train_segmenter(
            &mut model,
            Split {
                train: data,
                train_idx: &split.train,
                val: data,
                val_idx: &split.val,
            },
            cfg,
            &fold_opts,
        )?;
        let probs = predict_mask_probs(std::slice::from_ref(&model), data, &split.val, cfg.tta, exec)?;
        let masks: Vec<_> = split.val.iter().map(|&i| &data.masks[i]).collect();
        let report = segmentation_report(&probs, &masks, cfg.aggregation, exec)?;
        Ok((state, model, report))
    })?;
    let (states, models, fold_reports) = unzip3(results);
    let mean = MetricReport::mean(&fold_reports)?;
    let test = match test {
        Some(t) => {
            let idx: Vec<usize> = (0..t.len()).collect();
            let probs = predict_mask_probs(&models, t, &idx, cfg.tta, exec)?;
            let masks: Vec<_> = t.masks.iter().collect();
            let report = segmentation_report(&probs, &masks, cfg.aggregation, exec)?;
            Some(TestOutcome {
                report,
                predictions: probs,
                members: models.len(),
            })
        }
        None => None,
    };
    Ok(CvOutcome {
        plan,
        states,
        models,
        fold_reports,
        mean,
        test,
    })
}

fn unzip3<A, B, C>(v: Vec<(A, B, C)>) -> (Vec<A>, Vec<B>, Vec<C>) {
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for (a, b, c) in v {
        out.0.push(a);
        out.1.push(b);
        out.2.push(c);
    }
    out
}

/// Hierarchy named by the config, or the built-in taxonomy.
pub fn load_hierarchy(cfg: &ExperimentConfig) -> Result<LabelHierarchy, TrainError> {
    Ok(match &cfg.hierarchy {
        Some(p) => LabelHierarchy::from_path(resolve_data_path(p))?,
        None => LabelHierarchy::default_taxonomy(),
    })
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, TrainError> {
    p.as_deref()
        .ok_or_else(|| TrainError::Setup(format!("config has no {what}")))
}

pub fn load_class_data(
    path: &Path,
    hierarchy: &LabelHierarchy,
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<ClassificationData, TrainError> {
    let manifest = load_classification_manifest(&resolve_data_path(path), hierarchy)?;
    log::info!("loading {} images from {}", manifest.len(), path.display());
    Ok(ClassificationData::load(&manifest, &cfg.input, exec)?)
}

pub fn load_seg_data(path: &Path, cfg: &ExperimentConfig, exec: Execution) -> Result<SegmentationData, TrainError> {
    let pairs = load_segmentation_manifest(&resolve_data_path(path))?;
    log::info!("loading {} image/mask pairs from {}", pairs.len(), path.display());
    Ok(SegmentationData::load(&pairs, &cfg.input, exec)?)
}

/// Single training run as configured: validation comes from `val_manifest`
/// or, failing that, from fold `holdout_fold` of the training manifest.
/// Writes into `<output_dir>/<name>/fold<holdout_fold>`.
pub fn run_train(cfg: &ExperimentConfig, opts: &TrainOptions) -> Result<RunState, TrainError> {
    let exec = opts.exec;
    let fold = cfg.holdout_fold;
    let mut opts = opts.clone();
    opts.fold = Some(fold);
    if opts.run_dir.is_none() {
        opts.run_dir = Some(RunDir::for_fold(cfg, fold).root);
    }
    let train_path = required(&cfg.train_manifest, "train_manifest")?;
    match cfg.task {
        Task::Classify => {
            let h = load_hierarchy(cfg)?;
            let train = load_class_data(train_path, &h, cfg, exec)?;
            let mut model = cfg.model.build_classifier(h.n_find(), run_seed(cfg, Some(fold)))?;
            match &cfg.val_manifest {
                Some(v) => {
                    let val = load_class_data(v, &h, cfg, exec)?;
                    let (ti, vi): (Vec<usize>, Vec<usize>) = ((0..train.len()).collect(), (0..val.len()).collect());
                    train_classifier(&mut model, &h, Split { train: &train, train_idx: &ti, val: &val, val_idx: &vi }, cfg, &opts)
                }
                None => {
                    let plan = if cfg.stratified_folds {
                        build_folds(&train.labels, cfg.folds, cfg.seed)?
                    } else {
                        build_plain_folds(train.len(), cfg.folds, cfg.seed)?
                    };
                    let s = plan.split(fold);
                    train_classifier(&mut model, &h, Split { train: &train, train_idx: &s.train, val: &train, val_idx: &s.val }, cfg, &opts)
                }
            }
        }
        Task::Segment => {
            let train = load_seg_data(train_path, cfg, exec)?;
            let mut model = cfg.model.build_segmenter(run_seed(cfg, Some(fold)))?;
            match &cfg.val_manifest {
                Some(v) => {
                    let val = load_seg_data(v, cfg, exec)?;
                    let (ti, vi): (Vec<usize>, Vec<usize>) = ((0..train.len()).collect(), (0..val.len()).collect());
                    train_segmenter(&mut model, Split { train: &train, train_idx: &ti, val: &val, val_idx: &vi }, cfg, &opts)
                }
                None => {
                    let s = build_plain_folds(train.len(), cfg.folds, cfg.seed)?.split(fold);
                    train_segmenter(&mut model, Split { train: &train, train_idx: &s.train, val: &train, val_idx: &s.val }, cfg, &opts)
                }
            }
        }
    }
}

/// Full cross-validation as configured; writes `cv_report.json` under the
/// run root and returns its contents.
pub fn run_cv(cfg: &ExperimentConfig, opts: &TrainOptions) -> Result<CvSummary, TrainError> {
    let exec = opts.exec;
    let mut opts = opts.clone();
    let root = opts.run_dir.get_or_insert_with(|| cfg.run_root()).clone();
    let train_path = required(&cfg.train_manifest, "train_manifest")?;
    let summary = match cfg.task {
        Task::Classify => {
            let h = load_hierarchy(cfg)?;
            let data = load_class_data(train_path, &h, cfg, exec)?;
            let test = cfg
                .test_manifest
                .as_deref()
                .map(|p| load_class_data(p, &h, cfg, exec))
                .transpose()?;
            cv_classify(cfg, &h, &data, test.as_ref(), &opts)?.summary(cfg)
        }
        Task::Segment => {
            let data = load_seg_data(train_path, cfg, exec)?;
            let test = cfg
                .test_manifest
                .as_deref()
                .map(|p| load_seg_data(p, cfg, exec))
                .transpose()?;
            cv_segment(cfg, &data, test.as_ref(), &opts)?.summary(cfg)
        }
    };
    std::fs::create_dir_all(&root).map_err(TrainError::io(&root))?;
    let path = root.join("cv_report.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, json + "\n").map_err(TrainError::io(&path))?;
    Ok(summary)
}
