//! `eval` and `predict`: checkpoint loading, TTA, ensembling, reports.

use std::path::{Path, PathBuf};

use clap::Args;
use hiergi::config::ExperimentConfig;
use hiergi::data::{
    load_classification_manifest, load_mask, load_segmentation_manifest, mask_to_tensor, preprocess,
    resolve_data_path, ClassificationData, InputSpec, SegmentationData,
};
use hiergi::losses::sigmoid;
use hiergi::metrics::{dataset_seg_report, mcc_checked, MetricReport};
use hiergi::models::{
    argmax_rows, ensemble, softmax_rows, tta_classify_batch, tta_segment_batch, Checkpoint, CheckpointMeta,
    ClassificationModel, Segmenter, SegmentationModel, TinyCnn,
};
use hiergi::nn::Tensor;
use hiergi::training::{classification_report, predict_class_probs, predict_mask_probs, segmentation_report};
use hiergi::{Execution, LabelHierarchy, Task};
use image::{imageops, GrayImage, Luma};
use ndarray::{concatenate, stack, Array2, Array3, Axis};
use serde::Serialize;

use crate::{usage_error, AggregationArg, Classify, CmdResult, Context, TaskArg};

const CHUNK: usize = 16;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint stems, .ckpt files, run directories or cv roots (all folds).
    #[arg(long = "checkpoint", value_name = "PATH", num_args = 1.., required_unless_present = "pred_dir")]
    pub checkpoints: Vec<PathBuf>,

    /// Labelled manifest to score against.
    #[arg(short, long, value_name = "CSV")]
    pub manifest: PathBuf,

    /// Score precomputed masks `<DIR>/<image stem>.png` instead of a model.
    #[arg(long, value_name = "DIR", conflicts_with = "checkpoints")]
    pub pred_dir: Option<PathBuf>,

    /// Required with --pred-dir; otherwise taken from the checkpoints.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,

    /// Hierarchy JSON; defaults to the one the run was configured with.
    #[arg(long, value_name = "FILE")]
    pub hierarchy: Option<PathBuf>,

    #[arg(long)]
    pub no_tta: bool,

    /// How segmentation scores combine across images.
    #[arg(long, value_enum, default_value_t = AggregationArg::PerImageMean)]
    pub aggregation: AggregationArg,

    /// Also write the report JSON here.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Checkpoint stems, .ckpt files, run directories or cv roots (all folds).
    #[arg(long = "checkpoint", value_name = "PATH", num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,

    /// Directory of images, or a CSV whose `path`/`image_path` column lists them.
    #[arg(short, long, value_name = "PATH")]
    pub input: PathBuf,

    /// Classification: output CSV. Segmentation: output directory of masks.
    #[arg(short, long, value_name = "PATH")]
    pub out: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub hierarchy: Option<PathBuf>,

    #[arg(long)]
    pub no_tta: bool,
}

/// What `eval` prints and writes.
#[derive(Serialize)]
struct EvalOutput {
    task: Task,
    manifest: PathBuf,
    checkpoints: Vec<PathBuf>,
    members: usize,
    ensemble: bool,
    tta: bool,
    /// MCC had a zero denominator and was reported as 0.
    mcc_degenerate: Option<bool>,
    report: MetricReport,
}

fn has_weights(stem: &Path) -> bool {
    Checkpoint::weights_path(stem).is_file()
}

/// Expands each path into checkpoint stems: a stem or either of its files,
/// a run directory (`checkpoints/best`), or a cv root (every `fold*`).
pub fn resolve_checkpoints(paths: &[PathBuf]) -> CmdResult<Vec<PathBuf>> {
    let mut stems = Vec::new();
    for p in paths {
        let is_ckpt_file = matches!(p.extension().and_then(|e| e.to_str()), Some("ckpt" | "json")) && p.is_file();
        if is_ckpt_file && has_weights(&p.with_extension("")) {
            stems.push(p.with_extension(""));
        } else if has_weights(p) {
            stems.push(p.clone());
        } else if p.is_dir() {
            let direct = [p.join("checkpoints").join("best"), p.join("best")];
            if let Some(s) = direct.into_iter().find(|s| has_weights(s)) {
                stems.push(s);
                continue;
            }
            let mut folds: Vec<PathBuf> = std::fs::read_dir(p)
                .usage()?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|d| d.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("fold")))
                .map(|d| d.join("checkpoints").join("best"))
                .filter(|s| has_weights(s))
                .collect();
            if folds.is_empty() {
                return Err(usage_error(format!("no checkpoints under {}", p.display())));
            }
            folds.sort();
            stems.extend(folds);
        } else {
            return Err(usage_error(format!("checkpoint not found: {}", p.display())));
        }
    }
    stems.dedup();
    Ok(stems)
}

/// Checkpoints of one task and one input contract.
struct Members {
    stems: Vec<PathBuf>,
    metas: Vec<CheckpointMeta>,
}

impl Members {
    fn load(paths: &[PathBuf]) -> CmdResult<Self> {
        let stems = resolve_checkpoints(paths)?;
        let metas = stems
            .iter()
            .map(|s| Checkpoint::load_meta(s))
            .collect::<Result<Vec<_>, _>>()
            .usage()?;
        let first = &metas[0];
        for (s, m) in stems.iter().zip(&metas) {
            if m.task != first.task || m.input != first.input {
                return Err(usage_error(format!(
                    "{} does not match {}: members must share task and input size",
                    s.display(),
                    stems[0].display()
                )));
            }
        }
        Ok(Self { stems, metas })
    }

    fn task(&self) -> Task {
        self.metas[0].task
    }

    fn input(&self) -> &InputSpec {
        &self.metas[0].input
    }

    /// `--hierarchy`, else the hierarchy the first run was configured
    /// with, else the built-in taxonomy; must match every checkpoint.
    fn hierarchy(&self, flag: Option<&Path>) -> CmdResult<LabelHierarchy> {
        let configured = || {
            let cfg_path = self.stems[0].parent()?.parent()?.join("config.json");
            ExperimentConfig::from_path(&cfg_path).ok()?.hierarchy
        };
        let h = match flag.map(Path::to_path_buf).or_else(configured) {
            Some(p) => LabelHierarchy::from_path(resolve_data_path(&p)).usage()?,
            None => LabelHierarchy::default_taxonomy(),
        };
        let hash = h.hash();
        for (s, m) in self.stems.iter().zip(&self.metas) {
            if let Some(stored) = &m.hierarchy_hash {
                if *stored != hash {
                    return Err(usage_error(format!(
                        "{}: hierarchy hash mismatch (checkpoint {stored}, loaded {hash}); pass the training hierarchy with --hierarchy",
                        s.display()
                    )));
                }
            }
        }
        Ok(h)
    }

    fn classifiers(&self, n_find: usize, exec: Execution) -> CmdResult<Vec<TinyCnn>> {
        self.stems
            .iter()
            .zip(&self.metas)
            .map(|(s, m)| {
                let mut model = m.model.build_classifier(n_find, 0).usage()?;
                Checkpoint::load(s).and_then(|c| c.restore_into(&mut model)).usage()?;
                hiergi::models::Module::set_exec(&mut model, exec);
                Ok(model)
            })
            .collect()
    }

    fn segmenters(&self, exec: Execution) -> CmdResult<Vec<Segmenter>> {
        self.stems
            .iter()
            .zip(&self.metas)
            .map(|(s, m)| {
                let mut model = m.model.build_segmenter(0).usage()?;
                Checkpoint::load(s).and_then(|c| c.restore_into(&mut model)).usage()?;
                hiergi::models::Module::set_exec(&mut model, exec);
                Ok(model)
            })
            .collect()
    }
}

fn emit(out: &EvalOutput, path: Option<&Path>) -> CmdResult {
    let json = serde_json::to_string_pretty(out).expect("report serializes") + "\n";
    if let Some(p) = path {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).runtime()?;
        }
        std::fs::write(p, &json).map_err(|e| crate::Failure::Runtime(anyhow::anyhow!("{}: {e}", p.display())))?;
    }
    print!("{json}");
    Ok(())
}

pub fn eval(args: EvalArgs, ctx: &Context) -> CmdResult {
    let manifest = resolve_data_path(&args.manifest);
    if !manifest.is_file() {
        return Err(usage_error(format!("manifest not found: {}", manifest.display())));
    }
    if let Some(dir) = &args.pred_dir {
        return eval_masks(&args, &manifest, dir, ctx);
    }
    let members = Members::load(&args.checkpoints)?;
    let task = members.task();
    if let Some(t) = args.task {
        if Task::from(t) != task {
            return Err(usage_error(format!("--task {} but the checkpoints are {task}", Task::from(t))));
        }
    }
    let tta = !args.no_tta;
    let exec = ctx.exec;
    let (report, degenerate) = match task {
        Task::Classify => {
            let h = members.hierarchy(args.hierarchy.as_deref())?;
            let records = load_classification_manifest(&manifest, &h).usage()?;
            let models = members.classifiers(h.n_find(), exec)?;
            let data = ClassificationData::load(&records, members.input(), exec).runtime()?;
            let idx: Vec<usize> = (0..data.len()).collect();
            let probs = predict_class_probs(&models, &data, &idx, tta, exec).runtime()?;
            let (report, cm) = classification_report(&probs, &data.labels).runtime()?;
            (report, Some(mcc_checked(&cm).runtime()?.degenerate))
        }
        Task::Segment => {
            let pairs = load_segmentation_manifest(&manifest).usage()?;
            let models = members.segmenters(exec)?;
            let data = SegmentationData::load(&pairs, members.input(), exec).runtime()?;
            let idx: Vec<usize> = (0..data.len()).collect();
            let probs = predict_mask_probs(&models, &data, &idx, tta, exec).runtime()?;
            let masks: Vec<_> = data.masks.iter().collect();
            (segmentation_report(&probs, &masks, args.aggregation.into(), exec).runtime()?, None)
        }
    };
    let n = members.stems.len();
    emit(
        &EvalOutput {
            task,
            manifest,
            checkpoints: members.stems,
            members: n,
            ensemble: n > 1,
            tta,
            mcc_degenerate: degenerate,
            report,
        },
        args.out.as_deref(),
    )
}

fn stem_of(path: &Path) -> CmdResult<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| usage_error(format!("{}: no file name", path.display())))
}

fn eval_masks(args: &EvalArgs, manifest: &Path, dir: &Path, ctx: &Context) -> CmdResult {
    if args.task.map(Task::from) != Some(Task::Segment) {
        return Err(usage_error("--pred-dir needs --task segment"));
    }
    let pairs = load_segmentation_manifest(manifest).usage()?;
    let mut preds = Vec::with_capacity(pairs.len());
    let mut truths = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let pred_path = dir.join(format!("{}.png", stem_of(&pair.image_path)?));
        if !pred_path.is_file() {
            return Err(usage_error(format!("prediction not found: {}", pred_path.display())));
        }
        let (p, g) = (
            load_mask(&pred_path).runtime()?,
            load_mask(&pair.mask_path).runtime()?,
        );
        if p.dimensions() != g.dimensions() {
            return Err(usage_error(format!(
                "{} is {:?} but {} is {:?}",
                pred_path.display(),
                p.dimensions(),
                pair.mask_path.display(),
                g.dimensions()
            )));
        }
        preds.push(mask_to_tensor(&p).into_dyn());
        truths.push(mask_to_tensor(&g).into_dyn());
    }
    let views: Vec<_> = preds.iter().zip(&truths).map(|(p, g)| (p.view(), g.view())).collect();
    let report = dataset_seg_report(&views, args.aggregation.into(), ctx.exec).runtime()?;
    emit(
        &EvalOutput {
            task: Task::Segment,
            manifest: manifest.to_path_buf(),
            checkpoints: Vec::new(),
            members: 0,
            ensemble: false,
            tta: false,
            mcc_degenerate: None,
            report,
        },
        args.out.as_deref(),
    )
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Images named by `input`: a directory (sorted) or a CSV list whose paths
/// are relative to the CSV's directory.
fn list_images(input: &Path) -> CmdResult<Vec<PathBuf>> {
    let input = resolve_data_path(input);
    let paths = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(&input)
            .usage()?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        v.sort();
        v
    } else if input.is_file() {
        let base = input.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut r = csv::Reader::from_path(&input).usage()?;
        let headers = r.headers().usage()?.clone();
        let col = headers
            .iter()
            .position(|h| h == "path" || h == "image_path")
            .ok_or_else(|| usage_error(format!("{}: no `path` or `image_path` column", input.display())))?;
        let mut v = Vec::new();
        for row in r.records() {
            let row = row.usage()?;
            let p = PathBuf::from(&row[col]);
            v.push(if p.is_relative() { base.join(p) } else { p });
        }
        v
    } else {
        return Err(usage_error(format!("input not found: {}", input.display())));
    };
    if paths.is_empty() {
        return Err(usage_error(format!("no images in {}", input.display())));
    }
    Ok(paths)
}

fn batches(images: &[Array3<f32>]) -> Vec<Tensor> {
    images
        .chunks(CHUNK)
        .map(|c| {
            let views: Vec<_> = c.iter().map(|a| a.view()).collect();
            stack(Axis(0), &views).expect("images share one shape")
        })
        .collect()
}

fn concat_rows<A: Clone, D: ndarray::RemoveAxis>(parts: Vec<ndarray::Array<A, D>>) -> ndarray::Array<A, D> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).expect("parts share trailing shape")
}

pub fn predict(args: PredictArgs, ctx: &Context) -> CmdResult {
    let members = Members::load(&args.checkpoints)?;
    let paths = list_images(&args.input)?;
    let exec = ctx.exec;
    let tta = !args.no_tta;
    let images = exec
        .map(&paths, |p| preprocess(p, members.input()))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .runtime()?;
    let xs = batches(&images);
    match members.task() {
        Task::Classify => {
            let h = members.hierarchy(args.hierarchy.as_deref())?;
            let models = members.classifiers(h.n_find(), exec)?;
            let per_member = models
                .iter()
                .map(|m| {
                    let parts = xs
                        .iter()
                        .map(|x| {
                            if tta {
                                tta_classify_batch(m, x, exec)
                            } else {
                                m.class_logits(x).map(|l| softmax_rows(&l))
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(concat_rows(parts))
                })
                .collect::<Result<Vec<Array2<f64>>, hiergi::models::ModelError>>()
                .runtime()?;
            let probs = ensemble(&per_member).runtime()?;
            write_class_csv(&args.out, &paths, &probs, &h)?;
        }
        Task::Segment => {
            let models = members.segmenters(exec)?;
            let per_member = models
                .iter()
                .map(|m| {
                    let parts = xs
                        .iter()
                        .map(|x| {
                            if tta {
                                tta_segment_batch(m, x, exec)
                            } else {
                                m.mask_logits(x).map(|l| l.mapv(|v| sigmoid(v as f64) as f32))
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(concat_rows(parts))
                })
                .collect::<Result<Vec<Tensor>, hiergi::models::ModelError>>()
                .runtime()?;
            let probs = ensemble(&per_member).runtime()?;
            write_masks(&args.out, &paths, &probs)?;
        }
    }
    println!(
        "wrote {} predictions ({} member{}, tta {}) to {}",
        paths.len(),
        members.stems.len(),
        if members.stems.len() == 1 { "" } else { "s" },
        tta,
        args.out.display()
    );
    Ok(())
}

fn write_class_csv(out: &Path, paths: &[PathBuf], probs: &Array2<f64>, h: &LabelHierarchy) -> CmdResult {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).runtime()?;
    }
    let mut w = csv::Writer::from_path(out).runtime()?;
    let mut header = vec!["path".to_string(), "finding".into(), "category".into(), "tract".into(), "confidence".into()];
    header.extend(h.findings().iter().map(|f| format!("p_{f}")));
    w.write_record(&header).runtime()?;
    for ((path, k), row) in paths.iter().zip(argmax_rows(probs)).zip(probs.rows()) {
        let mut rec = vec![
            path.display().to_string(),
            h.findings()[k].clone(),
            h.categories()[h.category_of(k)].clone(),
            h.tracts()[h.tract_of(k)].clone(),
            format!("{:.6}", row[k]),
        ];
        rec.extend(row.iter().map(|p| format!("{p:.6}")));
        w.write_record(&rec).runtime()?;
    }
    w.flush().runtime()
}

/// Thresholds each map at 0.5 and writes it at the source image's size.
fn write_masks(out: &Path, paths: &[PathBuf], probs: &Tensor) -> CmdResult {
    std::fs::create_dir_all(out).runtime()?;
    let mut seen = std::collections::HashSet::new();
    for (path, p) in paths.iter().zip(probs.outer_iter()) {
        let stem = stem_of(path)?;
        if !seen.insert(stem.clone()) {
            return Err(usage_error(format!("two inputs share the file stem \"{stem}\"")));
        }
        let (_, h, w) = p.dim();
        let mask = GrayImage::from_fn(w as u32, h as u32, |x, y| {
            Luma([if p[[0, y as usize, x as usize]] >= 0.5 { 255 } else { 0 }])
        });
        let (ow, oh) = image::image_dimensions(path).runtime()?;
        let mask = if (ow, oh) == (w as u32, h as u32) {
            mask
        } else {
            imageops::resize(&mask, ow, oh, imageops::FilterType::Nearest)
        };
        let dst = out.join(format!("{stem}.png"));
        mask.save(&dst)
            .map_err(|e| crate::Failure::Runtime(anyhow::anyhow!("{}: {e}", dst.display())))?;
    }
    Ok(())
}
