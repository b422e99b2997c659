//! `train` and `cv`: config materialization, pre-flight checks, runs.

use std::path::{Path, PathBuf};

use hiergi::config::ExperimentConfig;
use hiergi::data::{load_classification_manifest, load_segmentation_manifest, resolve_data_path};
use hiergi::models::{lookup, registry};
use hiergi::training::{load_hierarchy, run_cv, run_train, TrainOptions};
use hiergi::Task;
use serde_json::{json, Map, Value};

use crate::infer::resolve_checkpoints;
use crate::{usage_error, Classify, CmdResult, Context, RunArgs};

/// Config file (if any) overlaid with command-line overrides, with every
/// default filled in and validated.
pub fn materialize(args: &RunArgs) -> CmdResult<ExperimentConfig> {
    let mut partial = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage_error(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| usage_error(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    let obj = partial
        .as_object_mut()
        .ok_or_else(|| usage_error("config must be a JSON object"))?;
    let mut set = |key: &str, v: Value| {
        obj.insert(key.to_string(), v);
    };
    if let Some(t) = args.task {
        set("task", json!(Task::from(t)));
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| json!(p));
    for (key, v) in [
        ("train_manifest", path(&args.train_manifest)),
        ("val_manifest", path(&args.val_manifest)),
        ("test_manifest", path(&args.test_manifest)),
        ("hierarchy", path(&args.hierarchy)),
        ("output_dir", path(&args.output_dir)),
        ("name", args.name.as_ref().map(|n| json!(n))),
        ("seed", args.seed.map(|s| json!(s))),
        ("folds", args.folds.map(|f| json!(f))),
    ] {
        if let Some(v) = v {
            set(key, v);
        }
    }
    if let Some(key) = &args.model {
        let spec = lookup(key).map_err(|e| {
            let keys: Vec<&str> = registry().iter().map(|r| r.key).collect();
            usage_error(format!("{e} (known: {})", keys.join(", ")))
        })?;
        set("model", json!(spec));
    }
    if args.no_tta {
        set("tta", json!(false));
    }
    let mut schedule = Map::new();
    for (key, v) in [
        ("epochs_per_cycle", args.epochs_per_cycle.map(|v| json!(v))),
        ("cycles", args.cycles.map(|v| json!(v))),
        ("batch_size", args.batch_size.map(|v| json!(v))),
        ("lr_init", args.lr.map(|v| json!(v))),
    ] {
        if let Some(v) = v {
            schedule.insert(key.to_string(), v);
        }
    }
    if !schedule.is_empty() {
        let slot = obj.entry("schedule").or_insert_with(|| Value::Object(Map::new()));
        match slot.as_object_mut() {
            Some(existing) => existing.extend(schedule),
            None => *slot = Value::Object(schedule),
        }
    }
    ExperimentConfig::from_value(partial).usage()
}

fn require_file(what: &str, p: &Path) -> CmdResult {
    let resolved = resolve_data_path(p);
    if resolved.is_file() {
        Ok(())
    } else {
        Err(usage_error(format!("{what} not found: {}", resolved.display())))
    }
}

/// Everything that can be checked without touching pixels.
fn preflight(cfg: &ExperimentConfig) -> CmdResult {
    let entry = registry()
        .into_iter()
        .find(|r| r.key == cfg.model.key())
        .ok_or_else(|| usage_error(format!("model {} is not registered", cfg.model.key())))?;
    if !entry.trainable_here {
        return Err(usage_error(format!(
            "model {} needs pretrained weights that this build cannot load; use a from-scratch model",
            entry.key
        )));
    }
    if let Some(h) = &cfg.hierarchy {
        require_file("hierarchy file", h)?;
    }
    let train = cfg
        .train_manifest
        .as_ref()
        .ok_or_else(|| usage_error("no train_manifest in config or flags"))?;
    let manifests = [Some(train), cfg.val_manifest.as_ref(), cfg.test_manifest.as_ref()];
    for m in manifests.iter().flatten() {
        require_file("manifest", m)?;
    }
    match cfg.task {
        Task::Classify => {
            let h = load_hierarchy(cfg).usage()?;
            for m in manifests.into_iter().flatten() {
                load_classification_manifest(&resolve_data_path(m), &h).usage()?;
            }
        }
        Task::Segment => {
            for m in manifests.into_iter().flatten() {
                load_segmentation_manifest(&resolve_data_path(m)).usage()?;
            }
        }
    }
    Ok(())
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json serializes"));
}

pub fn train(args: RunArgs, ctx: &Context) -> CmdResult {
    let cfg = materialize(&args)?;
    if args.dry_run {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    preflight(&cfg)?;
    let resume = match &args.resume {
        Some(p) => {
            let stems = resolve_checkpoints(std::slice::from_ref(p))?;
            match stems.as_slice() {
                [one] => Some(one.clone()),
                _ => return Err(usage_error(format!("{}: expected exactly one checkpoint", p.display()))),
            }
        }
        None => None,
    };
    let opts = TrainOptions {
        exec: ctx.exec,
        resume,
        ..TrainOptions::default()
    };
    let state = ctx
        .exec
        .with_jobs(ctx.jobs, || run_train(&cfg, &opts))
        .runtime()?;
    print_json(&json!({
        "run_dir": cfg.run_root().join(format!("fold{}", cfg.holdout_fold)),
        "epochs": state.history.len(),
        "metric": state.metric_name,
        "best_metric": state.best_metric,
        "best_epoch": state.best_epoch,
        "checkpoint": state.best_checkpoint,
    }));
    Ok(())
}

pub fn cv(args: RunArgs, ctx: &Context) -> CmdResult {
    if args.resume.is_some() {
        return Err(usage_error("--resume applies to `train` only"));
    }
    let cfg = materialize(&args)?;
    if args.dry_run {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    preflight(&cfg)?;
    let opts = TrainOptions {
        exec: ctx.exec,
        jobs: ctx.jobs,
        ..TrainOptions::default()
    };
    let summary = run_cv(&cfg, &opts).runtime()?;
    print_json(&json!({
        "report": cfg.run_root().join("cv_report.json"),
        "folds": summary.folds,
        "mean": summary.mean,
        "test": summary.test,
    }));
    Ok(())
}
