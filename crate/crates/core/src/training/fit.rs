use super::{epoch_lr, read_metrics_csv, EpochRecord, RunDir, RunState, TrainError, TrainOptions};
use crate::config::ExperimentConfig;
use crate::models::{Checkpoint, CheckpointMeta, Module};
use crate::nn::{Param, Sgd};
use crate::rng::derive_seed;

/// Seed of one run: the config seed, mixed with the fold id when there is one.
pub fn run_seed(cfg: &ExperimentConfig, fold: Option<usize>) -> u64 {
    match fold {
        Some(f) => derive_seed(cfg.seed, &[f as u64]),
        None => cfg.seed,
    }
}

pub(crate) struct FitSpec<'a> {
    pub cfg: &'a ExperimentConfig,
    pub opts: &'a TrainOptions,
    pub metric_name: &'static str,
    pub hierarchy_hash: Option<String>,
}

/// The epoch loop shared by both tasks. `train_epoch(model, opt, epoch, lr)`
/// returns the mean training loss; `validate` the monitored metric (higher
/// is better). On return the model holds its best weights.
pub(crate) fn fit<M: Module>(
    model: &mut M,
    spec: FitSpec<'_>,
    mut train_epoch: impl FnMut(&mut M, &mut Sgd, usize, f32) -> Result<f64, TrainError>,
    validate: impl Fn(&M) -> Result<f64, TrainError>,
) -> Result<RunState, TrainError> {
    let FitSpec {
        cfg,
        opts,
        metric_name,
        hierarchy_hash,
    } = spec;
    let sched = &cfg.schedule;
    model.set_exec(opts.exec);
    let mut sgd = Sgd::new(sched.momentum as f32, sched.weight_decay as f32);
    let mut state = RunState::new(opts.fold, run_seed(cfg, opts.fold), metric_name);
    let mut start = 0;
    if let Some(stem) = &opts.resume {
        let ck = Checkpoint::load(stem)?;
        if ck.meta.task != cfg.task {
            return Err(TrainError::Setup(format!(
                "{}: checkpoint is for task {}, config says {}",
                stem.display(),
                ck.meta.task,
                cfg.task
            )));
        }
        if let Some(h) = &hierarchy_hash {
            ck.check_hierarchy(h)?;
        }
        ck.restore_into(model)?;
        sgd.velocity = ck.velocity.clone();
        start = ck.meta.epoch + 1;
        state.epoch = start;
        state.cycle = ck.meta.epoch / sched.epochs_per_cycle;
        state.best_metric = Some(ck.meta.metric);
        state.best_epoch = Some(ck.meta.epoch);
        state.best_checkpoint = Some(stem.with_extension(""));
        log::info!("resuming from {} after epoch {}", stem.display(), ck.meta.epoch);
    }
    let run_dir = opts.run_dir.clone().map(|root| RunDir { root });
    if let Some(d) = &run_dir {
        // Keep the earlier part of the trace when continuing in place.
        let previous = d.root.join("metrics.csv");
        if start > 0 && previous.is_file() {
            for (epoch, train_loss, val_metric) in read_metrics_csv(&previous)? {
                if epoch < start {
                    state.history.push(EpochRecord {
                        epoch,
                        cycle: epoch / sched.epochs_per_cycle,
                        lr: epoch_lr(epoch, sched),
                        train_loss,
                        val_metric,
                    });
                }
            }
        }
        d.create(cfg)?;
    }
    let mut best: Option<Vec<Param>> = None;
    for epoch in start..sched.total_epochs() {
        let lr = epoch_lr(epoch, sched);
        let train_loss = train_epoch(model, &mut sgd, epoch, lr as f32)?;
        let val_metric = validate(model)?;
        let cycle = epoch / sched.epochs_per_cycle;
        let improved = state.record(EpochRecord {
            epoch,
            cycle,
            lr,
            train_loss,
            val_metric,
        });
        log::info!(
            "{}epoch {epoch} cycle {cycle} lr {lr:.3e} loss {train_loss:.5} {metric_name} {val_metric:.4}{}",
            opts.fold.map(|f| format!("fold {f} ")).unwrap_or_default(),
            if improved { " *" } else { "" }
        );
        if improved {
            best = Some(model.params().into_iter().cloned().collect());
            if let Some(d) = &run_dir {
                let meta = CheckpointMeta {
                    task: cfg.task,
                    model: cfg.model.clone(),
                    input: cfg.input.clone(),
                    hierarchy_hash: hierarchy_hash.clone(),
                    config_hash: cfg.hash(),
                    epoch,
                    metric_name: metric_name.to_string(),
                    metric: val_metric,
                    fold: opts.fold,
                    seed: state.seed,
                };
                let stem = d.best_stem();
                Checkpoint::from_module(meta, model, &sgd.velocity).save(&stem)?;
                state.best_checkpoint = Some(stem);
            }
        }
        if let Some(d) = &run_dir {
            d.write_traces(&state.history)?;
        }
    }
    if let Some(d) = &run_dir {
        d.write_plots(&state)?;
    }
    if let Some(best) = best {
        for (dst, src) in model.params_mut().into_iter().zip(best) {
            dst.value = src.value;
        }
    }
    Ok(state)
}
