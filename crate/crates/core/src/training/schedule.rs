use super::TrainError;
use crate::config::ScheduleConfig;

/// Cosine decay from `lr_init` at `t = 0` to `lr_final` at `t = n`.
pub fn lr_at(t: f64, cfg: &ScheduleConfig) -> Result<f64, TrainError> {
    let n = cfg.epochs_per_cycle;
    if !(0.0..=n as f64).contains(&t) {
        return Err(TrainError::ScheduleDomain { t, n });
    }
    let cos = (std::f64::consts::PI * t / n as f64).cos();
    Ok(cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + cos))
}

/// Learning rate used throughout global epoch `epoch`: the schedule is
/// stepped per epoch and restarts at every cycle boundary.
pub fn epoch_lr(epoch: usize, cfg: &ScheduleConfig) -> f64 {
    let t = epoch % cfg.epochs_per_cycle;
    lr_at(t as f64, cfg).expect("t < n")
}

/// Per-epoch learning rates for the whole run.
pub fn lr_trace(cfg: &ScheduleConfig) -> Vec<f64> {
    (0..cfg.total_epochs()).map(|e| epoch_lr(e, cfg)).collect()
}
