//! `runs/<name>/fold<i>/{checkpoints/, lr_trace.csv, metrics.csv, config.json}`
//! plus SVG plots of both traces.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpochRecord, RunState, TrainError};
use crate::config::ExperimentConfig;
use crate::plot::{line_chart, Series};

#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct MetricsRow {
    epoch: usize,
    train_loss: f64,
    val_metric: f64,
}

#[derive(Serialize)]
struct LrRow {
    epoch: usize,
    cycle: usize,
    lr: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> TrainError {
    TrainError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(TrainError::io(path))
}

impl RunDir {
    /// `<output_dir>/<name>/fold<i>`.
    pub fn for_fold(cfg: &ExperimentConfig, fold: usize) -> Self {
        Self {
            root: cfg.run_root().join(format!("fold{fold}")),
        }
    }

    /// Creates the directory tree and stores the materialized config.
    pub fn create(&self, cfg: &ExperimentConfig) -> Result<(), TrainError> {
        let ck = self.checkpoint_dir();
        std::fs::create_dir_all(&ck).map_err(TrainError::io(&ck))?;
        let path = self.root.join("config.json");
        std::fs::write(&path, cfg.to_json()).map_err(TrainError::io(&path))
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    /// Stem of the retained best checkpoint.
    pub fn best_stem(&self) -> PathBuf {
        self.checkpoint_dir().join("best")
    }

    /// Rewrites both CSV traces from the run history.
    pub fn write_traces(&self, history: &[EpochRecord]) -> Result<(), TrainError> {
        write_rows(
            &self.root.join("metrics.csv"),
            history.iter().map(|r| MetricsRow {
                epoch: r.epoch,
                train_loss: r.train_loss,
                val_metric: r.val_metric,
            }),
        )?;
        write_rows(
            &self.root.join("lr_trace.csv"),
            history.iter().map(|r| LrRow {
                epoch: r.epoch,
                cycle: r.cycle,
                lr: r.lr,
            }),
        )
    }

    pub fn write_plots(&self, state: &RunState) -> Result<(), TrainError> {
        let lrs = state.lrs();
        let losses = state.losses();
        let metrics = state.val_metrics();
        let charts = [
            (
                "lr_trace.svg",
                line_chart("learning rate", "lr", &[Series { label: "lr", values: &lrs }], true),
            ),
            (
                "metrics.svg",
                line_chart(
                    "training curves",
                    "value",
                    &[
                        Series {
                            label: "train loss",
                            values: &losses,
                        },
                        Series {
                            label: &state.metric_name,
                            values: &metrics,
                        },
                    ],
                    false,
                ),
            ),
        ];
        for (name, svg) in charts {
            let path = self.root.join(name);
            std::fs::write(&path, svg).map_err(TrainError::io(&path))?;
        }
        Ok(())
    }
}

/// Parses a `metrics.csv` back into (epoch, train_loss, val_metric) rows.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<(usize, f64, f64)>, TrainError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize::<MetricsRow>()
        .map(|row| {
            row.map(|m| (m.epoch, m.train_loss, m.val_metric))
                .map_err(|e| csv_err(path, e))
        })
        .collect()
}
