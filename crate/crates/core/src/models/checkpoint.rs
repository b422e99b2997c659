//! Checkpoint files: a little-endian binary tensor dump (`<stem>.ckpt`) and
//! a JSON sidecar (`<stem>.json`) with provenance.
//!
//! Binary layout: magic `HGCK`, `u32` version, `u32` tensor count, then per
//! tensor `u32` name length, UTF-8 name, `u32` rank, `u64` dims, `f32` data.
//! Optimizer velocities are stored as extra tensors named `sgd.velocity.<i>`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelSpec, Module};
use crate::data::InputSpec;
use crate::nn::Param;
use crate::Task;

const MAGIC: &[u8; 4] = b"HGCK";
const VERSION: u32 = 1;
const VELOCITY_PREFIX: &str = "sgd.velocity.";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid sidecar: {source}")]
    Sidecar {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}: not a checkpoint file")]
    BadMagic(String),
    #[error("{path}: unsupported checkpoint version {version}")]
    Version { path: String, version: u32 },
    #[error("checkpoint has {found} parameter tensors, model has {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("parameter {index}: checkpoint has {found} {found_shape:?}, model expects {expected} {expected_shape:?}")]
    ParamMismatch {
        index: usize,
        expected: String,
        expected_shape: Vec<usize>,
        found: String,
        found_shape: Vec<usize>,
    },
    #[error("hierarchy hash mismatch: checkpoint {checkpoint}, current {current}")]
    HierarchyMismatch { checkpoint: String, current: String },
}

/// Provenance stored next to the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: Task,
    pub model: ModelSpec,
    pub input: InputSpec,
    /// Hash of the label hierarchy (classification only).
    pub hierarchy_hash: Option<String>,
    pub config_hash: String,
    /// Zero-based global epoch after which the weights were saved.
    pub epoch: usize,
    pub metric_name: String,
    pub metric: f64,
    pub fold: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<Param>,
    pub velocity: Vec<Vec<f32>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_tensor(w: &mut impl Write, name: &str, shape: &[usize], data: &[f32]) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    w.write_u32::<LittleEndian>(shape.len() as u32)?;
    for &d in shape {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    for &v in data {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read) -> std::io::Result<(String, Vec<usize>, Vec<f32>)> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut name = vec![0; len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let rank = r.read_u32::<LittleEndian>()? as usize;
    let shape = (0..rank)
        .map(|_| r.read_u64::<LittleEndian>().map(|d| d as usize))
        .collect::<std::io::Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let mut data = vec![0.0; n];
    r.read_f32_into::<LittleEndian>(&mut data)?;
    Ok((name, shape, data))
}

impl Checkpoint {
    pub fn from_module<M: Module + ?Sized>(meta: CheckpointMeta, model: &M, velocity: &[Vec<f32>]) -> Self {
        Self {
            meta,
            params: model.params().into_iter().cloned().collect(),
            velocity: velocity.to_vec(),
        }
    }

    pub fn weights_path(stem: &Path) -> PathBuf {
        stem.with_extension("ckpt")
    }

    pub fn sidecar_path(stem: &Path) -> PathBuf {
        stem.with_extension("json")
    }

    /// Writes `<stem>.ckpt` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = stem.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let path = Self::weights_path(stem);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w.write_u32::<LittleEndian>(VERSION)?;
            w.write_u32::<LittleEndian>((self.params.len() + self.velocity.len()) as u32)?;
            for p in &self.params {
                write_tensor(w, &p.name, &p.shape, &p.value)?;
            }
            for (i, v) in self.velocity.iter().enumerate() {
                write_tensor(w, &format!("{VELOCITY_PREFIX}{i}"), &[v.len()], v)?;
            }
            w.flush()
        };
        write(&mut w).map_err(io_err(&path))?;

        let side = Self::sidecar_path(stem);
        let json = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        std::fs::write(&side, json + "\n").map_err(io_err(&side))
    }

    pub fn load_meta(stem: &Path) -> Result<CheckpointMeta, CheckpointError> {
        let side = Self::sidecar_path(stem);
        let text = std::fs::read_to_string(&side).map_err(io_err(&side))?;
        serde_json::from_str(&text).map_err(|source| CheckpointError::Sidecar {
            path: side.display().to_string(),
            source,
        })
    }

    /// Reads both files. `stem` may be given with or without extension.
    pub fn load(stem: &Path) -> Result<Self, CheckpointError> {
        let stem = stem.with_extension("");
        let meta = Self::load_meta(&stem)?;
        let path = Self::weights_path(&stem);
        let mut r = BufReader::new(File::open(&path).map_err(io_err(&path))?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err(&path))?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(path.display().to_string()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io_err(&path))?;
        if version != VERSION {
            return Err(CheckpointError::Version {
                path: path.display().to_string(),
                version,
            });
        }
        let count = r.read_u32::<LittleEndian>().map_err(io_err(&path))?;
        let mut params = Vec::new();
        let mut velocity = Vec::new();
        for _ in 0..count {
            let (name, shape, value) = read_tensor(&mut r).map_err(io_err(&path))?;
            if name.starts_with(VELOCITY_PREFIX) {
                velocity.push(value);
            } else {
                let mut p = Param {
                    name,
                    shape,
                    value,
                    grad: Vec::new(),
                };
                p.ensure_grad();
                params.push(p);
            }
        }
        Ok(Self {
            meta,
            params,
            velocity,
        })
    }

    /// Copies the stored weights into `model`, checking names and shapes.
    pub fn restore_into<M: Module + ?Sized>(&self, model: &mut M) -> Result<(), CheckpointError> {
        let mut targets = model.params_mut();
        if targets.len() != self.params.len() {
            return Err(CheckpointError::ParamCount {
                expected: targets.len(),
                found: self.params.len(),
            });
        }
        for (index, (dst, src)) in targets.iter_mut().zip(&self.params).enumerate() {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(CheckpointError::ParamMismatch {
                    index,
                    expected: dst.name.clone(),
                    expected_shape: dst.shape.clone(),
                    found: src.name.clone(),
                    found_shape: src.shape.clone(),
                });
            }
            dst.value.copy_from_slice(&src.value);
            dst.zero_grad();
        }
        Ok(())
    }

    /// Rejects checkpoints trained against a differently indexed hierarchy.
    pub fn check_hierarchy(&self, current: &str) -> Result<(), CheckpointError> {
        match &self.meta.hierarchy_hash {
            Some(h) if h != current => Err(CheckpointError::HierarchyMismatch {
                checkpoint: h.clone(),
                current: current.to_string(),
            }),
            _ => Ok(()),
        }
    }
}
