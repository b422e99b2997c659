//! CSV manifests.
//!
//! Classification: header `path,finding`. Segmentation: header
//! `image_path,mask_path`. Relative paths inside a manifest are resolved
//! against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::hierarchy::LabelHierarchy;

/// Environment variable that roots relative manifest paths given on the
/// command line.
pub const DATA_DIR_ENV: &str = "HIERGI_DATA_DIR";

/// Resolves a user-supplied path against `$HIERGI_DATA_DIR` when it is
/// relative and the variable is set.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassRecord {
    pub path: PathBuf,
    pub finding: usize,
}

/// Classification records with finding indices into a hierarchy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleManifest {
    pub records: Vec<ClassRecord>,
    pub hierarchy_hash: String,
}

impl SampleManifest {
    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.finding).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPair {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
}

#[derive(Deserialize, Serialize)]
struct ClassRow {
    path: String,
    finding: String,
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_classification_manifest(
    path: &Path,
    hierarchy: &LabelHierarchy,
) -> Result<SampleManifest, DataError> {
    let base = base_dir(path);
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<ClassRow>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let line = i + 2;
        let finding = hierarchy
            .finding_index(row.finding.trim())
            .map_err(|_| DataError::UnknownFinding {
                manifest: path.display().to_string(),
                line,
                finding: row.finding.clone(),
            })?;
        if !seen.insert(row.path.clone()) {
            return Err(DataError::DuplicatePath {
                manifest: path.display().to_string(),
                line,
                path: row.path,
            });
        }
        records.push(ClassRecord {
            path: base.join(&row.path),
            finding,
        });
    }
    if records.is_empty() {
        return Err(DataError::EmptyManifest(path.display().to_string()));
    }
    Ok(SampleManifest {
        records,
        hierarchy_hash: hierarchy.hash(),
    })
}

pub fn load_segmentation_manifest(path: &Path) -> Result<Vec<MaskPair>, DataError> {
    let base = base_dir(path);
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (i, row) in reader.deserialize::<MaskPair>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        if !seen.insert(row.image_path.clone()) {
            return Err(DataError::DuplicatePath {
                manifest: path.display().to_string(),
                line: i + 2,
                path: row.image_path.display().to_string(),
            });
        }
        pairs.push(MaskPair {
            image_path: base.join(row.image_path),
            mask_path: base.join(row.mask_path),
        });
    }
    if pairs.is_empty() {
        return Err(DataError::EmptyManifest(path.display().to_string()));
    }
    Ok(pairs)
}

/// Writes `path,finding` rows; paths are written as given.
pub fn write_classification_manifest(
    path: &Path,
    rows: &[(String, String)],
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (p, f) in rows {
        w.serialize(ClassRow {
            path: p.clone(),
            finding: f.clone(),
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_segmentation_manifest(path: &Path, rows: &[MaskPair]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_manifest_validation() {
        let dir = tempfile::tempdir().unwrap();
        let h = LabelHierarchy::default_taxonomy();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,finding\na.png,polyps\nb.png,cecum\n").unwrap();
        let m = load_classification_manifest(&p, &h).unwrap();
        assert_eq!(m.labels(), vec![4, 0]);
        assert_eq!(m.records[0].path, dir.path().join("a.png"));

        std::fs::write(&p, "path,finding\na.png,polyps\nb.png,tumour\n").unwrap();
        let e = load_classification_manifest(&p, &h).unwrap_err();
        assert!(e.to_string().contains(":3:") && e.to_string().contains("tumour"), "{e}");

        std::fs::write(&p, "path,finding\na.png,polyps\na.png,cecum\n").unwrap();
        assert!(matches!(
            load_classification_manifest(&p, &h),
            Err(DataError::DuplicatePath { line: 3, .. })
        ));

        std::fs::write(&p, "path,finding\n").unwrap();
        assert!(matches!(
            load_classification_manifest(&p, &h),
            Err(DataError::EmptyManifest(_))
        ));
    }

    #[test]
    fn segmentation_manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("seg.csv");
        let rows = vec![MaskPair {
            image_path: "images/a.png".into(),
            mask_path: "masks/a.png".into(),
        }];
        write_segmentation_manifest(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("image_path,mask_path\n"));
        let back = load_segmentation_manifest(&p).unwrap();
        assert_eq!(back[0].mask_path, dir.path().join("masks/a.png"));
    }
}
