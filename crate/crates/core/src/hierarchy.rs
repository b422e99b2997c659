//! Three-level label taxonomy (tract → category → finding) and the
//! aggregation of finding-level probabilities onto the coarse levels.
//!
//! The taxonomy is loaded from a JSON manifest:
//!
//! ```json
//! {
//!   "tracts": ["lower-gi", "upper-gi"],
//!   "categories": ["anatomical-landmark", "..."],
//!   "findings": [{ "name": "cecum", "tract": "lower-gi", "category": "anatomical-landmark" }]
//! }
//! ```
//!
//! Order in each list defines the class index at that level.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bundled Hyper-Kvasir taxonomy (2 tracts, 4 categories, 23 findings).
pub const DEFAULT_TAXONOMY_JSON: &str = include_str!("../assets/hyper_kvasir.json");

/// Level counts of the reference taxonomy.
pub const REFERENCE_COUNTS: LevelCounts = LevelCounts {
    tracts: 2,
    categories: 4,
    findings: 23,
};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("cannot read hierarchy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed hierarchy document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate {level} name \"{name}\"")]
    DuplicateName { level: Level, name: String },
    #[error("finding \"{finding}\" has unknown {level} \"{parent}\"")]
    UnknownParent {
        finding: String,
        level: Level,
        parent: String,
    },
    #[error("{0} level is empty")]
    EmptyLevel(Level),
    #[error("{level} \"{name}\" has no findings")]
    EmptyGroup { level: Level, name: String },
    #[error("level sizes violate n_tract >= 2, n_cat >= 2, n_find >= n_cat >= n_tract (got {0})")]
    BadShape(LevelCounts),
    #[error("taxonomy has {found} but the reference structure requires {expected}")]
    CountMismatch {
        expected: LevelCounts,
        found: LevelCounts,
    },
    #[error("expected a vector of length {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("not a probability vector: {0}")]
    NotAProbability(String),
    #[error("non-finite logit at index {0}")]
    NonFinite(usize),
    #[error("unknown finding \"{0}\"")]
    UnknownFinding(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Tract,
    Category,
    Finding,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Tract => "tract",
            Level::Category => "category",
            Level::Finding => "finding",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub tracts: usize,
    pub categories: usize,
    pub findings: usize,
}

impl fmt::Display for LevelCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} tracts / {} categories / {} findings",
            self.tracts, self.categories, self.findings
        )
    }
}

/// How the category level is grouped.
///
/// `Global` uses one class per category name. `PerTract` splits each category
/// by tract, giving one class per non-empty (tract, category) cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategoryGrouping {
    #[default]
    Global,
    PerTract,
}

/// Serialized form of the taxonomy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyDocument {
    pub tracts: Vec<String>,
    pub categories: Vec<String>,
    pub findings: Vec<FindingEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingEntry {
    pub name: String,
    pub tract: String,
    pub category: String,
}

/// Membership of findings in the classes of one coarse level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregationMap {
    pub level: Level,
    pub names: Vec<String>,
    /// `membership[g]` lists the finding indices of coarse class `g`, ascending.
    pub membership: Vec<Vec<usize>>,
    /// Inverse of `membership`: coarse class of each finding.
    pub group_of: Vec<usize>,
}

impl AggregationMap {
    fn from_assignment(level: Level, names: Vec<String>, group_of: Vec<usize>) -> Self {
        let mut membership = vec![Vec::new(); names.len()];
        for (k, &g) in group_of.iter().enumerate() {
            membership[g].push(k);
        }
        Self {
            level,
            names,
            membership,
            group_of,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.membership.len()
    }

    pub fn n_findings(&self) -> usize {
        self.group_of.len()
    }

    fn check_len(&self, len: usize) -> Result<(), HierarchyError> {
        if len != self.n_findings() {
            return Err(HierarchyError::LengthMismatch {
                expected: self.n_findings(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Validated taxonomy. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelHierarchy {
    findings: Vec<String>,
    categories: Vec<String>,
    tracts: Vec<String>,
    finding_to_category: Vec<usize>,
    finding_to_tract: Vec<usize>,
    tract_map: AggregationMap,
    category_map: AggregationMap,
    cell_map: AggregationMap,
}

fn index_unique(names: &[String], level: Level) -> Result<HashMap<&str, usize>, HierarchyError> {
    if names.is_empty() {
        return Err(HierarchyError::EmptyLevel(level));
    }
    let mut index = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if index.insert(n.as_str(), i).is_some() {
            return Err(HierarchyError::DuplicateName {
                level,
                name: n.clone(),
            });
        }
    }
    Ok(index)
}

impl LabelHierarchy {
    pub fn from_document(doc: &HierarchyDocument) -> Result<Self, HierarchyError> {
        let tract_ix = index_unique(&doc.tracts, Level::Tract)?;
        let cat_ix = index_unique(&doc.categories, Level::Category)?;
        let names: Vec<String> = doc.findings.iter().map(|f| f.name.clone()).collect();
        index_unique(&names, Level::Finding)?;

        let mut finding_to_tract = Vec::with_capacity(names.len());
        let mut finding_to_category = Vec::with_capacity(names.len());
        for f in &doc.findings {
            let t = *tract_ix
                .get(f.tract.as_str())
                .ok_or_else(|| HierarchyError::UnknownParent {
                    finding: f.name.clone(),
                    level: Level::Tract,
                    parent: f.tract.clone(),
                })?;
            let c = *cat_ix
                .get(f.category.as_str())
                .ok_or_else(|| HierarchyError::UnknownParent {
                    finding: f.name.clone(),
                    level: Level::Category,
                    parent: f.category.clone(),
                })?;
            finding_to_tract.push(t);
            finding_to_category.push(c);
        }

        let counts = LevelCounts {
            tracts: doc.tracts.len(),
            categories: doc.categories.len(),
            findings: names.len(),
        };
        if counts.tracts < 2
            || counts.categories < 2
            || counts.findings < counts.categories
            || counts.categories < counts.tracts
        {
            return Err(HierarchyError::BadShape(counts));
        }

        let tract_map =
            AggregationMap::from_assignment(Level::Tract, doc.tracts.clone(), finding_to_tract.clone());
        let category_map = AggregationMap::from_assignment(
            Level::Category,
            doc.categories.clone(),
            finding_to_category.clone(),
        );
        for map in [&tract_map, &category_map] {
            if let Some(g) = map.membership.iter().position(Vec::is_empty) {
                return Err(HierarchyError::EmptyGroup {
                    level: map.level,
                    name: map.names[g].clone(),
                });
            }
        }

        // Non-empty (tract, category) cells, ordered by tract then category.
        let mut cell_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cells: Vec<(usize, usize)> = finding_to_tract
            .iter()
            .zip(&finding_to_category)
            .map(|(&t, &c)| (t, c))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        let cell_names = cells
            .iter()
            .enumerate()
            .map(|(i, &(t, c))| {
                cell_index.insert((t, c), i);
                format!("{}/{}", doc.tracts[t], doc.categories[c])
            })
            .collect();
        let cell_of = finding_to_tract
            .iter()
            .zip(&finding_to_category)
            .map(|(&t, &c)| cell_index[&(t, c)])
            .collect();
        let cell_map = AggregationMap::from_assignment(Level::Category, cell_names, cell_of);

        Ok(Self {
            findings: names,
            categories: doc.categories.clone(),
            tracts: doc.tracts.clone(),
            finding_to_category,
            finding_to_tract,
            tract_map,
            category_map,
            cell_map,
        })
    }

    /// Parses and validates a hierarchy manifest.
    pub fn from_json(text: &str) -> Result<Self, HierarchyError> {
        let doc: HierarchyDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HierarchyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HierarchyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The bundled Hyper-Kvasir taxonomy.
    pub fn default_taxonomy() -> Self {
        let h = Self::from_json(DEFAULT_TAXONOMY_JSON).expect("bundled taxonomy is valid");
        debug_assert!(h.check_reference_counts().is_ok());
        h
    }

    /// Rejects taxonomies whose level sizes differ from 2/4/23.
    pub fn check_reference_counts(&self) -> Result<(), HierarchyError> {
        if self.counts() != REFERENCE_COUNTS {
            return Err(HierarchyError::CountMismatch {
                expected: REFERENCE_COUNTS,
                found: self.counts(),
            });
        }
        Ok(())
    }

    pub fn document(&self) -> HierarchyDocument {
        HierarchyDocument {
            tracts: self.tracts.clone(),
            categories: self.categories.clone(),
            findings: (0..self.n_find())
                .map(|k| FindingEntry {
                    name: self.findings[k].clone(),
                    tract: self.tracts[self.finding_to_tract[k]].clone(),
                    category: self.categories[self.finding_to_category[k]].clone(),
                })
                .collect(),
        }
    }

    /// SHA-256 of the canonical (compact JSON) document, lowercase hex.
    /// Two hierarchies share a hash iff they index every level identically.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.document()).expect("document serializes");
        hex_digest(&bytes)
    }

    pub fn counts(&self) -> LevelCounts {
        LevelCounts {
            tracts: self.n_tract(),
            categories: self.n_cat(),
            findings: self.n_find(),
        }
    }

    pub fn n_find(&self) -> usize {
        self.findings.len()
    }
    pub fn n_cat(&self) -> usize {
        self.categories.len()
    }
    pub fn n_tract(&self) -> usize {
        self.tracts.len()
    }
    pub fn findings(&self) -> &[String] {
        &self.findings
    }
    pub fn categories(&self) -> &[String] {
        &self.categories
    }
    pub fn tracts(&self) -> &[String] {
        &self.tracts
    }
    pub fn category_of(&self, finding: usize) -> usize {
        self.finding_to_category[finding]
    }
    pub fn tract_of(&self, finding: usize) -> usize {
        self.finding_to_tract[finding]
    }

    pub fn finding_index(&self, name: &str) -> Result<usize, HierarchyError> {
        self.findings
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| HierarchyError::UnknownFinding(name.to_string()))
    }

    pub fn tract_map(&self) -> &AggregationMap {
        &self.tract_map
    }

    /// Category-level map under the given grouping.
    pub fn category_map(&self, grouping: CategoryGrouping) -> &AggregationMap {
        match grouping {
            CategoryGrouping::Global => &self.category_map,
            CategoryGrouping::PerTract => &self.cell_map,
        }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Tolerance on the total mass of an input probability vector.
pub const PROB_SUM_TOL: f64 = 1e-6;

/// Sums finding probabilities into the classes of a coarse level.
pub fn aggregate_probs(p_find: &[f64], map: &AggregationMap) -> Result<Vec<f64>, HierarchyError> {
    map.check_len(p_find.len())?;
    if let Some(i) = p_find.iter().position(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(HierarchyError::NotAProbability(format!(
            "entry {i} is {}",
            p_find[i]
        )));
    }
    let total: f64 = p_find.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(HierarchyError::NotAProbability(format!("sums to {total}")));
    }
    Ok(map
        .membership
        .iter()
        .map(|g| g.iter().map(|&k| p_find[k]).sum())
        .collect())
}

/// Numerically stable log of Σ exp(z_i) over the selected indices.
pub fn logsumexp_over(z: &[f64], idx: impl Iterator<Item = usize> + Clone) -> f64 {
    let m = idx.clone().map(|i| z[i]).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + idx.map(|i| (z[i] - m).exp()).sum::<f64>().ln()
}

pub fn logsumexp(z: &[f64]) -> f64 {
    logsumexp_over(z, 0..z.len())
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let lse = logsumexp(z);
    z.iter().map(|&v| v - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = logsumexp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

pub(crate) fn check_finite(z: &[f64]) -> Result<(), HierarchyError> {
    match z.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(HierarchyError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Coarse-level log-probabilities straight from finding logits:
/// `out[g] = LSE(z[membership[g]]) − LSE(z)`.
pub fn aggregate_logits(z_find: &[f64], map: &AggregationMap) -> Result<Vec<f64>, HierarchyError> {
    map.check_len(z_find.len())?;
    check_finite(z_find)?;
    let total = logsumexp(z_find);
    Ok(map
        .membership
        .iter()
        .map(|g| (logsumexp_over(z_find, g.iter().copied()) - total).min(0.0))
        .collect())
}
