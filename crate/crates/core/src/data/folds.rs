use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::rng::{rng_for, tag};

/// Assignment of every record to one of `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub assignment: Vec<usize>,
}

/// Record indices for one cross-validation round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_members(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Train on every fold except `fold`, validate on `fold`.
    pub fn split(&self, fold: usize) -> FoldSplit {
        let (val, train) = (0..self.assignment.len()).partition(|&i| self.assignment[i] == fold);
        FoldSplit { fold, train, val }
    }
}

fn check(n: usize, k: usize) -> Result<(), DataError> {
    if k < 2 {
        return Err(DataError::FoldCount(k));
    }
    if n < k {
        return Err(DataError::TooFewRecords { n, k });
    }
    Ok(())
}

/// Stratified k-fold split: each class is shuffled and dealt round-robin,
/// continuing from where the previous class stopped so fold sizes stay
/// balanced. Per-class counts across folds differ by at most one.
pub fn build_folds(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    check(labels.len(), k)?;
    let n_class = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class = vec![Vec::new(); n_class];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut assignment = vec![0; labels.len()];
    let sparse: Vec<usize> = (0..n_class)
        .filter(|&c| !by_class[c].is_empty() && by_class[c].len() < k)
        .collect();
    if !sparse.is_empty() {
        log::warn!(
            "{} classes have fewer than {k} records (classes {sparse:?}); some folds will lack them",
            sparse.len()
        );
    }
    let mut next = 0;
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng_for(seed, &[tag::FOLDS, c as u64]));
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = (next + j) % k;
        }
        next = (next + members.len()) % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        stratified: true,
        assignment,
    })
}

/// Unstratified split of `n` records.
pub fn build_plain_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    check(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[tag::FOLDS]));
    let mut assignment = vec![0; n];
    for (j, &i) in order.iter().enumerate() {
        assignment[i] = j % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        stratified: false,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_counts(plan: &FoldPlan, labels: &[usize], fold: usize) -> Vec<usize> {
        let n_class = labels.iter().max().unwrap() + 1;
        let mut c = vec![0; n_class];
        for i in plan.fold_members(fold) {
            c[labels[i]] += 1;
        }
        c
    }

    #[test]
    fn perfectly_divisible_case() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let plan = build_folds(&labels, 5, 3).unwrap();
        for f in 0..5 {
            assert_eq!(class_counts(&plan, &labels, f), vec![1, 1]);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let labels: Vec<usize> = (0..100).map(|i| i % 7).collect();
        assert_eq!(build_folds(&labels, 5, 1).unwrap(), build_folds(&labels, 5, 1).unwrap());
        assert_ne!(
            build_folds(&labels, 5, 1).unwrap().assignment,
            build_folds(&labels, 5, 2).unwrap().assignment
        );
    }

    #[test]
    fn split_partitions_records() {
        let labels: Vec<usize> = (0..37).map(|i| (i * 7) % 5).collect();
        let plan = build_folds(&labels, 5, 9).unwrap();
        let mut seen = vec![0; labels.len()];
        for f in 0..5 {
            let s = plan.split(f);
            assert_eq!(s.train.len() + s.val.len(), labels.len());
            for &i in &s.val {
                seen[i] += 1;
                assert!(!s.train.contains(&i));
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn small_classes_and_bad_k() {
        let labels = [0, 0, 0, 0, 0, 0, 1];
        let plan = build_folds(&labels, 5, 0).unwrap();
        assert_eq!(plan.assignment.len(), 7);
        assert!(matches!(build_folds(&labels, 1, 0), Err(DataError::FoldCount(1))));
        assert!(matches!(build_folds(&[0, 1], 3, 0), Err(DataError::TooFewRecords { .. })));
        let plain = build_plain_folds(11, 3, 4).unwrap();
        let sizes: Vec<usize> = (0..3).map(|f| plain.fold_members(f).len()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }
}
