use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::DataError;
use crate::rng::{rng_for, tag};

/// Class-balanced epoch by replication.
///
/// Every class in `subset` contributes exactly `max_count` entries: its
/// records, shuffled, are cycled (i.e. repeated ⌈max/count⌉ times) and cut
/// at `max_count`. The concatenation is then shuffled. Returns record
/// indices drawn from `subset`.
pub fn oversample_epoch(labels: &[usize], subset: &[usize], seed: u64) -> Result<Vec<usize>, DataError> {
    if subset.is_empty() {
        return Err(DataError::EmptySubset);
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in subset {
        by_class.entry(labels[i]).or_default().push(i);
    }
    let max = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut epoch = Vec::with_capacity(max * by_class.len());
    for (&class, members) in &mut by_class {
        members.shuffle(&mut rng_for(seed, &[tag::OVERSAMPLE, class as u64]));
        epoch.extend(members.iter().cycle().take(max));
    }
    epoch.shuffle(&mut rng_for(seed, &[tag::EPOCH]));
    Ok(epoch)
}

/// Plain seeded permutation of `subset`.
pub fn shuffle_epoch(subset: &[usize], seed: u64) -> Result<Vec<usize>, DataError> {
    if subset.is_empty() {
        return Err(DataError::EmptySubset);
    }
    let mut epoch = subset.to_vec();
    epoch.shuffle(&mut rng_for(seed, &[tag::EPOCH]));
    Ok(epoch)
}
