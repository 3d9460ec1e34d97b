//! Retrieval metrics: Hit@k, recall curves and co-occurrence style similarity.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{CooccurrenceMatrix, ItemId, RoomId};
use crate::error::{Error, Result};
use crate::vecindex::RankedList;

pub type GroundTruth = BTreeMap<RoomId, BTreeSet<ItemId>>;

/// Rank (1-based) of the best-placed ground-truth item in `list`.
fn first_hit(list: &RankedList, gt: &BTreeSet<ItemId>) -> Option<usize> {
    list.entries.iter().position(|e| gt.contains(&e.item)).map(|p| p + 1)
}

fn first_hits(results: &BTreeMap<RoomId, RankedList>, ground_truth: &GroundTruth) -> Result<Vec<Option<usize>>> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no rooms to evaluate"));
    }
    results
        .iter()
        .map(|(room, list)| {
            let gt = ground_truth
                .get(room)
                .ok_or_else(|| Error::MissingGroundTruth(room.to_string()))?;
            if gt.is_empty() {
                return Err(Error::EmptyGroundTruth(room.to_string()));
            }
            Ok(first_hit(list, gt))
        })
        .collect()
}

/// Fraction of rooms with at least one ground-truth item ranked within `k`.
pub fn hit_at_k(results: &BTreeMap<RoomId, RankedList>, ground_truth: &GroundTruth, k: usize) -> Result<f64> {
    let hits = first_hits(results, ground_truth)?;
    let n = hits.iter().filter(|h| h.is_some_and(|r| r <= k)).count();
    Ok(n as f64 / hits.len() as f64)
}

/// Hit@k for every `k` in `1..=k_max`.
pub fn recall_curve(
    results: &BTreeMap<RoomId, RankedList>,
    ground_truth: &GroundTruth,
    k_max: usize,
) -> Result<Vec<(usize, f64)>> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be at least 1".into()));
    }
    let hits = first_hits(results, ground_truth)?;
    let mut counts = vec![0usize; k_max + 1];
    for r in hits.iter().flatten() {
        if *r <= k_max {
            counts[*r] += 1;
        }
    }
    let total = hits.len() as f64;
    let mut acc = 0;
    Ok((1..=k_max)
        .map(|k| {
            acc += counts[k];
            (k, acc as f64 / total)
        })
        .collect())
}

/// `C(a, b)` normalized by the largest co-occurrence count over distinct pairs.
pub fn style_similarity(c: &CooccurrenceMatrix, a: &ItemId, b: &ItemId) -> Result<f64> {
    if a == b {
        return Err(Error::SelfPair(a.to_string()));
    }
    let max = c.max_off_diagonal();
    if max == 0 {
        return Err(Error::DegenerateCooccurrence);
    }
    Ok(c.get(a, b)? as f64 / max as f64)
}

/// Mean style similarity between each query item and the items returned for
/// it. Returned items equal to their query item are skipped.
pub fn mean_similarity(queries: &[(ItemId, RankedList)], c: &CooccurrenceMatrix) -> Result<f64> {
    if c.max_off_diagonal() == 0 {
        return Err(Error::DegenerateCooccurrence);
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (query, list) in queries {
        for item in list.ids().filter(|i| *i != query) {
            sum += style_similarity(c, query, item)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput("no returned items to score"));
    }
    Ok(sum / n as f64)
}
