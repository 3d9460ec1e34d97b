//! Merging visual and text result lists.
//!
//! Two strategies:
//! - simple: take the best results of each modality and interleave them;
//! - feature similarity: re-score the text candidates by their visual distance
//!   to the query region and keep the closest items overall.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::ItemId;
use crate::error::{Error, Result};
use crate::vecindex::{Modality, RankedEntry, RankedList, ScoreOrder};
use crate::vector::{self, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlendStrategy {
    Simple,
    #[default]
    FeatureSimilarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendRequest<'a> {
    /// Ascending visual distances.
    pub visual: &'a RankedList,
    pub text: &'a RankedList,
    /// Feature of the query region. Required by feature-similarity blending.
    pub query_feature: Option<&'a FeatureVector>,
    pub k: usize,
}

/// Interleaves the top `ceil(k/2)` visual results with the best `floor(k/2)`
/// text results not already taken, visual first. Short modalities are
/// back-filled from the remainder of either list (visual first).
pub fn simple_blend(req: &BlendRequest) -> Result<RankedList> {
    if req.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if req.visual.is_empty() && req.text.is_empty() {
        return Err(Error::EmptyInput("both modalities returned no results"));
    }
    let visual_quota = req.k.div_ceil(2);
    let text_quota = req.k / 2;

    let mut taken: HashSet<&ItemId> = HashSet::new();
    let mut visual_part = Vec::new();
    for e in &req.visual.entries {
        if visual_part.len() == visual_quota {
            break;
        }
        if taken.insert(&e.item) {
            visual_part.push(e);
        }
    }
    let mut text_part = Vec::new();
    for e in &req.text.entries {
        if text_part.len() == text_quota {
            break;
        }
        if taken.insert(&e.item) {
            text_part.push(e);
        }
    }

    let mut out: Vec<RankedEntry> = Vec::with_capacity(req.k);
    let mut v = visual_part.into_iter();
    let mut t = text_part.into_iter();
    loop {
        let a = v.next();
        let b = t.next();
        if a.is_none() && b.is_none() {
            break;
        }
        out.extend(a.cloned());
        out.extend(b.cloned());
    }
    for e in req.visual.entries.iter().chain(&req.text.entries) {
        if out.len() >= req.k {
            break;
        }
        if taken.insert(&e.item) {
            out.push(e.clone());
        }
    }
    out.truncate(req.k);
    Ok(RankedList {
        order: ScoreOrder::Interleaved,
        entries: out,
    })
}

/// Re-ranks the union of both candidate sets by visual distance to the query.
///
/// Visual candidates keep their distances; text candidates are scored by the
/// Euclidean distance between the normalized query feature and their own
/// normalized visual feature. An item found by both modalities keeps the
/// smaller distance and is tagged [`Modality::Blended`].
pub fn feature_blend<'f, F>(req: &BlendRequest, visual_feature: F) -> Result<RankedList>
where
    F: Fn(&ItemId) -> Option<&'f FeatureVector>,
{
    if req.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let query = req
        .query_feature
        .ok_or(Error::EmptyInput("feature blending needs a query feature"))?
        .normalized()?;

    let mut best: HashMap<ItemId, RankedEntry> = HashMap::new();
    let mut offer = |entry: RankedEntry| {
        use std::collections::hash_map::Entry;
        match best.entry(entry.item.clone()) {
            Entry::Vacant(v) => {
                v.insert(entry);
            }
            Entry::Occupied(mut o) => {
                let cur = o.get_mut();
                let both = cur.modality != entry.modality;
                if entry.score < cur.score {
                    *cur = entry;
                }
                if both {
                    cur.modality = Modality::Blended;
                }
            }
        }
    };

    for e in req.visual.entries.iter().take(req.k) {
        offer(e.clone());
    }
    for e in req.text.entries.iter().take(req.k) {
        let feature = visual_feature(&e.item).ok_or_else(|| Error::MissingFeature(e.item.to_string()))?;
        if feature.dim() != query.dim() {
            return Err(Error::DimensionMismatch {
                id: e.item.to_string(),
                expected: query.dim(),
                found: feature.dim(),
            });
        }
        let distance = vector::euclidean(query.as_slice(), feature.normalized()?.as_slice());
        offer(RankedEntry {
            item: e.item.clone(),
            score: distance,
            modality: Modality::Text,
        });
    }

    let mut entries: Vec<RankedEntry> = best.into_values().collect();
    entries.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.item.cmp(&b.item)));
    entries.truncate(req.k);
    Ok(RankedList {
        order: ScoreOrder::AscendingDistance,
        entries,
    })
}

pub fn blend<'f, F>(req: &BlendRequest, strategy: BlendStrategy, visual_feature: F) -> Result<RankedList>
where
    F: Fn(&ItemId) -> Option<&'f FeatureVector>,
{
    match strategy {
        BlendStrategy::Simple => simple_blend(req),
        BlendStrategy::FeatureSimilarity => feature_blend(req, visual_feature),
    }
}
