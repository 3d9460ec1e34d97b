//! Exact nearest-neighbour search over L2-normalized vectors.
//!
//! Ranking is exhaustive. Equal scores are ordered by ascending item id, so a
//! result never depends on insertion order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ItemId};
use crate::error::{Error, Result};
use crate::vector::{self, read_str, read_u32, write_str, FeatureVector, VectorBlock};

const MAGIC: &[u8; 4] = b"SSIX";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    Text,
    Blended,
}

/// How the scores of a [`RankedList`] relate to its order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOrder {
    /// Scores are distances, smallest first.
    AscendingDistance,
    /// Scores are similarities, largest first.
    DescendingSimilarity,
    /// Position is the rank; scores come from the contributing modality.
    Interleaved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub item: ItemId,
    pub score: f64,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub order: ScoreOrder,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn empty(order: ScoreOrder) -> Self {
        RankedList {
            order,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ItemId> {
        self.entries.iter().map(|e| &e.item)
    }

    /// 1-based rank of `item`, if present.
    pub fn rank_of(&self, item: &ItemId) -> Option<usize> {
        self.entries.iter().position(|e| &e.item == item).map(|p| p + 1)
    }

    pub fn top(&self, k: usize) -> RankedList {
        RankedList {
            order: self.order,
            entries: self.entries.iter().take(k).cloned().collect(),
        }
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        for e in &mut self.entries {
            e.modality = modality;
        }
        self
    }
}

/// Heap entry ordered so that the worst candidate sits on top.
struct Candidate<'a> {
    key: f64,
    id: &'a ItemId,
    idx: usize,
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then_with(|| self.id.cmp(other.id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<ItemId>,
    data: Vec<f32>,
    lookup: HashMap<ItemId, usize>,
    partitions: Option<BTreeMap<String, Vec<usize>>>,
}

impl VectorIndex {
    /// Builds an unpartitioned index; every vector is normalized on insert.
    pub fn build(entries: Vec<(ItemId, FeatureVector)>) -> Result<Self> {
        let dim = entries.first().map(|(_, v)| v.dim()).ok_or(Error::EmptyInput("index entries"))?;
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        let mut lookup = HashMap::with_capacity(entries.len());
        for (id, v) in entries {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    id: id.to_string(),
                    expected: dim,
                    found: v.dim(),
                });
            }
            if lookup.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
            data.extend_from_slice(v.normalized()?.as_slice());
            ids.push(id);
        }
        Ok(VectorIndex {
            dim,
            ids,
            data,
            lookup,
            partitions: None,
        })
    }

    /// Builds an index with one partition per item class, taken from `corpus`.
    pub fn build_partitioned(entries: Vec<(ItemId, FeatureVector)>, corpus: &Corpus) -> Result<Self> {
        let mut index = Self::build(entries)?;
        let mut partitions: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, id) in index.ids.iter().enumerate() {
            let class = corpus.class_of(id).ok_or_else(|| Error::UnknownItem(id.to_string()))?;
            partitions.entry(class.to_string()).or_default().push(i);
        }
        index.partitions = Some(partitions);
        Ok(index)
    }

    /// Index over the visual features of every item that has one.
    pub fn from_visual_features(corpus: &Corpus, per_class: bool) -> Result<Self> {
        let entries: Vec<_> = corpus
            .items
            .values()
            .filter_map(|i| i.visual_feature.clone().map(|f| (i.id.clone(), f)))
            .collect();
        if per_class {
            Self::build_partitioned(entries, corpus)
        } else {
            Self::build(entries)
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn is_partitioned(&self) -> bool {
        self.partitions.is_some()
    }

    pub fn partition_len(&self, class: &str) -> Option<usize> {
        self.partitions.as_ref()?.get(class).map(Vec::len)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.partitions.iter().flat_map(|p| p.keys().map(String::as_str))
    }

    /// Stored (normalized) vector of `id`.
    pub fn vector(&self, id: &ItemId) -> Option<&[f32]> {
        self.lookup.get(id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn prepare_query(&self, query: &FeatureVector) -> Result<FeatureVector> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                id: "query".into(),
                expected: self.dim,
                found: query.dim(),
            });
        }
        query.normalized()
    }

    fn candidates(&self, class_filter: Option<&str>) -> Result<Option<&[usize]>> {
        match class_filter {
            None => Ok(None),
            Some(class) => self
                .partitions
                .as_ref()
                .and_then(|p| p.get(class))
                .map(|v| Some(v.as_slice()))
                .ok_or_else(|| Error::UnknownClass(class.to_string())),
        }
    }

    /// Keeps the `k` smallest keys with a bounded max-heap.
    fn select<F: Fn(usize) -> f64>(&self, subset: Option<&[usize]>, k: usize, key: F) -> Vec<(usize, f64)> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut push = |idx: usize| {
            let cand = Candidate {
                key: key(idx),
                id: &self.ids[idx],
                idx,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        };
        match subset {
            Some(s) => s.iter().copied().for_each(&mut push),
            None => (0..self.ids.len()).for_each(&mut push),
        }
        heap.into_sorted_vec().into_iter().map(|c| (c.idx, c.key)).collect()
    }

    /// The `k` entries closest to `query` by Euclidean distance between
    /// normalized vectors, optionally restricted to one class partition.
    pub fn knn(&self, query: &FeatureVector, k: usize, class_filter: Option<&str>) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let q = self.prepare_query(query)?;
        let subset = self.candidates(class_filter)?;
        let q = q.as_slice();
        let hits = self.select(subset, k, |i| vector::euclidean(q, self.row(i)));
        Ok(self.to_list(hits, ScoreOrder::AscendingDistance, Modality::Visual, 1.0))
    }

    /// Like [`Self::knn`], but an unknown class falls back to the full index.
    /// Returns whether the fallback was taken.
    pub fn knn_with_fallback(
        &self,
        query: &FeatureVector,
        k: usize,
        class: Option<&str>,
    ) -> Result<(RankedList, bool)> {
        match class {
            Some(c) if self.partition_len(c).is_none() => {
                log::warn!("class {c:?} has no index partition; searching the full index");
                Ok((self.knn(query, k, None)?, true))
            }
            _ => Ok((self.knn(query, k, class)?, false)),
        }
    }

    /// The `k` entries with the highest cosine similarity to `query`.
    pub fn top_cosine(&self, query: &FeatureVector, k: usize, class_filter: Option<&str>) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let q = self.prepare_query(query)?;
        let subset = self.candidates(class_filter)?;
        let q = q.as_slice();
        // negate so that the min-selection picks the most similar entries
        let hits = self.select(subset, k, |i| -vector::dot(q, self.row(i)));
        Ok(self.to_list(hits, ScoreOrder::DescendingSimilarity, Modality::Text, -1.0))
    }

    fn to_list(&self, hits: Vec<(usize, f64)>, order: ScoreOrder, modality: Modality, sign: f64) -> RankedList {
        RankedList {
            order,
            entries: hits
                .into_iter()
                .map(|(i, key)| RankedEntry {
                    item: self.ids[i].clone(),
                    score: sign * key,
                    modality,
                })
                .collect(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        for id in &self.ids {
            write_str(&mut w, id.as_str())?;
        }
        let rows = self.data.chunks(self.dim).map(<[f32]>::to_vec).collect();
        VectorBlock { dim: self.dim, rows }.write_binary(&mut w)?;
        match &self.partitions {
            None => w.write_all(&0u32.to_le_bytes())?,
            Some(p) => {
                w.write_all(&(p.len() as u32).to_le_bytes())?;
                for (class, members) in p {
                    write_str(&mut w, class)?;
                    w.write_all(&(members.len() as u32).to_le_bytes())?;
                    for m in members {
                        w.write_all(&(*m as u32).to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> std::io::Result<Self> {
        let invalid = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(invalid("bad magic"));
        }
        if read_u32(&mut r)? != VERSION {
            return Err(invalid("unsupported version"));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u32(&mut r)? as usize;
        let ids = (0..count)
            .map(|_| read_str(&mut r).map(ItemId::new))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .map_err(|e| invalid(&e.to_string()))?;
        let block = VectorBlock::read_binary(&mut r)?;
        if block.dim != dim || block.len() != count {
            return Err(invalid("vector block does not match header"));
        }
        let nparts = read_u32(&mut r)? as usize;
        let partitions = if nparts == 0 {
            None
        } else {
            let mut p = BTreeMap::new();
            for _ in 0..nparts {
                let class = read_str(&mut r)?;
                let n = read_u32(&mut r)? as usize;
                let members = (0..n)
                    .map(|_| read_u32(&mut r).map(|v| v as usize))
                    .collect::<std::io::Result<Vec<_>>>()?;
                if members.iter().any(|&m| m >= count) {
                    return Err(invalid("partition member out of range"));
                }
                p.insert(class, members);
            }
            Some(p)
        };
        let lookup: HashMap<ItemId, usize> = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        if lookup.len() != ids.len() {
            return Err(invalid("duplicate id"));
        }
        let data = block.rows.into_iter().flatten().collect();
        Ok(VectorIndex {
            dim,
            ids,
            data,
            lookup,
            partitions,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read(&bytes[..]).map_err(|e| Error::malformed(path, "index", e.to_string()))
    }
}

/// Checks the no-duplicate invariant of a list.
pub fn has_unique_items(list: &RankedList) -> bool {
    let mut seen = HashSet::new();
    list.entries.iter().all(|e| seen.insert(&e.item))
}
