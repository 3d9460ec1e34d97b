//! Dataset schema: items, rooms with ground-truth membership, and the
//! vectors attached to them.
//!
//! A corpus lives in a directory holding `corpus.json`. Vectors are stored in
//! separate vector-block files (see [`crate::vector`]) referenced by path and
//! row; detections are stored as per-room text files (see [`crate::detect`]).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::{self, Detection};
use crate::error::{Error, Result};
use crate::vector::{FeatureVector, VectorBlock};

pub const CORPUS_FILE: &str = "corpus.json";

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self> {
                let id = id.into();
                if id.is_empty() {
                    return Err(Error::InvalidConfig(concat!(stringify!($name), " must be non-empty").into()));
                }
                Ok($name(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            /// Panics on an empty string; use [`Self::new`] for untrusted input.
            fn from(s: &str) -> Self {
                Self::new(s).expect("non-empty id")
            }
        }
    };
}

string_id!(ItemId);
string_id!(RoomId);

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub class_label: String,
    pub name: String,
    pub description: Vec<String>,
    pub image_ref: Option<String>,
    pub visual_feature: Option<FeatureVector>,
    pub style_embedding: Option<FeatureVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub id: RoomId,
    pub category: String,
    pub description: Vec<String>,
    pub image_ref: Option<String>,
    pub ground_truth: BTreeSet<ItemId>,
    /// Raw detector output, in source-row order.
    pub detections: Option<Vec<Detection>>,
    /// One feature per detection row, same order as `detections`.
    pub roi_features: Option<Vec<FeatureVector>>,
    /// Feature of the whole room image.
    pub image_feature: Option<FeatureVector>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub items: BTreeMap<ItemId, Item>,
    pub rooms: BTreeMap<RoomId, Room>,
    pub meta: BTreeMap<String, String>,
}

impl Corpus {
    pub fn item(&self, id: &ItemId) -> Result<&Item> {
        self.items
            .get(id)
            .ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    pub fn room(&self, id: &RoomId) -> Result<&Room> {
        self.rooms
            .get(id)
            .ok_or_else(|| Error::UnknownRoom(id.to_string()))
    }

    /// Checks referential integrity and vector dimensions.
    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::EmptyInput("corpus has no items"));
        }
        for room in self.rooms.values() {
            if let Some(missing) = room.ground_truth.iter().find(|i| !self.items.contains_key(*i)) {
                return Err(Error::DanglingReference {
                    room: room.id.to_string(),
                    item: missing.to_string(),
                });
            }
            if let (Some(d), Some(f)) = (&room.detections, &room.roi_features) {
                if d.len() != f.len() {
                    return Err(Error::DimensionMismatch {
                        id: format!("{} roi features", room.id),
                        expected: d.len(),
                        found: f.len(),
                    });
                }
            }
        }
        let mut visual_dim = None;
        let mut style_dim = None;
        for item in self.items.values() {
            if item.class_label.is_empty() {
                return Err(Error::InvalidConfig(format!("item {} has an empty class", item.id)));
            }
            check_dim(&mut visual_dim, item.visual_feature.as_ref(), item.id.as_str())?;
            check_dim(&mut style_dim, item.style_embedding.as_ref(), item.id.as_str())?;
        }
        for room in self.rooms.values() {
            check_dim(&mut visual_dim, room.image_feature.as_ref(), room.id.as_str())?;
            for f in room.roi_features.iter().flatten() {
                check_dim(&mut visual_dim, Some(f), room.id.as_str())?;
            }
        }
        Ok(())
    }

    pub fn visual_dim(&self) -> Option<usize> {
        self.items
            .values()
            .find_map(|i| i.visual_feature.as_ref().map(FeatureVector::dim))
    }

    /// Ground truth per room, as used by the evaluation metrics.
    pub fn ground_truth(&self) -> BTreeMap<RoomId, BTreeSet<ItemId>> {
        self.rooms
            .values()
            .map(|r| (r.id.clone(), r.ground_truth.clone()))
            .collect()
    }

    pub fn class_of(&self, id: &ItemId) -> Option<&str> {
        self.items.get(id).map(|i| i.class_label.as_str())
    }
}

fn check_dim(seen: &mut Option<usize>, v: Option<&FeatureVector>, id: &str) -> Result<()> {
    if let Some(v) = v {
        match *seen {
            None => *seen = Some(v.dim()),
            Some(d) if d != v.dim() => {
                return Err(Error::DimensionMismatch {
                    id: id.to_string(),
                    expected: d,
                    found: v.dim(),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// corpus.json

#[derive(Debug, Serialize, Deserialize)]
struct CorpusFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
    items: Vec<ItemRecord>,
    #[serde(default)]
    rooms: Vec<RoomRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRecord {
    id: String,
    class: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_file: Option<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    feature_row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding_file: Option<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    embedding_row: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RoomRecord {
    id: String,
    #[serde(default)]
    category: String,
    #[serde(default)]
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    items: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detections_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roi_feature_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_file: Option<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    feature_row: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

/// Caches vector-block files so that shared files are read once.
struct BlockCache<'a> {
    root: &'a Path,
    blocks: HashMap<PathBuf, VectorBlock>,
}

impl<'a> BlockCache<'a> {
    fn row(&mut self, file: &str, row: usize, owner: &str, declared: Option<usize>) -> Result<FeatureVector> {
        let path = self.root.join(file);
        if !self.blocks.contains_key(&path) {
            let block = VectorBlock::load(&path)?;
            self.blocks.insert(path.clone(), block);
        }
        let block = &self.blocks[&path];
        if let Some(d) = declared {
            if block.dim != d {
                return Err(Error::DimensionMismatch {
                    id: owner.to_string(),
                    expected: d,
                    found: block.dim,
                });
            }
        }
        let values = block.rows.get(row).ok_or_else(|| {
            Error::malformed(&path, owner, format!("row {row} out of range ({} rows)", block.len()))
        })?;
        FeatureVector::new(values.clone())
    }

    fn all(&mut self, file: &str, owner: &str, declared: Option<usize>) -> Result<Vec<FeatureVector>> {
        let path = self.root.join(file);
        let block = VectorBlock::load(&path)?;
        if let Some(d) = declared {
            if block.dim != d && !block.is_empty() {
                return Err(Error::DimensionMismatch {
                    id: owner.to_string(),
                    expected: d,
                    found: block.dim,
                });
            }
        }
        block.rows.into_iter().map(FeatureVector::new).collect()
    }
}

/// Loads and validates the corpus stored under `root`.
pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let path = root.join(CORPUS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: CorpusFile = serde_json::from_str(&text)
        .map_err(|e| Error::malformed(&path, format!("line {}", e.line()), e.to_string()))?;

    let mut cache = BlockCache {
        root,
        blocks: HashMap::new(),
    };
    let mut corpus = Corpus {
        meta: file.meta,
        ..Default::default()
    };
    for rec in file.items {
        let id = ItemId::new(rec.id.clone()).map_err(|_| Error::malformed(&path, "item", "empty id"))?;
        if rec.class.is_empty() {
            return Err(Error::malformed(&path, &id, "empty class"));
        }
        let visual_feature = rec
            .feature_file
            .as_deref()
            .map(|f| cache.row(f, rec.feature_row, id.as_str(), file.feature_dim))
            .transpose()?;
        let style_embedding = rec
            .embedding_file
            .as_deref()
            .map(|f| cache.row(f, rec.embedding_row, id.as_str(), file.embedding_dim))
            .transpose()?;
        let item = Item {
            id: id.clone(),
            class_label: rec.class,
            name: rec.name,
            description: tokenize(&rec.description),
            image_ref: rec.image,
            visual_feature,
            style_embedding,
        };
        if corpus.items.insert(id.clone(), item).is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    for rec in file.rooms {
        let id = RoomId::new(rec.id.clone()).map_err(|_| Error::malformed(&path, "room", "empty id"))?;
        let mut ground_truth = BTreeSet::new();
        for i in rec.items {
            let item = ItemId::new(i).map_err(|_| Error::malformed(&path, &id, "empty item id"))?;
            if !corpus.items.contains_key(&item) {
                return Err(Error::DanglingReference {
                    room: id.to_string(),
                    item: item.to_string(),
                });
            }
            ground_truth.insert(item);
        }
        let detections = rec
            .detections_file
            .as_deref()
            .map(|f| detect::load_detections(&root.join(f)))
            .transpose()?;
        let roi_features = rec
            .roi_feature_file
            .as_deref()
            .map(|f| cache.all(f, id.as_str(), file.feature_dim))
            .transpose()?;
        let image_feature = rec
            .feature_file
            .as_deref()
            .map(|f| cache.row(f, rec.feature_row, id.as_str(), file.feature_dim))
            .transpose()?;
        let room = Room {
            id: id.clone(),
            category: rec.category,
            description: tokenize(&rec.description),
            image_ref: rec.image,
            ground_truth,
            detections,
            roi_features,
            image_feature,
        };
        if corpus.rooms.insert(id.clone(), room).is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    corpus.validate()?;
    Ok(corpus)
}

fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `corpus` under `root` so that [`load_corpus`] reproduces it.
///
/// Item vectors go to `features/items.bin` and `features/embeddings.bin`,
/// whole-room features to `features/rooms.bin`, detections and ROI features to
/// `detections/<room>.txt` and `roi/<room>.bin`.
pub fn save_corpus(corpus: &Corpus, root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let mut item_rows = Vec::new();
    let mut emb_rows = Vec::new();
    let mut items = Vec::new();
    for item in corpus.items.values() {
        let mut rec = ItemRecord {
            id: item.id.to_string(),
            class: item.class_label.clone(),
            name: item.name.clone(),
            description: item.description.join(" "),
            image: item.image_ref.clone(),
            feature_file: None,
            feature_row: 0,
            embedding_file: None,
            embedding_row: 0,
        };
        if let Some(f) = &item.visual_feature {
            rec.feature_file = Some("features/items.bin".into());
            rec.feature_row = item_rows.len();
            item_rows.push(f.as_slice().to_vec());
        }
        if let Some(f) = &item.style_embedding {
            rec.embedding_file = Some("features/embeddings.bin".into());
            rec.embedding_row = emb_rows.len();
            emb_rows.push(f.as_slice().to_vec());
        }
        items.push(rec);
    }

    let mut room_rows = Vec::new();
    let mut rooms = Vec::new();
    let mut used_stems = BTreeSet::new();
    for (n, room) in corpus.rooms.values().enumerate() {
        let mut stem = file_stem_for(room.id.as_str());
        if !used_stems.insert(stem.clone()) {
            stem = format!("{stem}_{n}");
            used_stems.insert(stem.clone());
        }
        let mut rec = RoomRecord {
            id: room.id.to_string(),
            category: room.category.clone(),
            description: room.description.join(" "),
            image: room.image_ref.clone(),
            items: room.ground_truth.iter().map(ToString::to_string).collect(),
            detections_file: None,
            roi_feature_file: None,
            feature_file: None,
            feature_row: 0,
        };
        if let Some(dets) = &room.detections {
            let rel = format!("detections/{stem}.txt");
            let path = root.join(&rel);
            fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
            fs::write(&path, detect::format_detections(dets)).map_err(|e| Error::io(&path, e))?;
            rec.detections_file = Some(rel);
        }
        if let Some(rois) = &room.roi_features {
            let rel = format!("roi/{stem}.bin");
            let dim = rois.first().map_or(0, FeatureVector::dim);
            VectorBlock::new(dim, rois.iter().map(|v| v.as_slice().to_vec()).collect())?
                .save(&root.join(&rel))?;
            rec.roi_feature_file = Some(rel);
        }
        if let Some(f) = &room.image_feature {
            rec.feature_file = Some("features/rooms.bin".into());
            rec.feature_row = room_rows.len();
            room_rows.push(f.as_slice().to_vec());
        }
        rooms.push(rec);
    }

    let feature_dim = corpus.visual_dim();
    for (name, rows) in [("items", &item_rows), ("embeddings", &emb_rows), ("rooms", &room_rows)] {
        if !rows.is_empty() {
            let dim = rows[0].len();
            VectorBlock::new(dim, rows.clone())?.save(&root.join(format!("features/{name}.bin")))?;
        }
    }
    let file = CorpusFile {
        feature_dim,
        embedding_dim: emb_rows.first().map(Vec::len),
        meta: corpus.meta.clone(),
        items,
        rooms,
    };
    let path = root.join(CORPUS_FILE);
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

// ---------------------------------------------------------------------------
// co-occurrence

/// Symmetric room co-occurrence counts over the item set.
///
/// `C(a, b)` is the number of rooms whose ground truth holds both `a` and `b`;
/// the diagonal holds each item's room frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    ids: Vec<ItemId>,
    index: HashMap<ItemId, usize>,
    counts: Vec<u32>,
    room_count: usize,
    max_off_diagonal: u32,
}

impl CooccurrenceMatrix {
    pub fn items(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn room_count(&self) -> usize {
        self.room_count
    }

    pub fn index_of(&self, id: &ItemId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn count_at(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.ids.len() + j]
    }

    pub fn get(&self, a: &ItemId, b: &ItemId) -> Result<u32> {
        let i = self.index_of(a).ok_or_else(|| Error::UnknownItem(a.to_string()))?;
        let j = self.index_of(b).ok_or_else(|| Error::UnknownItem(b.to_string()))?;
        Ok(self.count_at(i, j))
    }

    /// Largest count over distinct pairs; the normalizer of style similarity.
    pub fn max_off_diagonal(&self) -> u32 {
        self.max_off_diagonal
    }
}

pub fn build_cooccurrence(corpus: &Corpus) -> CooccurrenceMatrix {
    let ids: Vec<ItemId> = corpus.items.keys().cloned().collect();
    let index: HashMap<ItemId, usize> = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
    let n = ids.len();
    let mut counts = vec![0u32; n * n];
    for room in corpus.rooms.values() {
        let members: Vec<usize> = room
            .ground_truth
            .iter()
            .filter_map(|id| index.get(id).copied())
            .collect();
        for (pos, &a) in members.iter().enumerate() {
            counts[a * n + a] += 1;
            for &b in &members[pos + 1..] {
                counts[a * n + b] += 1;
                counts[b * n + a] += 1;
            }
        }
    }
    let mut max_off_diagonal = 0;
    for a in 0..n {
        for b in a + 1..n {
            max_off_diagonal = max_off_diagonal.max(counts[a * n + b]);
        }
    }
    CooccurrenceMatrix {
        ids,
        index,
        counts,
        room_count: corpus.rooms.len(),
        max_off_diagonal,
    }
}
