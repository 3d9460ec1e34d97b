//! End-to-end evaluation runs.
//!
//! A run compares whole-image and per-detection visual retrieval by Hit@k
//! and recall curves, for deep features and, when descriptors exist, for the
//! bag-of-visual-words baseline. It then scores visual-only, text-only and
//! blended result lists by mean style similarity to the detected query item.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blend::{feature_blend, simple_blend, BlendRequest};
use crate::bovw::{quantize, train_codebook, BovwIndex, Codebook, DescriptorSet, KMeansConfig};
use crate::config::Config;
use crate::corpus::{build_cooccurrence, tokenize, Corpus, ItemId, Room, RoomId};
use crate::detect::{filter_detections, FilterConfig, KeptDetection};
use crate::engine::sha256_hex;
use crate::error::{Error, Result};
use crate::eval::{hit_at_k, mean_similarity, recall_curve, GroundTruth};
use crate::query_encoder::{text_search, EncoderModel, WordVectors};
use crate::style_embed::EmbeddingTable;
use crate::synth::roi_image_ref;
use crate::vecindex::{RankedList, ScoreOrder, VectorIndex};
use crate::vector::{self, FeatureVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Cut-off for Hit@k and for the lists scored by style similarity.
    pub k: usize,
    /// Longest recall curve.
    pub k_max: usize,
    /// Restrict each detection's search to its class.
    pub per_class: bool,
    /// Extra free-text queries scored against every room.
    pub text_queries: Vec<String>,
    /// Codebook size when no codebook artifact is supplied; 0 skips the
    /// bag-of-visual-words rows.
    pub bovw_words: usize,
    pub seed: u64,
    pub detect: FilterConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            k: 6,
            k_max: 20,
            per_class: true,
            text_queries: Vec::new(),
            bovw_words: 64,
            seed: 0,
            detect: FilterConfig::default(),
        }
    }
}

/// Trained models and side data used by a run. Missing parts disable the
/// rows that need them.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub table: Option<EmbeddingTable>,
    pub encoder: Option<EncoderModel>,
    pub words: Option<WordVectors>,
    pub codebook: Option<Codebook>,
    /// Directory holding `<image_ref>.desc` files.
    pub descriptor_root: Option<PathBuf>,
}

fn required(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

impl Artifacts {
    /// Loads the text-search artifacts (required) and the codebook (if
    /// present) named by `config`, with descriptors read below `root`.
    pub fn load(root: &Path, config: &Config) -> Result<Self> {
        let p = &config.paths;
        let table = EmbeddingTable::load(&required(config.resolve(root, &p.embeddings))?)?;
        let encoder = EncoderModel::load(&required(config.resolve(root, &p.encoder))?)?;
        let words = WordVectors::load(&required(config.resolve(root, &p.words))?)?;
        let codebook_path = config.resolve(root, &p.codebook);
        let codebook = if codebook_path.exists() {
            Some(Codebook::load(&codebook_path)?)
        } else {
            None
        };
        Ok(Artifacts {
            table: Some(table),
            encoder: Some(encoder),
            words: Some(words),
            codebook,
            descriptor_root: Some(root.to_path_buf()),
        })
    }

    fn digests(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut put = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| {
            let mut buf = Vec::new();
            f(&mut buf).expect("in-memory write");
            out.insert(name.to_string(), sha256_hex(&buf));
        };
        if let Some(t) = &self.table {
            put("embeddings", &|b| t.write(b));
        }
        if let Some(m) = &self.encoder {
            put("encoder", &|b| m.write(b));
        }
        if let Some(w) = &self.words {
            put("words", &|b| {
                b.extend_from_slice(w.to_text().as_bytes());
                Ok(())
            });
        }
        if let Some(c) = &self.codebook {
            put("codebook", &|b| c.write(b));
        }
        out
    }
}

/// Digest over every field that can influence a run.
pub fn corpus_digest(corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    let vec = |h: &mut Sha256, v: Option<&FeatureVector>| match v {
        Some(v) => v.as_slice().iter().for_each(|x| h.update(x.to_le_bytes())),
        None => h.update(b"-"),
    };
    for item in corpus.items.values() {
        h.update(format!("i {} {} {}\n", item.id, item.class_label, item.description.join(" ")));
        vec(&mut h, item.visual_feature.as_ref());
    }
    for room in corpus.rooms.values() {
        let gt: Vec<&str> = room.ground_truth.iter().map(ItemId::as_str).collect();
        h.update(format!("r {} {} {}\n", room.id, room.description.join(" "), gt.join(",")));
        for d in room.detections.iter().flatten() {
            h.update(format!("{} {:?} {}\n", d.class_label, d.bbox, d.confidence));
        }
        for f in room.roi_features.iter().flatten() {
            vec(&mut h, Some(f));
        }
        vec(&mut h, room.image_feature.as_ref());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRow {
    pub method: String,
    pub mode: String,
    pub rooms: usize,
    pub hit_at_k: f64,
    pub curve: Vec<(usize, f64)>,
}

/// Mean style similarity of each list type for one query row. Cells that
/// cannot exist for the row are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub query: String,
    pub visual: Option<f64>,
    pub text: Option<f64>,
    pub simple: Option<f64>,
    pub feature: Option<f64>,
    /// Rooms whose text query could not be encoded.
    pub skipped_rooms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    pub config: ExperimentConfig,
    pub rooms: usize,
    pub retrieval: Vec<RetrievalRow>,
    /// Per-detection deep-feature recall, one curve per class.
    pub class_curves: BTreeMap<String, Vec<(usize, f64)>>,
    pub similarity: Vec<SimilarityRow>,
    /// Rooms without a kept detection matching a ground-truth class.
    pub similarity_excluded_rooms: usize,
    /// Relative change of feature blending over visual-only search, in percent.
    pub blend_delta_percent: Option<f64>,
    /// Detection searches that fell back to the full index.
    pub fallbacks: usize,
    /// Merged per-detection deep-feature results, top `k` per room.
    pub rankings: BTreeMap<RoomId, RankedList>,
}

/// Merges per-detection lists: all rank-1 entries in detection order, then
/// all rank-2 entries, and so on, keeping the first occurrence of each item.
pub fn merge_lists(lists: &[RankedList]) -> RankedList {
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    let longest = lists.iter().map(RankedList::len).max().unwrap_or(0);
    for rank in 0..longest {
        for l in lists {
            if let Some(e) = l.entries.get(rank) {
                if seen.insert(e.item.clone()) {
                    entries.push(e.clone());
                }
            }
        }
    }
    RankedList {
        order: ScoreOrder::Interleaved,
        entries,
    }
}

struct RoomQueries<'a> {
    room: &'a Room,
    kept: Vec<KeptDetection>,
    rois: &'a [FeatureVector],
}

fn room_queries<'a>(corpus: &'a Corpus, filter: &FilterConfig) -> Vec<RoomQueries<'a>> {
    corpus
        .rooms
        .values()
        .filter(|r| !r.ground_truth.is_empty())
        .map(|room| RoomQueries {
            room,
            kept: room
                .detections
                .as_deref()
                .map(|d| filter_detections(d, filter))
                .unwrap_or_default(),
            rois: room.roi_features.as_deref().unwrap_or(&[]),
        })
        .collect()
}

fn roi<'a>(q: &RoomQueries<'a>, kd: &KeptDetection) -> Result<&'a FeatureVector> {
    q.rois.get(kd.source_row).ok_or_else(|| Error::MissingRoiFeature {
        room: q.room.id.to_string(),
        row: kd.source_row,
    })
}

fn retrieval_row(
    method: &str,
    mode: &str,
    results: &BTreeMap<RoomId, RankedList>,
    gt: &GroundTruth,
    config: &ExperimentConfig,
) -> Result<Option<RetrievalRow>> {
    if results.is_empty() {
        return Ok(None);
    }
    Ok(Some(RetrievalRow {
        method: method.into(),
        mode: mode.into(),
        rooms: results.len(),
        hit_at_k: hit_at_k(results, gt, config.k)?,
        curve: recall_curve(results, gt, config.k_max)?,
    }))
}

fn mean_or_none(queries: &[(ItemId, RankedList)], c: &crate::corpus::CooccurrenceMatrix) -> Result<Option<f64>> {
    match mean_similarity(queries, c) {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn run_experiment(corpus: &Corpus, artifacts: &Artifacts, config: &ExperimentConfig) -> Result<EvalReport> {
    if config.k == 0 || config.k_max == 0 {
        return Err(Error::InvalidConfig("k and k_max must be at least 1".into()));
    }
    let gt = corpus.ground_truth();
    let queries = room_queries(corpus, &config.detect);
    if queries.is_empty() {
        return Err(Error::EmptyInput("no rooms with ground truth"));
    }
    let index = VectorIndex::from_visual_features(corpus, config.per_class)?;
    let class_of = |kd: &KeptDetection| config.per_class.then(|| kd.detection.class_label.clone());

    // retrieval, deep features
    let mut fallbacks = 0;
    let mut whole = BTreeMap::new();
    let mut detected = BTreeMap::new();
    let mut per_class: BTreeMap<String, (BTreeMap<RoomId, Vec<RankedList>>, GroundTruth)> = BTreeMap::new();
    for q in &queries {
        if let Some(f) = &q.room.image_feature {
            whole.insert(q.room.id.clone(), index.knn(f, config.k_max, None)?);
        }
        if q.room.detections.is_none() {
            continue;
        }
        let mut lists = Vec::new();
        for kd in &q.kept {
            let (list, fb) = index.knn_with_fallback(roi(q, kd)?, config.k_max, class_of(kd).as_deref())?;
            fallbacks += usize::from(fb);
            per_class
                .entry(kd.detection.class_label.clone())
                .or_default()
                .0
                .entry(q.room.id.clone())
                .or_default()
                .push(list.clone());
            lists.push(list);
        }
        detected.insert(q.room.id.clone(), merge_lists(&lists));
    }
    let mut retrieval = Vec::new();
    retrieval.extend(retrieval_row("deep features", "whole image", &whole, &gt, config)?);
    retrieval.extend(retrieval_row("deep features", "with detection", &detected, &gt, config)?);

    let mut class_curves = BTreeMap::new();
    for q in &queries {
        for item in &q.room.ground_truth {
            let class = &corpus.items[item].class_label;
            let entry = per_class.entry(class.clone()).or_default();
            entry.1.entry(q.room.id.clone()).or_default().insert(item.clone());
        }
    }
    for (class, (lists, class_gt)) in &per_class {
        let results: BTreeMap<RoomId, RankedList> = class_gt
            .keys()
            .filter(|r| detected.contains_key(*r))
            .map(|r| (r.clone(), lists.get(r).map(|l| merge_lists(l)).unwrap_or_else(|| RankedList::empty(ScoreOrder::Interleaved))))
            .collect();
        if !results.is_empty() {
            class_curves.insert(class.clone(), recall_curve(&results, class_gt, config.k_max)?);
        }
    }

    // retrieval, bag of visual words
    let mut codebook = artifacts.codebook.clone();
    if let Some(root) = &artifacts.descriptor_root {
        if codebook.is_none() && config.bovw_words > 0 {
            let sets = item_descriptors(corpus, root)?;
            let cfg = KMeansConfig {
                k: config.bovw_words,
                seed: config.seed,
                ..Default::default()
            };
            codebook = Some(train_codebook(&sets, &cfg)?.0);
        }
        if let Some(cb) = &codebook {
            let sets = item_descriptors(corpus, root)?;
            let hist = sets
                .iter()
                .zip(corpus.items.keys())
                .map(|(s, id)| Ok((id.clone(), quantize(s, cb)?)))
                .collect::<Result<Vec<_>>>()?;
            let bovw = BovwIndex::build(hist)?;
            let mut whole = BTreeMap::new();
            let mut detected = BTreeMap::new();
            for q in &queries {
                if let Some(img) = &q.room.image_ref {
                    let set = DescriptorSet::load(root, img)?;
                    whole.insert(q.room.id.clone(), bovw.search(&quantize(&set, cb)?, config.k_max)?);
                }
                if q.room.detections.is_none() {
                    continue;
                }
                let mut lists = Vec::new();
                for kd in &q.kept {
                    let set = DescriptorSet::load(root, &roi_image_ref(&q.room.id, kd.source_row))?;
                    lists.push(bovw.search(&quantize(&set, cb)?, config.k_max)?);
                }
                detected.insert(q.room.id.clone(), merge_lists(&lists));
            }
            retrieval.extend(retrieval_row("bovw", "whole image", &whole, &gt, config)?);
            retrieval.extend(retrieval_row("bovw", "with detection", &detected, &gt, config)?);
        }
    }

    // mean style similarity
    let (similarity, excluded) = similarity_rows(corpus, artifacts, config, &index, &queries)?;
    let visual = similarity.first().and_then(|r| r.visual);
    let blend_delta_percent = match (visual, similarity.last().and_then(|r| r.feature)) {
        (Some(v), Some(f)) if v > 0.0 && similarity.len() > 1 => Some((f - v) / v * 100.0),
        _ => None,
    };

    let rankings = detected.iter().map(|(r, l)| (r.clone(), l.top(config.k))).collect();

    let mut inputs = artifacts.digests();
    inputs.insert("corpus".into(), corpus_digest(corpus));
    if let (Some(cb), None) = (&codebook, &artifacts.codebook) {
        let mut buf = Vec::new();
        cb.write(&mut buf).expect("in-memory write");
        inputs.insert("codebook (trained)".into(), sha256_hex(&buf));
    }
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update(serde_json::to_vec(&inputs)?);
    let fingerprint = h.finalize().iter().map(|b| format!("{b:02x}")).collect();

    Ok(EvalReport {
        fingerprint,
        inputs,
        config: config.clone(),
        rooms: queries.len(),
        retrieval,
        class_curves,
        similarity,
        similarity_excluded_rooms: excluded,
        blend_delta_percent,
        fallbacks,
        rankings,
    })
}

fn item_descriptors(corpus: &Corpus, root: &Path) -> Result<Vec<DescriptorSet>> {
    corpus
        .items
        .values()
        .map(|item| {
            let img = item
                .image_ref
                .as_deref()
                .ok_or_else(|| Error::MissingArtifact(root.join(format!("{}: no image", item.id))))?;
            let path = crate::bovw::descriptor_path(root, img);
            if !path.exists() {
                return Err(Error::MissingArtifact(path));
            }
            DescriptorSet::load(root, img)
        })
        .collect()
}

/// Picks the query detection and query item of a room: the most confident
/// kept detection whose class matches a ground-truth item, and among those
/// items the one visually closest to the detection crop.
fn query_item<'a>(corpus: &Corpus, q: &'a RoomQueries<'a>) -> Result<Option<(&'a KeptDetection, ItemId)>> {
    for kd in &q.kept {
        let f = roi(q, kd)?.normalized()?;
        let best = q
            .room
            .ground_truth
            .iter()
            .filter(|i| corpus.items[*i].class_label == kd.detection.class_label)
            .map(|i| {
                let d = match &corpus.items[i].visual_feature {
                    Some(v) => vector::euclidean(f.as_slice(), v.normalized()?.as_slice()),
                    None => f64::INFINITY,
                };
                Ok((d, i))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        if let Some((_, item)) = best {
            return Ok(Some((kd, item.clone())));
        }
    }
    Ok(None)
}

struct Cells {
    text: Vec<(ItemId, RankedList)>,
    simple: Vec<(ItemId, RankedList)>,
    feature: Vec<(ItemId, RankedList)>,
    skipped: usize,
}

fn similarity_rows(
    corpus: &Corpus,
    artifacts: &Artifacts,
    config: &ExperimentConfig,
    index: &VectorIndex,
    queries: &[RoomQueries],
) -> Result<(Vec<SimilarityRow>, usize)> {
    let c = build_cooccurrence(corpus);
    if c.max_off_diagonal() == 0 {
        log::warn!("no item pair co-occurs; style similarity rows skipped");
        return Ok((Vec::new(), 0));
    }
    let mut excluded = 0;
    // (room, query detection feature, query item, visual list)
    let mut base = Vec::new();
    for q in queries {
        match query_item(corpus, q)? {
            Some((kd, item)) => {
                let f = roi(q, kd)?;
                let class = config.per_class.then_some(kd.detection.class_label.as_str());
                let (v, _) = index.knn_with_fallback(f, config.k, class)?;
                base.push((q.room, kd, f, item, v));
            }
            None => excluded += 1,
        }
    }
    let visual: Vec<(ItemId, RankedList)> = base.iter().map(|b| (b.3.clone(), b.4.clone())).collect();
    let mut rows = vec![SimilarityRow {
        query: "-".into(),
        visual: mean_or_none(&visual, &c)?,
        text: None,
        simple: None,
        feature: None,
        skipped_rooms: 0,
    }];

    let (Some(table), Some(model), Some(words)) = (&artifacts.table, &artifacts.encoder, &artifacts.words) else {
        return Ok((rows, excluded));
    };
    let text_index = table.to_index(None)?;
    let lookup = |id: &ItemId| corpus.items.get(id).and_then(|i| i.visual_feature.as_ref());

    let run = |tokens_of: &dyn Fn(&Room, &KeptDetection) -> Vec<String>| -> Result<Cells> {
        let mut cells = Cells {
            text: Vec::new(),
            simple: Vec::new(),
            feature: Vec::new(),
            skipped: 0,
        };
        for (room, kd, f, item, v) in &base {
            let tokens = tokens_of(room, kd);
            let t = match text_search(model, words, &text_index, &tokens, config.k, None) {
                Ok(t) => t,
                Err(Error::AllTokensOov { .. } | Error::EmptyQuery) => {
                    cells.skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let req = BlendRequest {
                visual: v,
                text: &t,
                query_feature: Some(f),
                k: config.k,
            };
            cells.simple.push((item.clone(), simple_blend(&req)?));
            cells.feature.push((item.clone(), feature_blend(&req, lookup)?));
            cells.text.push((item.clone(), t));
        }
        Ok(cells)
    };

    let class_cells = run(&|_, kd| tokenize(&kd.detection.class_label))?;
    rows.push(SimilarityRow {
        query: "object class name".into(),
        visual: None,
        text: None,
        simple: mean_or_none(&class_cells.simple, &c)?,
        feature: mean_or_none(&class_cells.feature, &c)?,
        skipped_rooms: class_cells.skipped,
    });
    let mut text_rows = Vec::new();
    let desc = run(&|room, _| room.description.clone())?;
    text_rows.push(("room description".to_string(), desc));
    for q in &config.text_queries {
        let tokens = tokenize(q);
        text_rows.push((q.clone(), run(&|_, _| tokens.clone())?));
    }
    for (query, cells) in text_rows {
        rows.push(SimilarityRow {
            query,
            visual: None,
            text: mean_or_none(&cells.text, &c)?,
            simple: mean_or_none(&cells.simple, &c)?,
            feature: mean_or_none(&cells.feature, &c)?,
            skipped_rooms: cells.skipped,
        });
    }
    let visual_value = rows[0].visual;
    let body = &rows[1..];
    let average = SimilarityRow {
        query: "average".into(),
        visual: visual_value,
        text: mean_of(body.iter().map(|r| r.text)),
        simple: mean_of(body.iter().map(|r| r.simple)),
        feature: mean_of(body.iter().map(|r| r.feature)),
        skipped_rooms: 0,
    };
    rows.push(average);
    Ok((rows, excluded))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned plain-text tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let k = self.config.k;
        let _ = writeln!(out, "fingerprint {}", self.fingerprint);
        let _ = writeln!(out, "rooms {}", self.rooms);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<16}{:>14}{:>16}", format!("Hit@{k}"), "whole image", "with detection");
        let methods: BTreeSet<&str> = self.retrieval.iter().map(|r| r.method.as_str()).collect();
        for m in methods {
            let get = |mode: &str| {
                cell(self
                    .retrieval
                    .iter()
                    .find(|r| r.method == m && r.mode == mode)
                    .map(|r| r.hit_at_k))
            };
            let _ = writeln!(out, "{:<16}{:>14}{:>16}", m, get("whole image"), get("with detection"));
        }
        if !self.similarity.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<24}{:>10}{:>10}{:>10}{:>10}",
                "mean similarity", "visual", "text", "simple", "feature"
            );
            for r in &self.similarity {
                let _ = writeln!(
                    out,
                    "{:<24}{:>10}{:>10}{:>10}{:>10}",
                    r.query,
                    cell(r.visual),
                    cell(r.text),
                    cell(r.simple),
                    cell(r.feature)
                );
            }
            let _ = writeln!(out, "excluded rooms {}", self.similarity_excluded_rooms);
            if let Some(d) = self.blend_delta_percent {
                let _ = writeln!(out, "feature blending vs visual {d:+.2}%");
            }
        }
        out
    }

    /// Recall curves as `series,k,recall` rows.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("series,k,recall\n");
        for r in &self.retrieval {
            for (k, v) in &r.curve {
                let _ = writeln!(out, "{} / {},{k},{v}", r.method, r.mode);
            }
        }
        for (class, curve) in &self.class_curves {
            for (k, v) in curve {
                let _ = writeln!(out, "class {class},{k},{v}");
            }
        }
        out
    }

    pub fn retrieval_hit(&self, method: &str, mode: &str) -> Option<f64> {
        self.retrieval
            .iter()
            .find(|r| r.method == method && r.mode == mode)
            .map(|r| r.hit_at_k)
    }

    pub fn similarity_row(&self, query: &str) -> Option<&SimilarityRow> {
        self.similarity.iter().find(|r| r.query == query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecindex::{Modality, RankedEntry};

    fn list(items: &[&str]) -> RankedList {
        RankedList {
            order: ScoreOrder::AscendingDistance,
            entries: items
                .iter()
                .map(|i| RankedEntry {
                    item: (*i).into(),
                    score: 0.0,
                    modality: Modality::Visual,
                })
                .collect(),
        }
    }

    #[test]
    fn merge_interleaves_by_rank() {
        let m = merge_lists(&[list(&["a", "b", "c"]), list(&["d", "a"])]);
        let ids: Vec<&str> = m.ids().map(ItemId::as_str).collect();
        assert_eq!(ids, ["a", "d", "b", "c"]);
        assert!(merge_lists(&[]).is_empty());
    }
}
