//! Request handling over loaded, immutable search state.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blend::{blend, BlendRequest, BlendStrategy};
use crate::config::Config;
use crate::corpus::{load_corpus, tokenize, Corpus, ItemId, RoomId};
use crate::detect::{filter_detections, Detection, FilterConfig, KeptDetection};
use crate::error::{Error, Result};
use crate::query_encoder::{text_search, EncoderModel, WordVectors};
use crate::style_embed::EmbeddingTable;
use crate::vecindex::{Modality, RankedList, ScoreOrder, VectorIndex};
use crate::vector::FeatureVector;

pub const DEFAULT_K: usize = 6;
pub const MAX_K: usize = 100;

/// Query encoder plus the style-embedding index it searches.
#[derive(Debug, Clone)]
pub struct TextSearch {
    pub model: EncoderModel,
    pub words: WordVectors,
    pub index: VectorIndex,
}

impl TextSearch {
    pub fn search(&self, tokens: &[String], k: usize, class_filter: Option<&str>) -> Result<RankedList> {
        text_search(&self.model, &self.words, &self.index, tokens, k, class_filter)
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    pub corpus: Corpus,
    pub visual: VectorIndex,
    pub text: Option<TextSearch>,
    pub filter: FilterConfig,
    /// Artifact name to SHA-256 of its file contents.
    pub fingerprints: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn fingerprint_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

impl Engine {
    /// Loads the corpus and every artifact named by `config`. Fails on the
    /// first missing file.
    pub fn load(root: &Path, config: &Config) -> Result<Self> {
        let corpus = load_corpus(root)?;
        let mut fingerprints = BTreeMap::new();
        fingerprints.insert("corpus".into(), fingerprint_file(&root.join(crate::corpus::CORPUS_FILE))?);
        let p = &config.paths;
        let mut artifact = |name: &str, rel: &Path| -> Result<std::path::PathBuf> {
            let path = config.resolve(root, rel);
            fingerprints.insert(name.into(), fingerprint_file(&path)?);
            Ok(path)
        };
        let visual = VectorIndex::load(&artifact("index", &p.index)?)?;
        let table = EmbeddingTable::load(&artifact("embeddings", &p.embeddings)?)?;
        let model = EncoderModel::load(&artifact("encoder", &p.encoder)?)?;
        let words = WordVectors::load(&artifact("words", &p.words)?)?;
        if model.output_dim() != table.dim {
            return Err(Error::DimensionMismatch {
                id: "encoder output".into(),
                expected: table.dim,
                found: model.output_dim(),
            });
        }
        let text = TextSearch {
            model,
            words,
            index: table.to_index(Some(&corpus))?,
        };
        Ok(Engine {
            corpus,
            visual,
            text: Some(text),
            filter: config.detect,
            fingerprints,
        })
    }

    pub fn handle_search(&self, req: &SearchRequest) -> Result<SearchResponse> {
        let start = Instant::now();
        let k = req.k.unwrap_or(DEFAULT_K);
        if !(1..=MAX_K).contains(&k) {
            return Err(Error::InvalidConfig(format!("k must be in 1..={MAX_K}, got {k}")));
        }
        if req.room.is_some() && req.bundle.is_some() {
            return Err(Error::InvalidConfig("give either a room or a bundle, not both".into()));
        }
        let text = req.text.as_deref().filter(|t| !t.trim().is_empty());
        if req.room.is_none() && req.bundle.is_none() && text.is_none() {
            return Err(Error::InvalidConfig("request needs a room, a bundle or a text query".into()));
        }
        let mut notices = Vec::new();
        let mut timing = Timing::default();

        // visual queries: (kept detection or whole image, feature)
        let t0 = Instant::now();
        let mut queries: Vec<(Option<KeptDetection>, FeatureVector)> = Vec::new();
        let (detections, rois, whole) = match (&req.room, &req.bundle) {
            (Some(r), _) => {
                let room = self.corpus.room(&RoomId::new(r.as_str())?)?;
                (
                    room.detections.clone().unwrap_or_default(),
                    room.roi_features.clone().unwrap_or_default(),
                    room.image_feature.clone(),
                )
            }
            (None, Some(b)) => {
                for d in &b.detections {
                    d.check()?;
                }
                let rois = b.roi_features.iter().cloned().map(FeatureVector::new).collect::<Result<Vec<_>>>()?;
                (b.detections.clone(), rois, None)
            }
            (None, None) => (Vec::new(), Vec::new(), None),
        };
        let has_visual = req.room.is_some() || req.bundle.is_some();
        let kept = filter_detections(&detections, &self.filter);
        let dropped = detections.len() - kept.len();
        if dropped > 0 {
            notices.push(format!("{dropped} detections removed by confidence or overlap filtering"));
        }
        for kd in kept {
            let f = rois.get(kd.source_row).cloned().ok_or_else(|| Error::MissingRoiFeature {
                room: req.room.clone().unwrap_or_else(|| "bundle".into()),
                row: kd.source_row,
            })?;
            queries.push((Some(kd), f));
        }
        if has_visual && queries.is_empty() {
            match whole {
                Some(f) => {
                    notices.push("no detections kept; searched with the whole-image feature".into());
                    queries.push((None, f));
                }
                None => notices.push("no detections kept and no whole-image feature".into()),
            }
        }
        let mut visual = Vec::with_capacity(queries.len());
        for (kd, f) in &queries {
            let class = kd.as_ref().map(|k| k.detection.class_label.as_str());
            let (list, fallback) = self.visual.knn_with_fallback(f, k, class)?;
            if fallback {
                notices.push(format!("class {:?} is not indexed; searched all items", class.unwrap_or("")));
            }
            visual.push((list, fallback));
        }
        timing.visual_ms = ms(t0);

        let t1 = Instant::now();
        let mut text_tokens = Vec::new();
        let text_list = match text {
            Some(t) => {
                let ts = self
                    .text
                    .as_ref()
                    .ok_or(Error::EmptyInput("text search is not configured"))?;
                text_tokens = tokenize(t);
                let unknown: Vec<&String> = text_tokens.iter().filter(|t| !ts.words.contains(t)).collect();
                if !unknown.is_empty() && unknown.len() < text_tokens.len() {
                    notices.push(format!("ignored unknown tokens: {}", join(&unknown)));
                }
                Some(ts.search(&text_tokens, k, req.class_filter.as_deref())?)
            }
            None => None,
        };
        timing.text_ms = ms(t1);

        let t2 = Instant::now();
        let mut groups = Vec::new();
        let lookup = |id: &ItemId| self.corpus.items.get(id).and_then(|i| i.visual_feature.as_ref());
        for ((kd, f), (vlist, fallback)) in queries.iter().zip(visual) {
            let results = match &text_list {
                Some(tl) => blend(
                    &BlendRequest {
                        visual: &vlist,
                        text: tl,
                        query_feature: Some(f),
                        k,
                    },
                    req.strategy,
                    lookup,
                )?,
                None => vlist,
            };
            groups.push(self.group(kd.clone(), fallback, &results));
        }
        if groups.is_empty() {
            if let Some(tl) = &text_list {
                groups.push(self.group(None, false, tl));
            }
        }
        timing.blend_ms = ms(t2);
        timing.total_ms = ms(start);

        Ok(SearchResponse {
            room: req.room.clone(),
            k,
            strategy: req.strategy,
            text_tokens,
            groups,
            notices,
            timing,
        })
    }

    fn group(&self, detection: Option<KeptDetection>, fallback: bool, list: &RankedList) -> ResultGroup {
        ResultGroup {
            detection,
            fallback,
            order: list.order,
            results: list
                .entries
                .iter()
                .enumerate()
                .map(|(n, e)| {
                    let item = self.corpus.items.get(&e.item);
                    ResultEntry {
                        rank: n + 1,
                        item: e.item.clone(),
                        name: item.map(|i| i.name.clone()).unwrap_or_default(),
                        class: item.map(|i| i.class_label.clone()).unwrap_or_default(),
                        score: e.score,
                        modality: e.modality,
                        image: item.and_then(|i| i.image_ref.clone()),
                    }
                })
                .collect(),
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn join(tokens: &[&String]) -> String {
    tokens.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
}

/// Detections and their crop features supplied with the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub detections: Vec<Detection>,
    /// One feature per detection, same order.
    pub roi_features: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    #[serde(default)]
    pub room: Option<String>,
    #[serde(default)]
    pub bundle: Option<QueryBundle>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub strategy: BlendStrategy,
    #[serde(default)]
    pub class_filter: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub rank: usize,
    pub item: ItemId,
    pub name: String,
    pub class: String,
    pub score: f64,
    pub modality: Modality,
    pub image: Option<String>,
}

/// Results for one kept detection, or for the whole query when no
/// detection applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGroup {
    pub detection: Option<KeptDetection>,
    pub fallback: bool,
    pub order: ScoreOrder,
    pub results: Vec<ResultEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub visual_ms: f64,
    pub text_ms: f64,
    pub blend_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub room: Option<String>,
    pub k: usize,
    pub strategy: BlendStrategy,
    pub text_tokens: Vec<String>,
    /// In descending detection confidence.
    pub groups: Vec<ResultGroup>,
    pub notices: Vec<String>,
    pub timing: Timing,
}

impl SearchResponse {
    /// Copy with zeroed timing, for comparisons.
    pub fn without_timing(&self) -> Self {
        SearchResponse {
            timing: Timing::default(),
            ..self.clone()
        }
    }
}
