//! Deterministic synthetic corpora.
//!
//! Items belong to style clusters. Rooms draw their items from a single
//! cluster, so items of different clusters never co-occur. Visual features
//! are a cluster direction plus a weaker class direction plus noise, which
//! makes co-occurring items visually correlated. Each cluster also owns a
//! style word that appears in its item descriptions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bovw::DescriptorSet;
use crate::corpus::{save_corpus, Corpus, Item, ItemId, Room, RoomId};
use crate::detect::{BBox, Detection};
use crate::error::{Error, Result};
use crate::query_encoder::WordVectors;
use crate::style_embed::{CbowConfig, EmbeddingTable};
use crate::vector::FeatureVector;

pub const STYLE_WORDS: &[&str] = &[
    "white", "black", "oak", "walnut", "rustic", "modern", "velvet", "marble", "rattan", "industrial", "pastel",
    "scandinavian",
];

const FILLER_WORDS: &[&str] = &[
    "with", "and", "for", "the", "durable", "easy", "clean", "soft", "practical", "design", "storage", "comfort",
];

pub const LABELS_FILE: &str = "labels.json";
pub const WORDS_FILE: &str = "words.txt";

const IMAGE_W: f64 = 640.0;
const IMAGE_H: f64 = 480.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub clusters: usize,
    pub items_per_cluster: usize,
    pub rooms_per_cluster: usize,
    /// Ground-truth items per room, capped by the cluster size.
    pub items_per_room: usize,
    pub feature_dim: usize,
    /// Standard deviation of per-item feature noise, relative to the unit
    /// cluster direction.
    pub noise: f64,
    /// Weight of the class direction in item features.
    pub class_weight: f64,
    /// Noise added to item features to form detection crops.
    pub roi_noise: f64,
    /// Clutter added to the mean item feature to form whole-room features.
    pub scene_noise: f64,
    pub classes: Vec<String>,
    pub categories: Vec<String>,
    pub word_dim: usize,
    /// Total tokens in the generated word-vector file.
    pub vocabulary: usize,
    /// Zero disables local descriptors.
    pub descriptor_dim: usize,
    pub descriptors_per_image: usize,
    /// Add a sub-threshold detection and an overlapping duplicate per room.
    pub distractors: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            clusters: 4,
            items_per_cluster: 16,
            rooms_per_cluster: 10,
            items_per_room: 4,
            feature_dim: 32,
            noise: 0.35,
            class_weight: 0.6,
            roi_noise: 0.4,
            scene_noise: 3.0,
            classes: ["chair", "table", "sofa", "bed", "lamp", "wall clock"]
                .into_iter()
                .map(String::from)
                .collect(),
            categories: ["kitchen", "living room", "bedroom", "children room", "office"]
                .into_iter()
                .map(String::from)
                .collect(),
            word_dim: 16,
            vocabulary: 200,
            descriptor_dim: 16,
            descriptors_per_image: 24,
            distractors: true,
        }
    }
}

impl SynthSpec {
    /// Two clusters of five items with ten rooms each.
    pub fn two_clique() -> Self {
        SynthSpec {
            clusters: 2,
            items_per_cluster: 5,
            rooms_per_cluster: 10,
            items_per_room: 3,
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, "synth spec", e.to_string()))
    }

    fn check(&self) -> Result<()> {
        if self.clusters == 0 || self.items_per_cluster == 0 {
            return Err(Error::InvalidConfig("synthetic corpus needs clusters and items".into()));
        }
        if self.feature_dim == 0 || self.word_dim == 0 || self.items_per_room == 0 {
            return Err(Error::InvalidConfig("synthetic dimensions must be positive".into()));
        }
        if self.classes.is_empty() || self.categories.is_empty() {
            return Err(Error::InvalidConfig("synthetic corpus needs classes and categories".into()));
        }
        if self.clusters > STYLE_WORDS.len() {
            return Err(Error::InvalidConfig(format!(
                "at most {} clusters are supported",
                STYLE_WORDS.len()
            )));
        }
        if !(self.noise >= 0.0 && self.roi_noise >= 0.0 && self.scene_noise >= 0.0) {
            return Err(Error::InvalidConfig("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything a synthetic run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub corpus: Corpus,
    pub descriptors: Vec<DescriptorSet>,
    pub words: WordVectors,
    /// Item to style-cluster name.
    pub labels: BTreeMap<ItemId, String>,
}

struct Gen {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl Gen {
    fn gaussian(&mut self, dim: usize, sd: f64) -> Vec<f64> {
        (0..dim).map(|_| self.normal.sample(&mut self.rng) * sd).collect()
    }

    fn unit(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v = self.gaussian(dim, 1.0);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-9 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

fn add(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + w * y).collect()
}

fn feature(v: &[f64]) -> Result<FeatureVector> {
    FeatureVector::from_f64(v)?.normalized()
}

pub fn item_id(cluster: usize, index: usize) -> ItemId {
    ItemId::from(format!("c{cluster}-i{index:02}").as_str())
}

/// Builds a synthetic corpus and its side artifacts from `spec` and `seed`.
pub fn synth_bundle(spec: &SynthSpec, seed: u64) -> Result<SynthBundle> {
    spec.check()?;
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        normal: Normal::new(0.0, 1.0).expect("unit normal"),
    };
    let dim = spec.feature_dim;
    let cluster_dirs: Vec<Vec<f64>> = (0..spec.clusters).map(|_| g.unit(dim)).collect();
    let class_dirs: Vec<Vec<f64>> = spec.classes.iter().map(|_| g.unit(dim)).collect();
    let noise_sd = spec.noise / (dim as f64).sqrt();

    let mut corpus = Corpus::default();
    corpus.meta.insert("generator".into(), "synthetic".into());
    corpus.meta.insert("seed".into(), seed.to_string());
    let mut labels = BTreeMap::new();
    let mut raw: HashMap<ItemId, Vec<f64>> = HashMap::new();

    let desc_on = spec.descriptor_dim > 0 && spec.descriptors_per_image > 0;
    let cluster_protos: Vec<Vec<Vec<f64>>> = (0..spec.clusters)
        .map(|_| (0..3).map(|_| g.unit(spec.descriptor_dim.max(1))).collect())
        .collect();
    let mut item_protos: HashMap<ItemId, Vec<Vec<f64>>> = HashMap::new();
    let mut descriptors = Vec::new();

    for c in 0..spec.clusters {
        let style = STYLE_WORDS[c];
        for j in 0..spec.items_per_cluster {
            let id = item_id(c, j);
            let class_idx = (j + c) % spec.classes.len();
            let class = &spec.classes[class_idx];
            let mut v = add(&cluster_dirs[c], &class_dirs[class_idx], spec.class_weight);
            v = add(&v, &g.gaussian(dim, noise_sd), 1.0);
            let filler = *FILLER_WORDS.choose(&mut g.rng).unwrap();
            let description = format!("{style} {class} {filler} {style}");
            let image_ref = format!("items/{id}.jpg");
            if desc_on {
                let mut protos = cluster_protos[c].clone();
                protos.push(g.unit(spec.descriptor_dim));
                let set = descriptor_set(&mut g, &image_ref, &protos, spec.descriptor_dim, spec.descriptors_per_image, 0)?;
                descriptors.push(set);
                item_protos.insert(id.clone(), protos);
            }
            corpus.items.insert(
                id.clone(),
                Item {
                    id: id.clone(),
                    class_label: class.clone(),
                    name: format!("{} {} {j}", capitalize(style), class),
                    description: crate::corpus::tokenize(&description),
                    image_ref: Some(image_ref),
                    visual_feature: Some(feature(&v)?),
                    style_embedding: None,
                },
            );
            labels.insert(id.clone(), style.to_string());
            raw.insert(id, v);
        }
    }

    let per_room = spec.items_per_room.min(spec.items_per_cluster);
    let mut room_no = 0;
    for c in 0..spec.clusters {
        let members: Vec<ItemId> = (0..spec.items_per_cluster).map(|j| item_id(c, j)).collect();
        for _ in 0..spec.rooms_per_cluster {
            let id = RoomId::from(format!("r{room_no:03}").as_str());
            room_no += 1;
            let category = spec.categories.choose(&mut g.rng).unwrap().clone();
            let mut gt: Vec<ItemId> = members.choose_multiple(&mut g.rng, per_room).cloned().collect();
            gt.sort();

            let mut detections = Vec::new();
            let mut rois = Vec::new();
            let cols = per_room.div_ceil(2).max(1);
            let (cell_w, cell_h) = (IMAGE_W / cols as f64, IMAGE_H / 2.0);
            for (n, item) in gt.iter().enumerate() {
                let (cx, cy) = ((n % cols) as f64 * cell_w, (n / cols) as f64 * cell_h);
                let w = round1(cell_w * g.rng.random_range(0.5..0.9));
                let h = round1(cell_h * g.rng.random_range(0.5..0.9));
                let bbox = BBox::new(round1(cx + (cell_w - w) / 2.0), round1(cy + (cell_h - h) / 2.0), w, h)?;
                let conf = round3(g.rng.random_range(0.3..0.95));
                let class = corpus.items[item].class_label.clone();
                detections.push(Detection::new(class, bbox, conf)?);
                let crop = add(&raw[item], &g.gaussian(dim, spec.roi_noise / (dim as f64).sqrt()), 1.0);
                rois.push(feature(&crop)?);
            }
            if spec.distractors && !gt.is_empty() {
                // sub-threshold detection of a random class
                let class = spec.classes.choose(&mut g.rng).unwrap().clone();
                let bbox = BBox::new(10.0, 10.0, 40.0, 40.0)?;
                detections.push(Detection::new(class, bbox, round3(g.rng.random_range(0.01..0.09)))?);
                rois.push(feature(&g.gaussian(dim, 1.0))?);
                // lower-confidence duplicate of the first box
                let first = detections[0].clone();
                let b = first.bbox;
                let dup = BBox::new(round1(b.x + b.width * 0.05), round1(b.y + b.height * 0.05), b.width, b.height)?;
                let conf = round3(first.confidence * 0.5);
                detections.push(Detection::new(first.class_label, dup, conf)?);
                let crop = add(&raw[&gt[0]], &g.gaussian(dim, 3.0 * spec.roi_noise / (dim as f64).sqrt()), 1.0);
                rois.push(feature(&crop)?);
            }

            let mut mean = vec![0.0; dim];
            for item in &gt {
                mean = add(&mean, &raw[item], 1.0 / gt.len() as f64);
            }
            let scene = add(&mean, &g.gaussian(dim, spec.scene_noise / (dim as f64).sqrt()), 1.0);

            let image_ref = format!("rooms/{id}.jpg");
            if desc_on {
                let protos: Vec<Vec<f64>> = gt.iter().flat_map(|i| item_protos[i].clone()).collect();
                let clutter = spec.descriptors_per_image * 2 / 3;
                descriptors.push(descriptor_set(&mut g, &image_ref, &protos, spec.descriptor_dim, spec.descriptors_per_image, clutter)?);
                for (row, det) in detections.iter().enumerate() {
                    let crop_ref = roi_image_ref(&id, row);
                    let protos = gt
                        .iter()
                        .find(|i| corpus.items[*i].class_label == det.class_label)
                        .map(|i| item_protos[i].clone())
                        .unwrap_or_default();
                    let clutter = if protos.is_empty() { spec.descriptors_per_image } else { 2 };
                    descriptors.push(descriptor_set(&mut g, &crop_ref, &protos, spec.descriptor_dim, spec.descriptors_per_image, clutter)?);
                }
            }
            let style = STYLE_WORDS[c];
            corpus.rooms.insert(
                id.clone(),
                Room {
                    id,
                    category: category.clone(),
                    description: crate::corpus::tokenize(&format!("{style} {category}")),
                    image_ref: Some(image_ref),
                    ground_truth: gt.into_iter().collect(),
                    detections: Some(detections),
                    roi_features: Some(rois),
                    image_feature: Some(feature(&scene)?),
                },
            );
        }
    }

    let words = synth_words(spec, &mut g)?;
    corpus.validate()?;
    Ok(SynthBundle {
        corpus,
        descriptors,
        words,
        labels,
    })
}

/// The corpus alone.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<Corpus> {
    Ok(synth_bundle(spec, seed)?.corpus)
}

/// Image reference under which the descriptors of detection `row` are stored.
pub fn roi_image_ref(room: &RoomId, row: usize) -> String {
    format!("rooms/{room}_roi{row}.jpg")
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn descriptor_set(
    g: &mut Gen,
    image_ref: &str,
    protos: &[Vec<f64>],
    dim: usize,
    n: usize,
    clutter: usize,
) -> Result<DescriptorSet> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = match protos.choose(&mut g.rng) {
            Some(p) if i >= clutter => add(p, &g.gaussian(dim, 0.15), 1.0),
            _ => g.gaussian(dim, 1.0),
        };
        out.push(FeatureVector::from_f64(&v)?);
    }
    Ok(DescriptorSet {
        image_ref: image_ref.to_string(),
        descriptors: out,
    })
}

/// Word vectors covering every corpus token, padded with filler tokens up to
/// the requested vocabulary size. Style words get well-separated vectors.
fn synth_words(spec: &SynthSpec, g: &mut Gen) -> Result<WordVectors> {
    let mut tokens: BTreeSet<String> = BTreeSet::new();
    tokens.extend(STYLE_WORDS.iter().map(|s| s.to_string()));
    tokens.extend(FILLER_WORDS.iter().map(|s| s.to_string()));
    for c in spec.classes.iter().chain(&spec.categories) {
        tokens.extend(crate::corpus::tokenize(c));
    }
    let mut n = 0;
    while tokens.len() < spec.vocabulary {
        tokens.insert(format!("tok{n:03}"));
        n += 1;
    }
    let mut vectors = HashMap::new();
    for t in tokens {
        let sd = if STYLE_WORDS.contains(&t.as_str()) { 1.0 } else { 0.3 };
        let v: Vec<f32> = g.gaussian(spec.word_dim, sd).into_iter().map(|x| x as f32).collect();
        vectors.insert(t, v);
    }
    WordVectors::new(spec.word_dim, vectors)
}

/// Writes the corpus, descriptors, word vectors and labels below `out`.
pub fn write_bundle(bundle: &SynthBundle, out: &Path) -> Result<()> {
    save_corpus(&bundle.corpus, out)?;
    for set in &bundle.descriptors {
        set.save(out)?;
    }
    let words = out.join(WORDS_FILE);
    fs::write(&words, bundle.words.to_text()).map_err(|e| Error::io(&words, e))?;
    let labels: BTreeMap<&str, &str> = bundle.labels.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    let path = out.join(LABELS_FILE);
    let mut text = serde_json::to_string_pretty(&labels)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Embedding table in which every item sits at a random direction of its
/// cluster, jittered by Gaussian noise of standard deviation `noise` per axis.
/// A description's style word then fully determines its target.
pub fn cluster_embeddings(labels: &BTreeMap<ItemId, String>, dim: usize, noise: f64, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 || !(noise >= 0.0) {
        return Err(Error::InvalidConfig("dim must be positive and noise non-negative".into()));
    }
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        normal: Normal::new(0.0, 1.0).expect("unit normal"),
    };
    let mut centers: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for label in labels.values() {
        if !centers.contains_key(label.as_str()) {
            let c = g.unit(dim);
            centers.insert(label, c);
        }
    }
    let mut ids = Vec::with_capacity(labels.len());
    let mut input = Vec::with_capacity(labels.len());
    for (id, label) in labels {
        let jitter = g.gaussian(dim, noise);
        ids.push(id.clone());
        input.push(FeatureVector::from_f64(&add(&centers[label.as_str()], &jitter, 1.0))?);
    }
    let output = vec![FeatureVector::from_f64(&vec![0.0; dim])?; ids.len()];
    Ok(EmbeddingTable {
        dim,
        ids,
        input,
        output,
        config: CbowConfig {
            dim,
            epochs: 0,
            seed,
            ..CbowConfig::default()
        },
        untrained: BTreeSet::new(),
    })
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<ItemId, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, String> =
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, "labels", e.to_string()))?;
    raw.into_iter()
        .map(|(k, v)| Ok((ItemId::new(k)?, v)))
        .collect()
}
