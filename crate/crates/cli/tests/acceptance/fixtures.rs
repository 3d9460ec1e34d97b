use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylesearch_core::corpus::{Item, Room};
use stylesearch_core::experiment::{run_experiment, Artifacts};
use stylesearch_core::query_encoder::{train_encoder, EncoderConfig};
use stylesearch_core::style_embed::{make_pairs, train_cbow, CbowConfig};
use stylesearch_core::synth::{synth_bundle, write_bundle, SynthSpec};
use stylesearch_core::{BBox, Corpus, Detection, EvalReport, ExperimentConfig, ItemId, RoomId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn item_id(i: usize) -> ItemId {
    ItemId::from(format!("i{i:02}").as_str())
}

/// Up to 20 rooms over up to 30 items; the first room holds at least two
/// items so that some pair co-occurs.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> Corpus {
    let n_items = rng.random_range(2..=30);
    let n_rooms = rng.random_range(1..=20);
    let mut c = Corpus::default();
    for i in 0..n_items {
        let id = item_id(i);
        c.items.insert(
            id.clone(),
            Item {
                id,
                class_label: ["chair", "table", "lamp"].choose(rng).unwrap().to_string(),
                name: String::new(),
                description: vec![],
                image_ref: None,
                visual_feature: None,
                style_embedding: None,
            },
        );
    }
    let all: Vec<usize> = (0..n_items).collect();
    for r in 0..n_rooms {
        let lo = if r == 0 { 2 } else { 1 };
        let size = rng.random_range(lo..=n_items.min(8));
        let members: BTreeSet<ItemId> = all.choose_multiple(rng, size).map(|&i| item_id(i)).collect();
        let id = RoomId::from(format!("r{r:02}").as_str());
        c.rooms.insert(
            id.clone(),
            Room {
                id,
                category: String::new(),
                description: vec![],
                image_ref: None,
                ground_truth: members,
                detections: None,
                roi_features: None,
                image_feature: None,
            },
        );
    }
    c
}

/// A random ranking of `len` distinct items drawn from `0..n_items`.
pub fn random_list(rng: &mut ChaCha8Rng, n_items: usize, len: usize) -> Vec<ItemId> {
    let mut all: Vec<usize> = (0..n_items).collect();
    all.shuffle(rng);
    all.into_iter().take(len).map(item_id).collect()
}

pub fn random_detections(rng: &mut ChaCha8Rng) -> Vec<Detection> {
    let n = rng.random_range(0..25);
    (0..n)
        .map(|_| {
            let bbox = BBox::new(
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..100.0),
                rng.random_range(1.0..50.0),
                rng.random_range(1.0..50.0),
            )
            .unwrap();
            let class = *["chair", "sofa", "lamp"].choose(rng).unwrap();
            Detection::new(class, bbox, rng.random_range(0.0..=1.0)).unwrap()
        })
        .collect()
}

/// Synthetic corpus written to `dir` with embeddings and encoder trained in
/// process, evaluated with the default experiment settings.
pub fn synthetic_experiment(dir: &Path, seed: u64) -> EvalReport {
    let bundle = synth_bundle(&SynthSpec::default(), seed).unwrap();
    write_bundle(&bundle, dir).unwrap();
    let c = &bundle.corpus;
    let vocab: Vec<ItemId> = c.items.keys().cloned().collect();
    let (table, _) = train_cbow(
        &make_pairs(c),
        &vocab,
        &CbowConfig {
            seed,
            ..CbowConfig::default()
        },
    )
    .unwrap();
    let (encoder, _) = train_encoder(
        c,
        &table,
        &bundle.words,
        &EncoderConfig {
            seed,
            ..EncoderConfig::default()
        },
    )
    .unwrap();
    let artifacts = Artifacts {
        table: Some(table),
        encoder: Some(encoder),
        words: Some(bundle.words.clone()),
        codebook: None,
        descriptor_root: Some(dir.to_path_buf()),
    };
    let config = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    run_experiment(c, &artifacts, &config).unwrap()
}

pub type GroundTruth = BTreeMap<RoomId, BTreeSet<ItemId>>;
