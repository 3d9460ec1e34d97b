//! Item style embeddings learned from room co-occurrence.
//!
//! Each room is a bag: for every item of a room, the remaining items are its
//! context. Training is CBOW with negative sampling; the averaged input
//! vectors of the context score the target's output vector against sampled
//! negatives with a log-sigmoid loss.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ItemId};
use crate::error::{Error, Result};
use crate::vecindex::VectorIndex;
use crate::vector::{self, read_str, read_u32, write_str, FeatureVector, VectorBlock};

const TABLE_MAGIC: &[u8; 4] = b"SSEM";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub target: ItemId,
    pub context: Vec<ItemId>,
}

/// One pair per (room, member) for rooms with at least two items.
/// Repeated rooms yield repeated pairs.
pub fn make_pairs(corpus: &Corpus) -> Vec<TrainingPair> {
    let mut pairs = Vec::new();
    for room in corpus.rooms.values() {
        if room.ground_truth.len() < 2 {
            continue;
        }
        for target in &room.ground_truth {
            pairs.push(TrainingPair {
                target: target.clone(),
                context: room.ground_truth.iter().filter(|i| *i != target).cloned().collect(),
            });
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CbowConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Initial step size, decayed linearly to nearly zero over training.
    pub learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            dim: 32,
            epochs: 200,
            learning_rate: 0.05,
            negatives: 5,
            seed: 0,
        }
    }
}

/// Dense CBOW parameters, row-major `vocab x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbowParams {
    pub dim: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl CbowParams {
    pub fn init(vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let half = 0.5 / dim as f64;
        CbowParams {
            dim,
            input: (0..vocab * dim).map(|_| rng.random_range(-half..half)).collect(),
            output: vec![0.0; vocab * dim],
        }
    }

    fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    fn output_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    fn hidden(&self, context: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for &c in context {
            for (a, b) in h.iter_mut().zip(self.input_row(c)) {
                *a += b;
            }
        }
        let n = context.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln(sigmoid(x))`, stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss of one (target, context) pair against the given negatives.
pub fn pair_loss(p: &CbowParams, target: usize, context: &[usize], negatives: &[usize]) -> f64 {
    let h = p.hidden(context);
    neg_log_sigmoid(dot(&h, p.output_row(target)))
        + negatives
            .iter()
            .map(|&n| neg_log_sigmoid(-dot(&h, p.output_row(n))))
            .sum::<f64>()
}

/// Gradient of [`pair_loss`] in sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    /// Gradient with respect to each context input row (identical for all of them).
    pub per_context_input: Vec<f64>,
    /// Gradient contributions to output rows, one per scored word (may repeat).
    pub output: Vec<(usize, Vec<f64>)>,
}

pub fn pair_gradient(p: &CbowParams, target: usize, context: &[usize], negatives: &[usize]) -> PairGradient {
    let h = p.hidden(context);
    let mut grad_h = vec![0.0; p.dim];
    let mut output = Vec::with_capacity(negatives.len() + 1);
    let mut loss = 0.0;
    let scored = std::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (word, label) in scored {
        let row = p.output_row(word);
        let score = dot(&h, row);
        loss += if label == 1.0 {
            neg_log_sigmoid(score)
        } else {
            neg_log_sigmoid(-score)
        };
        let g = sigmoid(score) - label;
        for (gh, o) in grad_h.iter_mut().zip(row) {
            *gh += g * o;
        }
        output.push((word, h.iter().map(|v| g * v).collect()));
    }
    let n = context.len() as f64;
    PairGradient {
        loss,
        per_context_input: grad_h.into_iter().map(|v| v / n).collect(),
        output,
    }
}

impl PairGradient {
    /// Scatters the sparse gradient into dense `(input, output)` arrays.
    pub fn to_dense(&self, vocab: usize, dim: usize, context: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut gin = vec![0.0; vocab * dim];
        let mut gout = vec![0.0; vocab * dim];
        for &c in context {
            for (a, b) in gin[c * dim..(c + 1) * dim].iter_mut().zip(&self.per_context_input) {
                *a += b;
            }
        }
        for (w, g) in &self.output {
            for (a, b) in gout[w * dim..(w + 1) * dim].iter_mut().zip(g) {
                *a += b;
            }
        }
        (gin, gout)
    }

    fn apply(&self, p: &mut CbowParams, context: &[usize], lr: f64) {
        let dim = p.dim;
        for (w, g) in &self.output {
            for (o, d) in p.output[w * dim..(w + 1) * dim].iter_mut().zip(g) {
                *o -= lr * d;
            }
        }
        for &c in context {
            for (v, d) in p.input[c * dim..(c + 1) * dim].iter_mut().zip(&self.per_context_input) {
                *v -= lr * d;
            }
        }
    }
}

/// Draws negatives from the unigram distribution raised to 0.75.
struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(freq: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = freq
            .iter()
            .map(|&f| {
                acc += (f as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeSampler { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Learned item vectors. `input` rows are the item embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub ids: Vec<ItemId>,
    pub input: Vec<FeatureVector>,
    pub output: Vec<FeatureVector>,
    pub config: CbowConfig,
    /// Items never seen in a multi-item room; they keep their initial vectors.
    pub untrained: BTreeSet<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CbowReport {
    pub epoch_losses: Vec<f64>,
}

fn table_from_params(
    p: &CbowParams,
    ids: &[ItemId],
    config: CbowConfig,
    untrained: BTreeSet<ItemId>,
) -> Result<EmbeddingTable> {
    let rows = |data: &[f64]| {
        data.chunks(p.dim)
            .map(FeatureVector::from_f64)
            .collect::<Result<Vec<_>>>()
    };
    Ok(EmbeddingTable {
        dim: p.dim,
        ids: ids.to_vec(),
        input: rows(&p.input)?,
        output: rows(&p.output)?,
        config,
        untrained,
    })
}

pub fn train_cbow(
    pairs: &[TrainingPair],
    vocab: &[ItemId],
    config: &CbowConfig,
) -> Result<(EmbeddingTable, CbowReport)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no training pairs"));
    }
    if config.dim == 0 || config.learning_rate <= 0.0 || config.negatives == 0 {
        return Err(Error::InvalidConfig("dim, learning rate and negatives must be positive".into()));
    }
    if vocab.len() < config.negatives + 1 {
        return Err(Error::InvalidConfig(format!(
            "vocabulary of {} items is smaller than negatives + 1 = {}",
            vocab.len(),
            config.negatives + 1
        )));
    }
    let index: HashMap<&ItemId, usize> = vocab.iter().enumerate().map(|(i, id)| (id, i)).collect();
    if index.len() != vocab.len() {
        return Err(Error::InvalidConfig("vocabulary contains duplicates".into()));
    }
    let lookup = |id: &ItemId| index.get(id).copied().ok_or_else(|| Error::UnknownItem(id.to_string()));
    let encoded: Vec<(usize, Vec<usize>)> = pairs
        .iter()
        .map(|p| {
            if p.context.is_empty() {
                return Err(Error::InvalidConfig(format!("pair for {} has no context", p.target)));
            }
            Ok((lookup(&p.target)?, p.context.iter().map(lookup).collect::<Result<Vec<_>>>()?))
        })
        .collect::<Result<_>>()?;

    let mut freq = vec![0usize; vocab.len()];
    let mut seen = vec![false; vocab.len()];
    for (t, ctx) in &encoded {
        freq[*t] += 1;
        seen[*t] = true;
        ctx.iter().for_each(|&c| seen[c] = true);
    }
    let untrained: BTreeSet<ItemId> = vocab
        .iter()
        .zip(&seen)
        .filter(|(_, s)| !**s)
        .map(|(id, _)| id.clone())
        .collect();
    if !untrained.is_empty() {
        log::info!("{} items appear in no multi-item room and stay untrained", untrained.len());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = CbowParams::init(vocab.len(), config.dim, &mut rng);
    let sampler = NegativeSampler::new(&freq);
    let total_steps = (config.epochs * encoded.len()).max(1) as f64;
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut report = CbowReport::default();
    let mut negatives = Vec::with_capacity(config.negatives);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let (target, ref context) = encoded[i];
            negatives.clear();
            // members of the pair are never negatives; give up after a bounded number of draws
            for _ in 0..config.negatives * 4 {
                if negatives.len() == config.negatives {
                    break;
                }
                let n = sampler.sample(&mut rng);
                if n != target && !context.contains(&n) {
                    negatives.push(n);
                }
            }
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
            let grad = pair_gradient(&params, target, context, &negatives);
            grad.apply(&mut params, context, lr);
            epoch_loss += grad.loss;
            step += 1;
        }
        let mean = epoch_loss / encoded.len() as f64;
        if !mean.is_finite() || params.input.iter().chain(&params.output).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "training diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        report.epoch_losses.push(mean);
    }
    Ok((table_from_params(&params, vocab, *config, untrained)?, report))
}

impl EmbeddingTable {
    pub fn vector(&self, id: &ItemId) -> Option<&FeatureVector> {
        self.ids.iter().position(|i| i == id).map(|p| &self.input[p])
    }

    pub fn as_map(&self) -> HashMap<&ItemId, &FeatureVector> {
        self.ids.iter().zip(&self.input).collect()
    }

    /// Cosine-searchable index over the item embeddings, partitioned by class
    /// when a corpus is given.
    pub fn to_index(&self, corpus: Option<&Corpus>) -> Result<VectorIndex> {
        let entries: Vec<_> = self.ids.iter().cloned().zip(self.input.iter().cloned()).collect();
        match corpus {
            Some(c) => VectorIndex::build_partitioned(entries, c),
            None => VectorIndex::build(entries),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        write_str(&mut w, &serde_json::to_string(&self.config).map_err(std::io::Error::other)?)?;
        w.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        for (id, _) in self.ids.iter().zip(&self.input) {
            write_str(&mut w, id.as_str())?;
            w.write_all(&[self.untrained.contains(id) as u8])?;
        }
        for block in [&self.input, &self.output] {
            VectorBlock {
                dim: self.dim,
                rows: block.iter().map(|v| v.as_slice().to_vec()).collect(),
            }
            .write_binary(&mut w)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> std::io::Result<Self> {
        let invalid = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(invalid("not an embedding table".into()));
        }
        read_u32(&mut r)?;
        let config: CbowConfig = serde_json::from_str(&read_str(&mut r)?).map_err(|e| invalid(e.to_string()))?;
        let count = read_u32(&mut r)? as usize;
        let mut ids = Vec::with_capacity(count);
        let mut untrained = BTreeSet::new();
        for _ in 0..count {
            let id = ItemId::new(read_str(&mut r)?).map_err(|e| invalid(e.to_string()))?;
            let mut flag = [0u8];
            r.read_exact(&mut flag)?;
            if flag[0] == 1 {
                untrained.insert(id.clone());
            }
            ids.push(id);
        }
        let mut blocks = Vec::new();
        for _ in 0..2 {
            let b = VectorBlock::read_binary(&mut r)?;
            if b.len() != count {
                return Err(invalid("vector block size does not match id table".into()));
            }
            blocks.push(
                b.rows
                    .into_iter()
                    .map(FeatureVector::new)
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| invalid(e.to_string()))?,
            );
        }
        let output = blocks.pop().unwrap();
        let input = blocks.pop().unwrap();
        Ok(EmbeddingTable {
            dim: input.first().map_or(config.dim, FeatureVector::dim),
            ids,
            input,
            output,
            config,
            untrained,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read(&bytes[..]).map_err(|e| Error::malformed(path, "embedding table", e.to_string()))
    }
}

/// Mean pairwise cosine distance within labels (intra) and across labels (inter).
/// Labels with a single member add nothing to intra.
pub fn cluster_quality(table: &EmbeddingTable, labels: &BTreeMap<ItemId, String>) -> Result<(f64, f64)> {
    let labelled: Vec<(&FeatureVector, &String)> = table
        .ids
        .iter()
        .zip(&table.input)
        .map(|(id, v)| labels.get(id).map(|l| (v, l)).ok_or_else(|| Error::UnknownItem(id.to_string())))
        .collect::<Result<_>>()?;
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for (i, (a, la)) in labelled.iter().enumerate() {
        for (b, lb) in &labelled[i + 1..] {
            let d = 1.0 - vector::cosine(a.as_slice(), b.as_slice());
            if la == lb {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok((mean(intra, n_intra), mean(inter, n_inter)))
}
