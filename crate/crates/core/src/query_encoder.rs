//! Regression from free-text queries to the style-embedding space.
//!
//! Queries are token sequences looked up in a frozen word-vector table. Two
//! encoders share one contract:
//! - `MeanAffine`: `W * mean(word vectors) + b`;
//! - `Recurrent`: a single GRU layer whose final state is projected to the
//!   embedding space.
//!
//! Both are trained with Adam on the mean squared error between the encoded
//! item description and the item's style embedding. Retrieval then ranks
//! items by cosine similarity to the encoded query.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus};
use crate::error::{Error, Result};
use crate::style_embed::EmbeddingTable;
use crate::vecindex::{Modality, RankedList, VectorIndex};
use crate::vector::{read_u32, FeatureVector};

const MODEL_MAGIC: &[u8; 4] = b"SSQE";

/// Pretrained word vectors. Never modified by training.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl WordVectors {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<f32>>) -> Result<Self> {
        for (t, v) in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: t.clone(),
                    expected: dim,
                    found: v.len(),
                });
            }
        }
        let vectors = vectors.into_iter().map(|(t, v)| (t.to_lowercase(), v)).collect();
        Ok(WordVectors { dim, vectors })
    }

    /// Parses the common text format: a `count dim` header line, then
    /// `token v1 ... vdim` per line.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::malformed(path, "line 1", "missing header"))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::malformed(path, "line 1", format!("bad header: {e}")))?;
        let [count, dim] = nums[..] else {
            return Err(Error::malformed(path, "line 1", "header must be `count dim`"));
        };
        let mut vectors = HashMap::with_capacity(count);
        for (lineno, line) in lines {
            let record = format!("line {}", lineno + 1);
            let mut fields = line.split_whitespace();
            let token = fields.next().unwrap().to_lowercase();
            let v: Vec<f32> = fields
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::malformed(path, &record, format!("{e}")))?;
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: format!("{} {record}", path.display()),
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::malformed(path, record, "non-finite value"));
            }
            vectors.insert(token, v);
        }
        if vectors.len() != count {
            log::warn!(
                "{}: header declares {count} vectors, file holds {}",
                path.display(),
                vectors.len()
            );
        }
        Ok(WordVectors { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    /// Serializes with tokens in sorted order.
    pub fn to_text(&self) -> String {
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        let mut out = format!("{} {}\n", tokens.len(), self.dim);
        for t in tokens {
            out.push_str(t);
            for v in &self.vectors[t] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderVariant {
    #[default]
    MeanAffine,
    Recurrent,
}

/// What to do with tokens missing from the word vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    #[default]
    Skip,
    /// Keep the position with a zero vector.
    Zero,
}

/// Looks up query tokens. Fails when the query is empty or no token is known.
pub fn embed_tokens(words: &WordVectors, tokens: &[String], oov: OovPolicy) -> Result<Vec<Vec<f64>>> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if !tokens.iter().any(|t| words.contains(t)) {
        return Err(Error::AllTokensOov { tokens: tokens.to_vec() });
    }
    Ok(tokens
        .iter()
        .filter_map(|t| match (words.get(t), oov) {
            (Some(v), _) => Some(v.iter().map(|&x| x as f64).collect()),
            (None, OovPolicy::Zero) => Some(vec![0.0; words.dim()]),
            (None, OovPolicy::Skip) => None,
        })
        .collect())
}

/// Parameter layout of a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    variant: EncoderVariant,
    input: usize,
    output: usize,
    hidden: usize,
}

/// Offsets of the GRU blocks: `[Wz Uz bz Wr Ur br Wh Uh bh Wo bo]`.
#[derive(Debug, Clone, Copy)]
struct GruOffsets {
    gate: [usize; 3],
    wo: usize,
    bo: usize,
}

impl Layout {
    fn gate_len(&self) -> usize {
        self.hidden * self.input + self.hidden * self.hidden + self.hidden
    }

    fn gru(&self) -> GruOffsets {
        let g = self.gate_len();
        GruOffsets {
            gate: [0, g, 2 * g],
            wo: 3 * g,
            bo: 3 * g + self.output * self.hidden,
        }
    }

    fn len(&self) -> usize {
        match self.variant {
            EncoderVariant::MeanAffine => self.output * self.input + self.output,
            EncoderVariant::Recurrent => 3 * self.gate_len() + self.output * self.hidden + self.output,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    layout: Layout,
    pub oov: OovPolicy,
    params: Vec<f64>,
}

/// `out += M x` for row-major `M` of shape `rows x x.len()`.
fn matvec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += M^T y`.
fn matvec_t_add(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (yi, row) in y.iter().zip(m.chunks(cols)) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += yi * a;
        }
    }
}

/// `G += y x^T`.
fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (yi, row) in y.iter().zip(g.chunks_mut(cols)) {
        for (a, b) in row.iter_mut().zip(x) {
            *a += yi * b;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct GruStep {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

impl EncoderModel {
    /// Randomly initialized model.
    pub fn init(variant: EncoderVariant, input: usize, output: usize, hidden: usize, oov: OovPolicy, seed: u64) -> Result<Self> {
        if input == 0 || output == 0 || (variant == EncoderVariant::Recurrent && hidden == 0) {
            return Err(Error::InvalidConfig("encoder dimensions must be positive".into()));
        }
        let layout = Layout {
            variant,
            input,
            output,
            hidden: if variant == EncoderVariant::Recurrent { hidden } else { 0 },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.len()];
        match variant {
            EncoderVariant::MeanAffine => {
                let a = 1.0 / (input as f64).sqrt();
                for w in &mut params[..output * input] {
                    *w = rng.random_range(-a..a);
                }
            }
            EncoderVariant::Recurrent => {
                let a = 1.0 / (hidden as f64).sqrt();
                let off = layout.gru();
                let h = layout.hidden;
                let weight_len = h * input + h * h;
                for start in off.gate {
                    for w in &mut params[start..start + weight_len] {
                        *w = rng.random_range(-a..a);
                    }
                }
                for w in &mut params[off.wo..off.bo] {
                    *w = rng.random_range(-a..a);
                }
            }
        }
        Ok(EncoderModel { layout, oov, params })
    }

    /// Mean-affine model with `W = I`, `b = 0`.
    pub fn identity(dim: usize) -> Self {
        let layout = Layout {
            variant: EncoderVariant::MeanAffine,
            input: dim,
            output: dim,
            hidden: 0,
        };
        let mut params = vec![0.0; layout.len()];
        for i in 0..dim {
            params[i * dim + i] = 1.0;
        }
        EncoderModel {
            layout,
            oov: OovPolicy::Skip,
            params,
        }
    }

    pub fn variant(&self) -> EncoderVariant {
        self.layout.variant
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input
    }

    pub fn output_dim(&self) -> usize {
        self.layout.output
    }

    pub fn hidden_dim(&self) -> usize {
        self.layout.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_mean(&self, inputs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let (d, n) = (self.layout.input, self.layout.output);
        let mut mean = vec![0.0; d];
        for x in inputs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        let len = inputs.len() as f64;
        mean.iter_mut().for_each(|m| *m /= len);
        let mut out = self.params[n * d..].to_vec();
        matvec_add(&self.params[..n * d], &mean, &mut out);
        (out, mean)
    }

    fn forward_gru(&self, inputs: &[Vec<f64>]) -> (Vec<f64>, Vec<GruStep>, Vec<f64>) {
        let (d, hd, n) = (self.layout.input, self.layout.hidden, self.layout.output);
        let off = self.layout.gru();
        let p = &self.params;
        let gate = |g: usize| {
            let s = off.gate[g];
            (&p[s..s + hd * d], &p[s + hd * d..s + hd * d + hd * hd], &p[s + hd * d + hd * hd..s + self.layout.gate_len()])
        };
        let mut h = vec![0.0; hd];
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (wz, uz, bz) = gate(0);
            let (wr, ur, br) = gate(1);
            let (wh, uh, bh) = gate(2);
            let mut z = bz.to_vec();
            matvec_add(wz, x, &mut z);
            matvec_add(uz, &h, &mut z);
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
            let mut r = br.to_vec();
            matvec_add(wr, x, &mut r);
            matvec_add(ur, &h, &mut r);
            r.iter_mut().for_each(|v| *v = sigmoid(*v));
            let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
            let mut cand = bh.to_vec();
            matvec_add(wh, x, &mut cand);
            matvec_add(uh, &rh, &mut cand);
            cand.iter_mut().for_each(|v| *v = v.tanh());
            let next: Vec<f64> = (0..hd).map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i]).collect();
            steps.push(GruStep {
                h_prev: std::mem::replace(&mut h, next),
                z,
                r,
                cand,
            });
        }
        let mut out = p[off.bo..off.bo + n].to_vec();
        matvec_add(&p[off.wo..off.bo], &h, &mut out);
        (out, steps, h)
    }

    fn forward(&self, inputs: &[Vec<f64>]) -> Vec<f64> {
        match self.layout.variant {
            EncoderVariant::MeanAffine => self.forward_mean(inputs).0,
            EncoderVariant::Recurrent => self.forward_gru(inputs).0,
        }
    }

    /// Accumulates `d loss / d params` given `d loss / d output`.
    fn backward(&self, inputs: &[Vec<f64>], grad_out: &[f64], grad: &mut [f64]) {
        let (d, n) = (self.layout.input, self.layout.output);
        match self.layout.variant {
            EncoderVariant::MeanAffine => {
                let (_, mean) = self.forward_mean(inputs);
                outer_add(&mut grad[..n * d], grad_out, &mean);
                for (g, v) in grad[n * d..].iter_mut().zip(grad_out) {
                    *g += v;
                }
            }
            EncoderVariant::Recurrent => self.backward_gru(inputs, grad_out, grad),
        }
    }

    fn backward_gru(&self, inputs: &[Vec<f64>], grad_out: &[f64], grad: &mut [f64]) {
        let (d, hd) = (self.layout.input, self.layout.hidden);
        let off = self.layout.gru();
        let (_, steps, h_last) = self.forward_gru(inputs);
        let p = &self.params;

        outer_add(&mut grad[off.wo..off.bo], grad_out, &h_last);
        for (g, v) in grad[off.bo..].iter_mut().zip(grad_out) {
            *g += v;
        }
        let mut dh = vec![0.0; hd];
        matvec_t_add(&p[off.wo..off.bo], grad_out, &mut dh);

        let w_len = hd * d;
        let u_len = hd * hd;
        for (x, st) in inputs.iter().zip(&steps).rev() {
            let mut dh_prev: Vec<f64> = (0..hd).map(|i| dh[i] * (1.0 - st.z[i])).collect();
            // candidate
            let da_h: Vec<f64> = (0..hd)
                .map(|i| dh[i] * st.z[i] * (1.0 - st.cand[i] * st.cand[i]))
                .collect();
            let rh: Vec<f64> = st.r.iter().zip(&st.h_prev).map(|(a, b)| a * b).collect();
            let s = off.gate[2];
            outer_add(&mut grad[s..s + w_len], &da_h, x);
            outer_add(&mut grad[s + w_len..s + w_len + u_len], &da_h, &rh);
            for (g, v) in grad[s + w_len + u_len..s + w_len + u_len + hd].iter_mut().zip(&da_h) {
                *g += v;
            }
            let mut d_rh = vec![0.0; hd];
            matvec_t_add(&p[s + w_len..s + w_len + u_len], &da_h, &mut d_rh);
            for i in 0..hd {
                dh_prev[i] += d_rh[i] * st.r[i];
            }
            // update and reset gates
            let da_z: Vec<f64> = (0..hd)
                .map(|i| dh[i] * (st.cand[i] - st.h_prev[i]) * st.z[i] * (1.0 - st.z[i]))
                .collect();
            let da_r: Vec<f64> = (0..hd)
                .map(|i| d_rh[i] * st.h_prev[i] * st.r[i] * (1.0 - st.r[i]))
                .collect();
            for (g, da) in [(0, &da_z), (1, &da_r)] {
                let s = off.gate[g];
                outer_add(&mut grad[s..s + w_len], da, x);
                outer_add(&mut grad[s + w_len..s + w_len + u_len], da, &st.h_prev);
                for (gv, v) in grad[s + w_len + u_len..s + w_len + u_len + hd].iter_mut().zip(da.iter()) {
                    *gv += v;
                }
                matvec_t_add(&p[s + w_len..s + w_len + u_len], da, &mut dh_prev);
            }
            dh = dh_prev;
        }
    }

    /// Encodes a tokenized query into the embedding space.
    pub fn encode(&self, words: &WordVectors, tokens: &[String]) -> Result<FeatureVector> {
        self.check_words(words)?;
        let inputs = embed_tokens(words, tokens, self.oov)?;
        FeatureVector::from_f64(&self.forward(&inputs))
    }

    pub fn encode_text(&self, words: &WordVectors, text: &str) -> Result<FeatureVector> {
        self.encode(words, &tokenize(text))
    }

    fn check_words(&self, words: &WordVectors) -> Result<()> {
        if words.dim() != self.layout.input {
            return Err(Error::DimensionMismatch {
                id: "word vectors".into(),
                expected: self.layout.input,
                found: words.dim(),
            });
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        let variant = match self.layout.variant {
            EncoderVariant::MeanAffine => 0u32,
            EncoderVariant::Recurrent => 1,
        };
        let oov = match self.oov {
            OovPolicy::Skip => 0u32,
            OovPolicy::Zero => 1,
        };
        for v in [variant, oov, self.layout.input as u32, self.layout.output as u32, self.layout.hidden as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> std::io::Result<Self> {
        let invalid = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(invalid("not an encoder model"));
        }
        read_u32(&mut r)?;
        let variant = match read_u32(&mut r)? {
            0 => EncoderVariant::MeanAffine,
            1 => EncoderVariant::Recurrent,
            _ => return Err(invalid("unknown variant")),
        };
        let oov = match read_u32(&mut r)? {
            0 => OovPolicy::Skip,
            1 => OovPolicy::Zero,
            _ => return Err(invalid("unknown oov policy")),
        };
        let layout = Layout {
            variant,
            input: read_u32(&mut r)? as usize,
            output: read_u32(&mut r)? as usize,
            hidden: read_u32(&mut r)? as usize,
        };
        let count = read_u32(&mut r)? as usize;
        if count != layout.len() {
            return Err(invalid("parameter count does not match layout"));
        }
        let mut params = Vec::with_capacity(count);
        let mut b = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut b)?;
            params.push(f64::from_le_bytes(b));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("non-finite parameter"));
        }
        Ok(EncoderModel { layout, oov, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read(&bytes[..]).map_err(|e| Error::malformed(path, "encoder model", e.to_string()))
    }
}

/// One description with its target embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSample {
    pub inputs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl EncoderSample {
    pub fn new(words: &WordVectors, tokens: &[String], target: &FeatureVector, oov: OovPolicy) -> Result<Self> {
        Ok(EncoderSample {
            inputs: embed_tokens(words, tokens, oov)?,
            target: target.as_slice().iter().map(|&v| v as f64).collect(),
        })
    }
}

/// Mean over samples of `||m(t) - f||^2`, and its gradient.
pub fn mse_and_gradient(model: &EncoderModel, samples: &[EncoderSample]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        let out = model.forward(&s.inputs);
        let diff: Vec<f64> = out.iter().zip(&s.target).map(|(o, t)| o - t).collect();
        loss += diff.iter().map(|d| d * d).sum::<f64>();
        let g: Vec<f64> = diff.iter().map(|d| 2.0 * d * scale).collect();
        model.backward(&s.inputs, &g, &mut grad);
    }
    (loss * scale, grad)
}

pub fn mse(model: &EncoderModel, samples: &[EncoderSample]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            model
                .forward(&s.inputs)
                .iter()
                .zip(&s.target)
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
        })
        .sum();
    total / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    /// GRU state size; ignored by the mean-affine variant.
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub oov: OovPolicy,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            variant: EncoderVariant::MeanAffine,
            hidden: 32,
            epochs: 300,
            learning_rate: 0.01,
            batch_size: 16,
            seed: 0,
            oov: OovPolicy::Skip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncoderReport {
    pub initial_mse: f64,
    pub final_mse: f64,
    /// Training-set MSE after each epoch.
    pub history: Vec<f64>,
    pub samples: usize,
    /// Items left out for lacking an embedding or any known description token.
    pub skipped: usize,
}

/// Builds training samples from item descriptions and their embeddings.
pub fn training_samples(
    corpus: &Corpus,
    table: &EmbeddingTable,
    words: &WordVectors,
    oov: OovPolicy,
) -> (Vec<EncoderSample>, usize) {
    let embeddings = table.as_map();
    let mut samples = Vec::new();
    let mut skipped = 0;
    for item in corpus.items.values() {
        let sample = embeddings
            .get(&item.id)
            .filter(|_| !table.untrained.contains(&item.id))
            .and_then(|f| EncoderSample::new(words, &item.description, f, oov).ok());
        match sample {
            Some(s) => samples.push(s),
            None => skipped += 1,
        }
    }
    (samples, skipped)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Fits an encoder to the given samples.
pub fn fit_encoder(
    samples: &[EncoderSample],
    input_dim: usize,
    output_dim: usize,
    config: &EncoderConfig,
) -> Result<(EncoderModel, EncoderReport)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no trainable items"));
    }
    if config.batch_size == 0 || config.learning_rate <= 0.0 {
        return Err(Error::InvalidConfig("batch size and learning rate must be positive".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.target.len() != output_dim) {
        return Err(Error::DimensionMismatch {
            id: "training target".into(),
            expected: output_dim,
            found: bad.target.len(),
        });
    }
    let mut model = EncoderModel::init(config.variant, input_dim, output_dim, config.hidden, config.oov, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_5e9);
    let mut adam = Adam::new(model.params.len(), config.learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = EncoderReport {
        initial_mse: mse(&model, samples),
        samples: samples.len(),
        ..Default::default()
    };
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let (_, grad) = mse_and_gradient(&model, &batch);
            adam.step(&mut model.params, &grad);
        }
        let loss = mse(&model, samples);
        if !loss.is_finite() {
            return Err(Error::InvalidConfig(format!("encoder training diverged at epoch {epoch}")));
        }
        report.history.push(loss);
    }
    report.final_mse = report.history.last().copied().unwrap_or(report.initial_mse);
    Ok((model, report))
}

/// Trains an encoder from item descriptions to their style embeddings.
pub fn train_encoder(
    corpus: &Corpus,
    table: &EmbeddingTable,
    words: &WordVectors,
    config: &EncoderConfig,
) -> Result<(EncoderModel, EncoderReport)> {
    let (samples, skipped) = training_samples(corpus, table, words, config.oov);
    if skipped > 0 {
        log::info!("{skipped} items without an embedding or known description token were skipped");
    }
    let (model, mut report) = fit_encoder(&samples, words.dim(), table.dim, config)?;
    report.skipped = skipped;
    Ok((model, report))
}

/// Top-`k` items by cosine similarity between the encoded query and the item
/// style embeddings held in `index`.
pub fn text_search(
    model: &EncoderModel,
    words: &WordVectors,
    index: &VectorIndex,
    tokens: &[String],
    k: usize,
    class_filter: Option<&str>,
) -> Result<RankedList> {
    let q = model.encode(words, tokens)?;
    Ok(index.top_cosine(&q, k, class_filter)?.with_modality(Modality::Text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words() -> WordVectors {
        let mut m = HashMap::new();
        m.insert("cozy".to_string(), vec![1.0, 2.0, 3.0]);
        m.insert("white".to_string(), vec![0.5, -1.0, 0.0]);
        m.insert("oak".to_string(), vec![0.0, 0.0, 4.0]);
        WordVectors::new(3, m).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identity_returns_word_vector() {
        let v = EncoderModel::identity(3).encode(&words(), &toks("cozy")).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn duplicate_tokens_do_not_change_mean() {
        let m = EncoderModel::init(EncoderVariant::MeanAffine, 3, 2, 0, OovPolicy::Skip, 4).unwrap();
        let w = words();
        assert_eq!(m.encode(&w, &toks("cozy cozy")).unwrap(), m.encode(&w, &toks("cozy")).unwrap());
    }

    #[test]
    fn skip_policy_ignores_oov() {
        let m = EncoderModel::init(EncoderVariant::MeanAffine, 3, 2, 0, OovPolicy::Skip, 4).unwrap();
        let w = words();
        assert_eq!(
            m.encode(&w, &toks("cozy zzyzx white")).unwrap(),
            m.encode(&w, &toks("cozy white")).unwrap()
        );
    }

    #[test]
    fn zero_policy_keeps_position() {
        let mut m = EncoderModel::identity(3);
        m.oov = OovPolicy::Zero;
        let v = m.encode(&words(), &toks("oak zzyzx")).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn empty_and_all_oov_queries_fail() {
        let m = EncoderModel::identity(3);
        assert!(matches!(m.encode(&words(), &[]), Err(Error::EmptyQuery)));
        match m.encode(&words(), &toks("qqq rrr")) {
            Err(Error::AllTokensOov { tokens }) => assert_eq!(tokens, vec!["qqq", "rrr"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mean_affine_is_order_invariant_recurrent_is_not() {
        let w = words();
        let mean = EncoderModel::init(EncoderVariant::MeanAffine, 3, 2, 0, OovPolicy::Skip, 1).unwrap();
        assert_eq!(
            mean.encode(&w, &toks("cozy white oak")).unwrap(),
            mean.encode(&w, &toks("oak cozy white")).unwrap()
        );
        let gru = EncoderModel::init(EncoderVariant::Recurrent, 3, 2, 4, OovPolicy::Skip, 1).unwrap();
        assert_ne!(
            gru.encode(&w, &toks("cozy white oak")).unwrap(),
            gru.encode(&w, &toks("oak cozy white")).unwrap()
        );
    }

    #[test]
    fn word_vector_text_round_trip() {
        let w = words();
        let parsed = WordVectors::parse(Path::new("w.txt"), &w.to_text()).unwrap();
        assert_eq!(parsed, w);
        let bad = WordVectors::parse(Path::new("w.txt"), "1 3\nfoo 1 2\n");
        assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn model_round_trip() {
        for variant in [EncoderVariant::MeanAffine, EncoderVariant::Recurrent] {
            let m = EncoderModel::init(variant, 3, 2, 5, OovPolicy::Zero, 8).unwrap();
            let mut buf = Vec::new();
            m.write(&mut buf).unwrap();
            assert_eq!(EncoderModel::read(&buf[..]).unwrap(), m);
        }
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let w = words();
        let target = FeatureVector::new(vec![1.0, 0.0]).unwrap();
        let samples = vec![EncoderSample::new(&w, &toks("cozy"), &target, OovPolicy::Skip).unwrap()];
        let cfg = EncoderConfig {
            epochs: 0,
            seed: 3,
            ..Default::default()
        };
        let (m, report) = fit_encoder(&samples, 3, 2, &cfg).unwrap();
        assert_eq!(m, EncoderModel::init(EncoderVariant::MeanAffine, 3, 2, 32, OovPolicy::Skip, 3).unwrap());
        assert_eq!(report.final_mse, report.initial_mse);
        assert!(matches!(fit_encoder(&[], 3, 2, &cfg), Err(Error::EmptyInput(_))));
    }
}
