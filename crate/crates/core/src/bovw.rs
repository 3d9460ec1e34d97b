//! Bag-of-visual-words baseline: a k-means codebook over local descriptors,
//! L2-normalized term-frequency histograms, and histogram retrieval.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ItemId;
use crate::error::{Error, Result};
use crate::vecindex::{RankedList, ScoreOrder, VectorIndex};
use crate::vector::{read_u32, FeatureVector, VectorBlock};

pub const DEFAULT_VISUAL_WORDS: usize = 1000;

const CODEBOOK_MAGIC: &[u8; 4] = b"SSCB";

/// Local descriptors extracted from one image. May be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub image_ref: String,
    pub descriptors: Vec<FeatureVector>,
}

impl DescriptorSet {
    /// Reads `<image_ref>.desc` below `root`.
    pub fn load(root: &Path, image_ref: &str) -> Result<Self> {
        let path = descriptor_path(root, image_ref);
        let block = VectorBlock::load(&path)?;
        Ok(DescriptorSet {
            image_ref: image_ref.to_string(),
            descriptors: block.rows.into_iter().map(FeatureVector::new).collect::<Result<_>>()?,
        })
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let dim = self.descriptors.first().map_or(0, FeatureVector::dim);
        VectorBlock::new(dim, self.descriptors.iter().map(|d| d.as_slice().to_vec()).collect())?
            .save(&descriptor_path(root, &self.image_ref))
    }
}

pub fn descriptor_path(root: &Path, image_ref: &str) -> std::path::PathBuf {
    root.join(format!("{image_ref}.desc"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves further than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: DEFAULT_VISUAL_WORDS,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centroids: Vec<FeatureVector>,
    pub training_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KMeansReport {
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
    pub converged: bool,
    pub repaired_clusters: usize,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, FeatureVector::dim)
    }

    /// Index of the closest centroid; ties go to the lower index.
    pub fn nearest(&self, v: &[f32]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = crate::vector::squared_euclidean(v, c.as_slice());
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CODEBOOK_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&self.training_seed.to_le_bytes())?;
        VectorBlock {
            dim: self.dim(),
            rows: self.centroids.iter().map(|c| c.as_slice().to_vec()).collect(),
        }
        .write_binary(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = &bytes[..];
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != CODEBOOK_MAGIC {
            return Err(Error::malformed(path, "header", "not a codebook file"));
        }
        read_u32(&mut r).map_err(|e| Error::io(path, e))?;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed).map_err(|e| Error::io(path, e))?;
        let block = VectorBlock::read_binary(r).map_err(|e| Error::io(path, e))?;
        Ok(Codebook {
            centroids: block.rows.into_iter().map(FeatureVector::new).collect::<Result<_>>()?,
            training_seed: u64::from_le_bytes(seed),
        })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just above the final partial sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[pick]));
        }
        centroids.push(points[pick].clone());
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels[i] = best.0;
        dists[i] = best.1;
        inertia += best.1;
    }
    inertia
}

/// Lloyd's algorithm from a seeded k-means++ start.
///
/// Empty clusters are moved onto the point farthest from its own centroid,
/// so the codebook always has exactly `k` words.
pub fn train_codebook(sets: &[DescriptorSet], config: &KMeansConfig) -> Result<(Codebook, KMeansReport)> {
    let k = config.k;
    if k < 2 {
        return Err(Error::InvalidConfig("a codebook needs k >= 2".into()));
    }
    let points: Vec<Vec<f64>> = sets
        .iter()
        .flat_map(|s| &s.descriptors)
        .map(|d| d.as_slice().iter().map(|&v| v as f64).collect())
        .collect();
    if points.len() < k {
        return Err(Error::TooFewDescriptors {
            needed: k,
            found: points.len(),
        });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().position(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            id: format!("descriptor {bad}"),
            expected: dim,
            found: points[bad].len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = init_plus_plus(&points, k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut dists = vec![0f64; points.len()];
    let mut report = KMeansReport::default();

    for _ in 0..config.max_iters.max(1) {
        let inertia = assign(&points, &centroids, &mut labels, &mut dists);
        if let Some(&prev) = report.inertia.last() {
            assert!(
                inertia <= prev + 1e-9 * prev.abs().max(1.0),
                "k-means inertia increased from {prev} to {inertia}"
            );
        }
        report.inertia.push(inertia);

        let mut sums = vec![vec![0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / n as f64).collect()
                }
            })
            .collect();

        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
            for (c, &p) in empty.iter().zip(&order) {
                next[*c] = points[p].clone();
                report.repaired_clusters += 1;
            }
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < config.tol && empty.is_empty() {
            report.converged = true;
            break;
        }
    }
    let final_inertia = assign(&points, &centroids, &mut labels, &mut dists);
    report.inertia.push(final_inertia);

    let centroids = centroids
        .iter()
        .map(|c| FeatureVector::from_f64(c))
        .collect::<Result<_>>()?;
    Ok((
        Codebook {
            centroids,
            training_seed: config.seed,
        },
        report,
    ))
}

/// L2-normalized visual-word histogram. All-zero (and `empty`) when the
/// descriptor set had no descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct BovwHistogram {
    pub counts: Vec<f32>,
    pub empty: bool,
}

impl BovwHistogram {
    pub fn as_vector(&self) -> Option<FeatureVector> {
        if self.empty {
            None
        } else {
            FeatureVector::new(self.counts.clone()).ok()
        }
    }
}

pub fn quantize(set: &DescriptorSet, codebook: &Codebook) -> Result<BovwHistogram> {
    let k = codebook.k();
    if set.descriptors.is_empty() {
        return Ok(BovwHistogram {
            counts: vec![0.0; k],
            empty: true,
        });
    }
    let mut counts = vec![0f64; k];
    for d in &set.descriptors {
        if d.dim() != codebook.dim() {
            return Err(Error::DimensionMismatch {
                id: set.image_ref.clone(),
                expected: codebook.dim(),
                found: d.dim(),
            });
        }
        counts[codebook.nearest(d.as_slice())] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(BovwHistogram {
        counts: counts.iter().map(|c| (c / norm) as f32).collect(),
        empty: false,
    })
}

/// Retrieval over histograms with the same exact Euclidean search as
/// [`VectorIndex`]. Images with empty histograms cannot be retrieved.
#[derive(Debug, Clone)]
pub struct BovwIndex {
    index: VectorIndex,
    skipped: Vec<ItemId>,
}

impl BovwIndex {
    pub fn build(histograms: Vec<(ItemId, BovwHistogram)>) -> Result<Self> {
        let mut skipped = Vec::new();
        let mut entries = Vec::new();
        for (id, h) in histograms {
            match h.as_vector() {
                Some(v) => entries.push((id, v)),
                None => skipped.push(id),
            }
        }
        if !skipped.is_empty() {
            log::warn!("{} images without descriptors left out of the BoVW index", skipped.len());
        }
        Ok(BovwIndex {
            index: VectorIndex::build(entries)?,
            skipped,
        })
    }

    pub fn skipped(&self) -> &[ItemId] {
        &self.skipped
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    /// An empty query histogram retrieves nothing.
    pub fn search(&self, query: &BovwHistogram, k: usize) -> Result<RankedList> {
        match query.as_vector() {
            None => Ok(RankedList::empty(ScoreOrder::AscendingDistance)),
            Some(v) => self.index.knn(&v, k, None),
        }
    }
}
