//! Naive reference implementations, written without the library's helpers.

use std::collections::{BTreeMap, BTreeSet};

use stylesearch_core::{Corpus, ItemId, RoomId};

pub fn normalize(v: &[f32]) -> Vec<f32> {
    let mut s = 0.0f64;
    for &x in v {
        s += x as f64 * x as f64;
    }
    let n = s.sqrt();
    v.iter().map(|&x| (x as f64 / n) as f32).collect()
}

/// Exhaustive scan: every distance, full sort by (distance, id).
pub fn knn(ids: &[ItemId], unit_rows: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(ItemId, f64)> {
    let q = normalize(query);
    let mut all = Vec::with_capacity(ids.len());
    for (id, row) in ids.iter().zip(unit_rows) {
        let mut s = 0.0f64;
        for (a, b) in q.iter().zip(row) {
            let d = *a as f64 - *b as f64;
            s += d * d;
        }
        all.push((id.clone(), s.sqrt()));
    }
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn cooccurrence(corpus: &Corpus, a: &ItemId, b: &ItemId) -> u32 {
    let mut n = 0;
    for room in corpus.rooms.values() {
        if room.ground_truth.contains(a) && room.ground_truth.contains(b) {
            n += 1;
        }
    }
    n
}

pub fn max_off_diagonal(corpus: &Corpus) -> u32 {
    let ids: Vec<&ItemId> = corpus.items.keys().collect();
    let mut best = 0;
    for i in 0..ids.len() {
        for j in 0..ids.len() {
            if i != j {
                best = best.max(cooccurrence(corpus, ids[i], ids[j]));
            }
        }
    }
    best
}

pub fn style_similarity(corpus: &Corpus, a: &ItemId, b: &ItemId) -> f64 {
    cooccurrence(corpus, a, b) as f64 / max_off_diagonal(corpus) as f64
}

pub fn hit_at_k(results: &BTreeMap<RoomId, Vec<ItemId>>, gt: &BTreeMap<RoomId, BTreeSet<ItemId>>, k: usize) -> f64 {
    let mut hits = 0usize;
    for (room, list) in results {
        let mut found = false;
        for item in list.iter().take(k) {
            if gt[room].contains(item) {
                found = true;
            }
        }
        if found {
            hits += 1;
        }
    }
    hits as f64 / results.len() as f64
}

pub fn mean_similarity(corpus: &Corpus, queries: &[(ItemId, Vec<ItemId>)]) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (q, list) in queries {
        for item in list {
            if item != q {
                total += style_similarity(corpus, q, item);
                n += 1;
            }
        }
    }
    total / n as f64
}

pub fn mean_cosine_gap(ids: &[ItemId], vectors: &[Vec<f32>], labels: &BTreeMap<ItemId, String>) -> f64 {
    let (mut intra, mut ni, mut inter, mut no) = (0.0, 0, 0.0, 0);
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let (a, b) = (normalize(&vectors[i]), normalize(&vectors[j]));
            let c: f64 = a.iter().zip(&b).map(|(x, y)| *x as f64 * *y as f64).sum();
            if labels[&ids[i]] == labels[&ids[j]] {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                no += 1;
            }
        }
    }
    intra / ni as f64 - inter / no as f64
}

/// Central finite-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &mut [f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    const H: f64 = 1e-5;
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let v = x[i];
        x[i] = v + H;
        let up = f(x);
        x[i] = v - H;
        let down = f(x);
        x[i] = v;
        g[i] = (up - down) / (2.0 * H);
    }
    g
}

/// Largest absolute difference relative to the largest gradient entry.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(1e-12f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
