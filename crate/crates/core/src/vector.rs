//! Dense feature vectors and the on-disk vector block format.
//!
//! Binary layout (little endian): `u32 count`, `u32 dim`, then `count * dim`
//! `f32` values in row-major order. Files ending in `.txt` use the text form
//! instead: one vector per line, components separated by whitespace.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-dimension real vector. All components are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f32>);

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("feature vector must be non-empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(FeatureVector(values))
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Returns `self / ||self||_2`.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(FeatureVector(
            self.0.iter().map(|&v| (v as f64 / n) as f32).collect(),
        ))
    }

    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl AsRef<[f32]> for FeatureVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

pub fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn squared_euclidean(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

/// Cosine similarity. Zero vectors have similarity 0 with everything.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// A block of equally sized rows.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlock {
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
}

impl VectorBlock {
    pub fn new(dim: usize, rows: Vec<Vec<f32>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: format!("row {i}"),
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        Ok(VectorBlock { dim, rows })
    }

    pub fn from_vectors<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self> {
        let rows: Vec<Vec<f32>> = vectors.into_iter().map(|v| v.as_slice().to_vec()).collect();
        let dim = rows.first().map_or(0, Vec::len);
        Self::new(dim, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.rows.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for row in &self.rows {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<Self> {
        let count = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; dim * 4];
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            rows.push(
                buf.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            );
        }
        Ok(VectorBlock { dim, rows })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_text(path: &Path, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::malformed(path, format!("line {}", lineno + 1), e.to_string()))?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::DimensionMismatch {
                        id: format!("{} line {}", path.display(), lineno + 1),
                        expected: d,
                        found: row.len(),
                    })
                }
                _ => {}
            }
            rows.push(row);
        }
        Ok(VectorBlock {
            dim: dim.unwrap_or(0),
            rows,
        })
    }

    /// Loads a block, picking the text parser for `.txt` files and the binary one otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        if is_text_path(path) {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Self::parse_text(path, &text)
        } else {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let expected_len = |count: usize, dim: usize| 8 + count * dim * 4;
            if bytes.len() < 8 {
                return Err(Error::malformed(path, "header", "file shorter than 8 bytes"));
            }
            let count = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
            let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
            if bytes.len() != expected_len(count, dim) {
                return Err(Error::malformed(
                    path,
                    "header",
                    format!(
                        "header declares {count}x{dim} values but payload holds {} bytes",
                        bytes.len() - 8
                    ),
                ));
            }
            Self::read_binary(&bytes[..]).map_err(|e| Error::io(path, e))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        if is_text_path(path) {
            fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
        } else {
            let mut buf = Vec::with_capacity(8 + self.rows.len() * self.dim * 4);
            self.write_binary(&mut buf).map_err(|e| Error::io(path, e))?;
            fs::write(path, buf).map_err(|e| Error::io(path, e))
        }
    }
}

fn is_text_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "txt")
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
