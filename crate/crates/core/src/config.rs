//! Run configuration shared by the command line and the server.
//!
//! Every key is optional; relative artifact paths resolve against the corpus
//! root.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bovw::KMeansConfig;
use crate::detect::FilterConfig;
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::query_encoder::EncoderConfig;
use crate::style_embed::CbowConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub index: PathBuf,
    pub embeddings: PathBuf,
    pub encoder: PathBuf,
    pub words: PathBuf,
    pub codebook: PathBuf,
    pub labels: PathBuf,
    pub reports: PathBuf,
    /// Root for `/media/` file serving. Defaults to the corpus root.
    pub media: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            index: "artifacts/visual.ssix".into(),
            embeddings: "artifacts/embeddings.ssem".into(),
            encoder: "artifacts/encoder.ssqe".into(),
            words: "words.txt".into(),
            codebook: "artifacts/codebook.sscb".into(),
            labels: "labels.json".into(),
            reports: "reports".into(),
            media: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub addr: String,
    /// Allowed CORS origins; empty allows any origin.
    pub cors_origins: Vec<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            addr: "127.0.0.1:8080".into(),
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    pub root: Option<PathBuf>,
    /// Overrides every component seed when set.
    pub seed: Option<u64>,
    /// Partition the visual index by item class.
    pub per_class_index: Option<bool>,
    pub paths: Paths,
    pub detect: FilterConfig,
    pub cbow: CbowConfig,
    pub encoder: EncoderConfig,
    pub kmeans: KMeansConfig,
    pub experiment: ExperimentConfig,
    pub server: ServerConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, format!("line {}", e.line()), e.to_string()))
    }

    /// Applies the global seed to every seeded component.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.cbow.seed = s;
            self.encoder.seed = s;
            self.kmeans.seed = s;
            self.experiment.seed = s;
        }
        self
    }

    pub fn per_class_index(&self) -> bool {
        self.per_class_index.unwrap_or(true)
    }

    pub fn resolve(&self, root: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            root.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let c: Config = serde_json::from_str(r#"{"detect": {"threshold": 0.2}, "seed": 3}"#).unwrap();
        assert_eq!(c.detect.threshold, 0.2);
        assert_eq!(c.detect.iou_threshold, 0.5);
        let c = c.with_seed(None);
        assert_eq!(c.cbow.seed, 3);
        assert_eq!(c.with_seed(Some(9)).kmeans.seed, 9);
    }
}
