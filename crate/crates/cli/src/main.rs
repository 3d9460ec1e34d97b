use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use stylesearch_core::query_encoder::EncoderVariant;

mod commands;
mod server;

#[derive(Parser, Debug)]
#[command(name = "stylesearch", version, about = "Interior-style retrieval engine")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every randomized step; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CorpusArg {
    /// Corpus directory holding corpus.json.
    #[arg(long, alias = "root", env = "STYLESEARCH_ROOT")]
    corpus: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and validate a corpus.
    Ingest {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Only validate; print nothing on success.
        #[arg(long)]
        check: bool,
    },
    /// Generate a synthetic corpus with descriptors, word vectors and labels.
    Synth {
        /// JSON generator spec; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Two clusters of five items, ten rooms each.
        #[arg(long, conflicts_with = "spec")]
        two_clique: bool,
    },
    /// Build the visual kNN index over item features.
    BuildIndex {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Partition by item class (default).
        #[arg(long, overrides_with = "no_per_class")]
        per_class: bool,
        #[arg(long)]
        no_per_class: bool,
    },
    /// Bag-of-visual-words codebook and histograms.
    Bovw {
        #[command(subcommand)]
        command: BovwCommand,
    },
    /// Train item style embeddings from room co-occurrence.
    TrainEmbeddings {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Label file (item id to cluster) for a cluster-separation report.
        #[arg(long)]
        report_clusters: Option<PathBuf>,
    },
    /// Train the text-query encoder.
    TrainEncoder {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        words: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the confidence threshold and overlap suppression to a detections file.
    DetectFilter {
        input: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        iou: Option<f64>,
        #[arg(long)]
        per_class_nms: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the evaluation experiment.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        out: PathBuf,
        /// Aligned text tables.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Recall curves as CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Listen address; port 0 picks a free port.
        #[arg(long)]
        addr: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum BovwCommand {
    /// Train a codebook on the item descriptors.
    Train {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Number of visual words.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantize item descriptors into histograms, one row per item.
    Encode {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
#[value(rename_all = "snake_case")]
enum Variant {
    MeanAffine,
    Recurrent,
}

impl From<Variant> for EncoderVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::MeanAffine => EncoderVariant::MeanAffine,
            Variant::Recurrent => EncoderVariant::Recurrent,
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => stylesearch_core::Config::load(p)?,
        None => Default::default(),
    }
    .with_seed(cli.seed);
    commands::run(cli.command, config)
}
