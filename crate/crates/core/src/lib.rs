//! Multi-modal interior-style retrieval.
//!
//! Visual kNN search over detected regions, co-occurrence style embeddings
//! with a text-query encoder, blending of the two result lists, and the
//! evaluation harness used to compare them.

pub mod blend;
pub mod bovw;
pub mod config;
pub mod corpus;
pub mod detect;
pub mod error;
pub mod engine;
pub mod eval;
pub mod experiment;
pub mod query_encoder;
pub mod style_embed;
pub mod synth;
pub mod vecindex;
pub mod vector;

pub use blend::{blend, feature_blend, simple_blend, BlendRequest, BlendStrategy};
pub use config::Config;
pub use corpus::{build_cooccurrence, load_corpus, save_corpus, CooccurrenceMatrix, Corpus, Item, ItemId, Room, RoomId};
pub use detect::{BBox, Detection, FilterConfig};
pub use engine::{Engine, SearchRequest, SearchResponse};
pub use error::{Error, Result};
pub use experiment::{run_experiment, Artifacts, EvalReport, ExperimentConfig};
pub use query_encoder::{EncoderModel, EncoderVariant, OovPolicy, WordVectors};
pub use style_embed::{CbowConfig, EmbeddingTable};
pub use synth::{SynthBundle, SynthSpec};
pub use vecindex::{Modality, RankedEntry, RankedList, ScoreOrder, VectorIndex};
pub use vector::FeatureVector;
