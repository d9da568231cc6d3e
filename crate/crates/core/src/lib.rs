//! Document-level AMR graphs, attention-GNN training, trend labeling, and
//! edge-mask explanations.

pub mod config;
pub mod corpus;
pub mod embed;
pub mod explainer;
pub mod gnn;
pub mod graph;
pub mod labeling;
pub mod penman;
pub mod trainer;

pub use config::{ProviderMode, RunConfig};
pub use corpus::{ManifestRecord, SyntheticCorpusSpec, TruthRecord};
pub use embed::{EmbeddingArchive, EmbeddingProvider, PseudoProvider};
pub use explainer::{EdgeMask, ExplainConfig, ExplainTarget, Explanation, SentenceRanking};
pub use gnn::{Adjacency, ForwardTrace, Gradients, LayerKind, Model, ModelConfig};
pub use graph::{DocumentGraph, GraphStats, NodeKind};
pub use labeling::{CallEvent, Horizon, PriceStore};
pub use penman::{SentenceAmr, Span};
pub use trainer::{DatasetSplit, EvalReport, Selection, SplitItem, SplitSpec, TrainConfig};
