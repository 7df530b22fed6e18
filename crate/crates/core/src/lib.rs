//! Evidence-chain retrieval over a chunk-interaction graph.
//!
//! Documents are split into chunks, each chunk becomes a graph node, and
//! three families of attributed edges connect them: structural edges between
//! adjacent chunks of one document, semantic edges between embedding
//! nearest neighbours, and keyword edges between chunks sharing more than a
//! threshold number of extracted keywords. A small trainable scoring head
//! walks this graph from keyword-covering seed nodes, producing ordered
//! evidence chains that are assembled into LLM context for multi-document
//! question answering.
//!
//! Modules mirror the pipeline stages:
//!
//! - [`corpus`]: document ingestion and chunking
//! - [`providers`]: embedding / keyword / answer backends with deterministic
//!   offline fallbacks
//! - [`graph`]: chunk-interaction graph construction, persistence, queries
//! - [`scorer`]: the trainable next-hop scoring model and its supervision
//! - [`retriever`]: seed selection and evidence-chain expansion
//! - [`context`]: chain/iterative/shuffle context assembly and QA prompts
//! - [`eval`]: dataset extension, SQuAD-style metrics, evaluation harnesses
//!
//! The `parallel` feature (on by default) runs the data-parallel inner loops
//! (pairwise similarity scans, batch embedding, batch gradients, per-example
//! evaluation) on rayon; without it every code path is sequential and
//! produces byte-identical artifacts.

/// Separator between chunk texts when paths and context blocks are
/// concatenated. Training-time path text and retrieval-time path text must
/// join identically, or the scorer sees a distribution it was never
/// trained on.
pub const TEXT_SEPARATOR: &str = "\n";

pub mod context;
pub mod corpus;
pub mod eval;
pub mod graph;
pub mod providers;
pub mod retriever;
pub mod scorer;

mod exec;

pub use corpus::{Chunk, ChunkId, CorpusConfig, DocId, Document};
pub use graph::{Cig, EdgeAttributes, GraphConfig, NodePair};
pub use providers::{EmbeddingVector, KeywordList, Provider, ProviderConfig};
pub use retriever::{EvidenceChain, Query};
pub use scorer::{ScorerModel, TrainHyper, TrainingExample};
