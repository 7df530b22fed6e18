//! The chunk-interaction graph: nodes are chunks, undirected edges carry the
//! three interaction weights.
//!
//! An edge exists when at least one weight is non-zero:
//!
//! - `w_struc = 1` links consecutive chunks of one document;
//! - `w_sim` is the cosine similarity for top-k embedding neighbours;
//! - `w_keyword` counts shared normalized keywords past the configured
//!   threshold, with the intersection recorded on the edge.
//!
//! A built graph is immutable: all query methods take `&self` and the
//! structure can be shared freely across threads.

mod build;
mod io;

pub use build::{
    build_cig, build_keyword_edges, build_keyword_edges_seq, build_semantic_edges,
    build_semantic_edges_seq, build_structural_edges, merge_edge_families,
};
#[cfg(feature = "parallel")]
pub use build::{build_keyword_edges_par, build_semantic_edges_par};
pub use io::{load_cig, save_cig, FORMAT_VERSION};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chunk, ChunkId, CorpusConfig, CorpusError};
use crate::providers::{EmbeddingVector, ProviderError};

/// Unordered node pair, stored with `lo < hi` so each undirected edge has
/// exactly one key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodePair {
    lo: ChunkId,
    hi: ChunkId,
}

impl NodePair {
    /// Returns `None` for self-loops.
    pub fn new(a: ChunkId, b: ChunkId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(NodePair { lo: a, hi: b }),
            std::cmp::Ordering::Greater => Some(NodePair { lo: b, hi: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> &ChunkId {
        &self.lo
    }

    pub fn hi(&self) -> &ChunkId {
        &self.hi
    }

    /// The endpoint that is not `id`, if `id` is an endpoint at all.
    pub fn other(&self, id: &ChunkId) -> Option<&ChunkId> {
        if &self.lo == id {
            Some(&self.hi)
        } else if &self.hi == id {
            Some(&self.lo)
        } else {
            None
        }
    }
}

/// The three interaction weights plus the shared-keyword attribute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeAttributes {
    /// 1 when the chunks are adjacent in their document, else 0.
    pub w_struc: u8,
    /// Cosine similarity for semantic edges; 0 when absent.
    pub w_sim: f64,
    /// Number of shared normalized keywords; 0 when absent.
    pub w_keyword: usize,
    /// The shared keywords themselves, sorted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shared_keywords: Vec<String>,
}

impl EdgeAttributes {
    pub fn structural() -> Self {
        EdgeAttributes {
            w_struc: 1,
            ..Default::default()
        }
    }

    pub fn semantic(w_sim: f64) -> Self {
        EdgeAttributes {
            w_sim,
            ..Default::default()
        }
    }

    pub fn keyword(shared: Vec<String>) -> Self {
        EdgeAttributes {
            w_keyword: shared.len(),
            shared_keywords: shared,
            ..Default::default()
        }
    }

    /// True when no interaction is recorded; such an edge must not exist.
    pub fn is_empty(&self) -> bool {
        self.w_struc == 0 && self.w_sim == 0.0 && self.w_keyword == 0
    }

    fn validate(&self) -> Result<(), GraphError> {
        if self.is_empty() {
            return Err(GraphError::InvalidEdge {
                reason: "edge with all-zero weights".into(),
            });
        }
        if self.w_struc > 1 {
            return Err(GraphError::InvalidEdge {
                reason: format!("w_struc must be 0 or 1, got {}", self.w_struc),
            });
        }
        if self.w_keyword != self.shared_keywords.len() {
            return Err(GraphError::InvalidEdge {
                reason: format!(
                    "w_keyword {} disagrees with {} shared keywords",
                    self.w_keyword,
                    self.shared_keywords.len()
                ),
            });
        }
        if !self.w_sim.is_finite() || self.w_sim < 0.0 {
            return Err(GraphError::InvalidEdge {
                reason: format!("w_sim must be finite and non-negative, got {}", self.w_sim),
            });
        }
        Ok(())
    }
}

/// Graph construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Each node links to its k most similar nodes.
    pub semantic_top_k: usize,
    /// Keyword edges require an intersection strictly larger than this.
    pub keyword_threshold: usize,
    /// Keywords extracted per chunk.
    pub keywords_per_chunk: usize,
    /// Chunking parameters, echoed into the graph file.
    pub corpus: CorpusConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            semantic_top_k: 5,
            keyword_threshold: 2,
            keywords_per_chunk: 5,
            corpus: CorpusConfig::default(),
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.semantic_top_k == 0 {
            return Err(GraphError::InvalidConfig {
                reason: "semantic_top_k must be at least 1".into(),
            });
        }
        if self.keywords_per_chunk == 0 {
            return Err(GraphError::InvalidConfig {
                reason: "keywords_per_chunk must be at least 1".into(),
            });
        }
        self.corpus
            .validate()
            .map_err(|e| GraphError::InvalidConfig {
                reason: e.to_string(),
            })
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("invalid graph config: {reason}")]
    InvalidConfig { reason: String },
    #[error("chunks of document {doc_id} are not sorted by position")]
    UnsortedChunks { doc_id: String },
    #[error("structural edges require chunks from a single document, found {found} documents")]
    MixedDocuments { found: usize },
    #[error("chunk {chunk_id} has no embedding")]
    MissingEmbedding { chunk_id: ChunkId },
    #[error("chunk {chunk_id}: embedding dimension {got}, expected {expected}")]
    DimensionMismatch {
        chunk_id: ChunkId,
        expected: usize,
        got: usize,
    },
    #[error("provider failure{}: {source}", ctx_suffix(.chunk_id))]
    Provider {
        chunk_id: Option<ChunkId>,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid edge: {reason}")]
    InvalidEdge { reason: String },
    #[error("edge references unknown node {chunk_id}")]
    UnknownNode { chunk_id: ChunkId },
    #[error("graph file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("graph file has format version {found}, this build reads {expected}")]
    FormatVersion { found: u32, expected: u32 },
    #[error("graph file checksum mismatch: header {expected}, body {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("graph file line {line}: {reason}")]
    MalformedFile { line: usize, reason: String },
}

fn ctx_suffix(id: &Option<ChunkId>) -> String {
    match id {
        Some(id) => format!(" for chunk {id}"),
        None => String::new(),
    }
}

/// The immutable chunk-interaction graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Cig {
    nodes: BTreeMap<ChunkId, Chunk>,
    edges: BTreeMap<NodePair, EdgeAttributes>,
    adjacency: BTreeMap<ChunkId, Vec<ChunkId>>,
    keyword_index: BTreeMap<String, BTreeSet<ChunkId>>,
    dim: usize,
    config: GraphConfig,
}

impl Cig {
    /// Assemble and validate a graph from chunks and merged edges.
    ///
    /// Every chunk must carry an embedding of the common dimension; edges
    /// must reference existing nodes, carry at least one non-zero weight,
    /// and contain no self-loops (the `NodePair` key already rules those
    /// out).
    pub fn from_parts(
        chunks: Vec<Chunk>,
        edges: BTreeMap<NodePair, EdgeAttributes>,
        config: GraphConfig,
    ) -> Result<Self, GraphError> {
        config.validate()?;
        let mut nodes = BTreeMap::new();
        let mut dim: Option<usize> = None;
        for chunk in chunks {
            let embedding = chunk
                .embedding
                .as_ref()
                .ok_or_else(|| GraphError::MissingEmbedding {
                    chunk_id: chunk.chunk_id.clone(),
                })?;
            match dim {
                None => dim = Some(embedding.dim()),
                Some(d) if d != embedding.dim() => {
                    return Err(GraphError::DimensionMismatch {
                        chunk_id: chunk.chunk_id.clone(),
                        expected: d,
                        got: embedding.dim(),
                    });
                }
                _ => {}
            }
            nodes.insert(chunk.chunk_id.clone(), chunk);
        }
        let dim = dim.ok_or(GraphError::EmptyCorpus)?;

        let mut adjacency: BTreeMap<ChunkId, Vec<ChunkId>> = BTreeMap::new();
        for (pair, attrs) in &edges {
            attrs.validate()?;
            for id in [pair.lo(), pair.hi()] {
                if !nodes.contains_key(id) {
                    return Err(GraphError::UnknownNode {
                        chunk_id: id.clone(),
                    });
                }
            }
            adjacency
                .entry(pair.lo().clone())
                .or_default()
                .push(pair.hi().clone());
            adjacency
                .entry(pair.hi().clone())
                .or_default()
                .push(pair.lo().clone());
        }
        for list in adjacency.values_mut() {
            list.sort();
        }

        let mut keyword_index: BTreeMap<String, BTreeSet<ChunkId>> = BTreeMap::new();
        for (id, chunk) in &nodes {
            for kw in &chunk.keywords {
                keyword_index
                    .entry(kw.clone())
                    .or_default()
                    .insert(id.clone());
            }
        }

        Ok(Cig {
            nodes,
            edges,
            adjacency,
            keyword_index,
            dim,
            config,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Embedding dimension D shared by all nodes.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn node(&self, id: &ChunkId) -> Option<&Chunk> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &ChunkId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Chunk> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &ChunkId> {
        self.nodes.keys()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&NodePair, &EdgeAttributes)> {
        self.edges.iter()
    }

    /// Attributes of the undirected edge between `a` and `b`, either order.
    pub fn edge_between(&self, a: &ChunkId, b: &ChunkId) -> Option<&EdgeAttributes> {
        let pair = NodePair::new(a.clone(), b.clone())?;
        self.edges.get(&pair)
    }

    /// Sorted neighbour list; empty for isolated or unknown nodes.
    pub fn neighbors(&self, id: &ChunkId) -> &[ChunkId] {
        self.adjacency.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn embedding(&self, id: &ChunkId) -> Option<&EmbeddingVector> {
        self.nodes.get(id).and_then(|c| c.embedding.as_ref())
    }

    /// Nodes whose keyword list contains the normalized keyword.
    pub fn nodes_with_keyword(&self, normalized: &str) -> Option<&BTreeSet<ChunkId>> {
        self.keyword_index.get(normalized)
    }

    pub fn keyword_index(&self) -> &BTreeMap<String, BTreeSet<ChunkId>> {
        &self.keyword_index
    }

    /// Edge counts per family: (structural, semantic, keyword). A merged
    /// edge counts once in every family it carries.
    pub fn edge_family_counts(&self) -> (usize, usize, usize) {
        let mut struc = 0;
        let mut sim = 0;
        let mut kw = 0;
        for attrs in self.edges.values() {
            if attrs.w_struc == 1 {
                struc += 1;
            }
            if attrs.w_sim > 0.0 {
                sim += 1;
            }
            if attrs.w_keyword > 0 {
                kw += 1;
            }
        }
        (struc, sim, kw)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::DocId;
    use crate::providers::EmbeddingVector;

    pub(crate) fn chunk_with(id: &str, keywords: &[&str], embedding: Vec<f64>) -> Chunk {
        Chunk {
            chunk_id: ChunkId(id.to_string()),
            doc_id: DocId::new("d"),
            position: 0,
            text: format!("text of {id}"),
            title: "T".into(),
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            embedding: Some(EmbeddingVector(embedding)),
        }
    }

    #[test]
    fn node_pair_orders_and_rejects_self_loops() {
        let p = NodePair::new(ChunkId("b".into()), ChunkId("a".into())).unwrap();
        assert_eq!(p.lo().as_str(), "a");
        assert_eq!(p.hi().as_str(), "b");
        assert!(NodePair::new(ChunkId("a".into()), ChunkId("a".into())).is_none());
    }

    #[test]
    fn from_parts_rejects_edges_to_unknown_nodes() {
        let chunks = vec![chunk_with("a", &[], vec![1.0, 0.0])];
        let mut edges = BTreeMap::new();
        edges.insert(
            NodePair::new(ChunkId("a".into()), ChunkId("ghost".into())).unwrap(),
            EdgeAttributes::structural(),
        );
        let err = Cig::from_parts(chunks, edges, GraphConfig::default()).unwrap_err();
        assert!(matches!(err, GraphError::UnknownNode { .. }));
    }

    #[test]
    fn from_parts_rejects_all_zero_edges() {
        let chunks = vec![
            chunk_with("a", &[], vec![1.0, 0.0]),
            chunk_with("b", &[], vec![0.0, 1.0]),
        ];
        let mut edges = BTreeMap::new();
        edges.insert(
            NodePair::new(ChunkId("a".into()), ChunkId("b".into())).unwrap(),
            EdgeAttributes::default(),
        );
        let err = Cig::from_parts(chunks, edges, GraphConfig::default()).unwrap_err();
        assert!(matches!(err, GraphError::InvalidEdge { .. }));
    }

    #[test]
    fn edge_queries_are_symmetric() {
        let chunks = vec![
            chunk_with("a", &["x"], vec![1.0, 0.0]),
            chunk_with("b", &["x"], vec![0.0, 1.0]),
        ];
        let mut edges = BTreeMap::new();
        edges.insert(
            NodePair::new(ChunkId("a".into()), ChunkId("b".into())).unwrap(),
            EdgeAttributes::structural(),
        );
        let g = Cig::from_parts(chunks, edges, GraphConfig::default()).unwrap();
        let ab = g.edge_between(&ChunkId("a".into()), &ChunkId("b".into()));
        let ba = g.edge_between(&ChunkId("b".into()), &ChunkId("a".into()));
        assert!(ab.is_some());
        assert_eq!(ab, ba);
        assert_eq!(g.neighbors(&ChunkId("a".into())), &[ChunkId("b".into())]);
    }

    #[test]
    fn keyword_index_tracks_node_keywords() {
        let chunks = vec![
            chunk_with("a", &["alpha", "beta"], vec![1.0]),
            chunk_with("b", &["beta"], vec![1.0]),
        ];
        let g = Cig::from_parts(chunks, BTreeMap::new(), GraphConfig::default()).unwrap();
        let beta = g.nodes_with_keyword("beta").unwrap();
        assert_eq!(beta.len(), 2);
        assert!(g.nodes_with_keyword("gamma").is_none());
    }
}
