//! Evidence-chain retrieval: greedy keyword-cover seed selection, then one
//! scored traversal per seed.
//!
//! Seed selection repeatedly takes the node covering the most remaining
//! question keywords (ties: highest cosine similarity to the query, then
//! chunk id) until the keyword set is exhausted or nothing matches. Each
//! seed then expands into a chain by always stepping to the unvisited
//! neighbour with the highest score under the trained model, re-embedding
//! the accumulated path text after every hop.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::corpus::{Chunk, ChunkId};
use crate::exec;
use crate::graph::{Cig, EdgeAttributes};
use crate::providers::{
    normalize_keyword, EmbeddingVector, KeywordList, Provider, ProviderError, TextEmbedder,
};
use crate::scorer::{score_candidate, ScorerError, ScorerModel};
use crate::TEXT_SEPARATOR;

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("seed node {chunk_id} is not in the graph")]
    SeedMissing { chunk_id: ChunkId },
    #[error("query embedding dimension {got}, graph dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {reason}")]
    InvalidArgument { reason: String },
    #[error("corpus has no chunks")]
    EmptyCorpus,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// A question prepared for retrieval.
#[derive(Debug, Clone)]
pub struct Query {
    pub text: String,
    /// Normalized question keywords Q_K.
    pub keywords: KeywordList,
    pub embedding: EmbeddingVector,
}

impl Query {
    /// Extract keywords and embed the question through the provider.
    pub fn build(text: &str, provider: &Provider, g: &Cig) -> Result<Self, RetrieveError> {
        let keywords = provider.extract_question_keywords(text)?;
        let embedding = provider.embed_text(text)?;
        if embedding.dim() != g.dim() {
            return Err(RetrieveError::DimensionMismatch {
                expected: g.dim(),
                got: embedding.dim(),
            });
        }
        Ok(Query {
            text: text.to_string(),
            keywords,
            embedding,
        })
    }
}

/// Mutable state of one traversal.
#[derive(Debug, Clone)]
pub struct PathState {
    pub node_sequence: Vec<ChunkId>,
    pub visited: BTreeSet<ChunkId>,
    pub path_text: String,
    pub path_embedding: EmbeddingVector,
}

/// One selected hop; the seed carries no score.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Hop {
    pub chunk_id: ChunkId,
    pub score: Option<f64>,
}

/// The ordered result of one seed's traversal.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvidenceChain {
    pub seed_id: ChunkId,
    pub hops: Vec<Hop>,
    pub max_len: usize,
}

impl EvidenceChain {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = &ChunkId> {
        self.hops.iter().map(|h| &h.chunk_id)
    }
}

/// Anything that can rank a neighbour given the query, path, neighbour
/// embeddings and the connecting edge. Implemented by the trained model;
/// tests inject simpler scorers.
pub trait NextHopScorer: Sync {
    fn score_hop(
        &self,
        e_query: &[f64],
        e_path: &[f64],
        e_neighbour: &[f64],
        edge: &EdgeAttributes,
    ) -> Result<f64, ScorerError>;
}

impl NextHopScorer for ScorerModel {
    fn score_hop(
        &self,
        e_query: &[f64],
        e_path: &[f64],
        e_neighbour: &[f64],
        edge: &EdgeAttributes,
    ) -> Result<f64, ScorerError> {
        score_candidate(self, e_query, e_path, e_neighbour, edge)
    }
}

/// Greedy keyword-cover seed selection.
///
/// Falls back to the single most query-similar node when the question has
/// no keywords or none of them match any node.
pub fn select_seed_nodes(q: &Query, g: &Cig) -> Result<Vec<ChunkId>, RetrieveError> {
    if g.node_count() == 0 {
        return Err(RetrieveError::EmptyGraph);
    }
    let mut remaining: BTreeSet<String> =
        q.keywords.iter().map(|k| normalize_keyword(k)).collect();
    remaining.retain(|k| !k.is_empty());

    let mut seeds: Vec<ChunkId> = Vec::new();
    let mut taken: BTreeSet<ChunkId> = BTreeSet::new();
    while !remaining.is_empty() {
        let mut coverage: std::collections::BTreeMap<&ChunkId, usize> = Default::default();
        for kw in &remaining {
            if let Some(nodes) = g.nodes_with_keyword(kw) {
                for node in nodes {
                    if !taken.contains(node) {
                        *coverage.entry(node).or_default() += 1;
                    }
                }
            }
        }
        let Some(&best_count) = coverage.values().max() else {
            break;
        };
        let tied: Vec<&ChunkId> = coverage
            .iter()
            .filter(|(_, &c)| c == best_count)
            .map(|(id, _)| *id)
            .collect();
        let chosen = tied
            .into_iter()
            .map(|id| {
                let sim = g
                    .embedding(id)
                    .map(|e| q.embedding.cosine(e))
                    .unwrap_or(f64::NEG_INFINITY);
                (id, sim)
            })
            .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)))
            .map(|(id, _)| id.clone())
            .expect("tied set is non-empty");

        let covered: Vec<String> = g
            .node(&chosen)
            .map(|c| c.keywords.clone())
            .unwrap_or_default();
        for kw in covered {
            remaining.remove(&kw);
        }
        taken.insert(chosen.clone());
        seeds.push(chosen);
    }

    if seeds.is_empty() {
        let best = g
            .nodes()
            .map(|c| {
                let sim = c
                    .embedding
                    .as_ref()
                    .map(|e| q.embedding.cosine(e))
                    .unwrap_or(f64::NEG_INFINITY);
                (&c.chunk_id, sim)
            })
            .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)))
            .map(|(id, _)| id.clone())
            .expect("graph is non-empty");
        seeds.push(best);
    }
    Ok(seeds)
}

/// Expand one chain from `seed`: at every step score all unvisited
/// neighbours of the current node, append the argmax (ties to the smaller
/// chunk id), and re-embed the grown path text. Stops at `max_len` nodes or
/// when no unvisited neighbour remains.
pub fn expand_path(
    seed: &ChunkId,
    q: &Query,
    g: &Cig,
    scorer: &impl NextHopScorer,
    embedder: &(impl TextEmbedder + ?Sized),
    max_len: usize,
) -> Result<EvidenceChain, RetrieveError> {
    if max_len == 0 {
        return Err(RetrieveError::InvalidArgument {
            reason: "max_len must be at least 1".into(),
        });
    }
    let seed_chunk = g.node(seed).ok_or_else(|| RetrieveError::SeedMissing {
        chunk_id: seed.clone(),
    })?;

    let mut state = PathState {
        node_sequence: vec![seed.clone()],
        visited: std::iter::once(seed.clone()).collect(),
        path_text: seed_chunk.text.clone(),
        path_embedding: embedder.embed(&seed_chunk.text)?,
    };
    let mut hops = vec![Hop {
        chunk_id: seed.clone(),
        score: None,
    }];

    while hops.len() < max_len {
        let current = state.node_sequence.last().expect("path is never empty");
        let mut best: Option<(f64, &ChunkId)> = None;
        for neighbour in g.neighbors(current) {
            if state.visited.contains(neighbour) {
                continue;
            }
            let edge = g
                .edge_between(current, neighbour)
                .expect("adjacency implies edge");
            let e_neighbour = g.embedding(neighbour).expect("graph nodes are embedded");
            let score = scorer.score_hop(
                q.embedding.values(),
                state.path_embedding.values(),
                e_neighbour.values(),
                edge,
            )?;
            // Neighbours arrive in id order, so strict improvement keeps
            // the smallest id on ties.
            let improves = match best {
                None => true,
                Some((s, _)) => score > s,
            };
            if improves {
                best = Some((score, neighbour));
            }
        }
        let Some((score, next)) = best else {
            break;
        };
        let next = next.clone();
        state.visited.insert(next.clone());
        state.node_sequence.push(next.clone());
        state.path_text.push_str(TEXT_SEPARATOR);
        state
            .path_text
            .push_str(&g.node(&next).expect("neighbour exists").text);
        hops.push(Hop {
            chunk_id: next,
            score: Some(score),
        });
        if hops.len() < max_len {
            state.path_embedding = embedder.embed(&state.path_text)?;
        }
    }

    Ok(EvidenceChain {
        seed_id: seed.clone(),
        hops,
        max_len,
    })
}

/// Full retrieval: keywords, query embedding, seeds, one chain per seed.
/// Chains are expanded independently (their visited sets do not interact)
/// and returned in seed order.
pub fn retrieve_chains(
    q_text: &str,
    g: &Cig,
    model: &ScorerModel,
    provider: &Provider,
    max_len: usize,
) -> Result<Vec<EvidenceChain>, RetrieveError> {
    let query = Query::build(q_text, provider, g)?;
    let seeds = select_seed_nodes(&query, g)?;
    exec::try_map_slice(&seeds, |seed| {
        expand_path(seed, &query, g, model, provider, max_len)
    })
}

/// TF-IDF ranking baseline over the chunk corpus.
///
/// Terms are whitespace tokens after keyword normalization. Weights are
/// `tf * (ln((1 + N) / (1 + df)) + 1)` with raw counts, L2-normalized per
/// text; chunks are ranked by cosine against the query vector (sums in
/// sorted term order), ties by chunk id. A query sharing no vocabulary
/// scores 0 everywhere and the lexicographically first `top_n` ids are
/// returned.
pub fn tfidf_baseline_retrieve(
    q_text: &str,
    chunks: &[Chunk],
    top_n: usize,
) -> Result<Vec<ChunkId>, RetrieveError> {
    if top_n == 0 {
        return Err(RetrieveError::InvalidArgument {
            reason: "top_n must be at least 1".into(),
        });
    }
    if chunks.is_empty() {
        return Err(RetrieveError::EmptyCorpus);
    }

    let tokenize = |text: &str| -> Vec<String> {
        text.split_whitespace()
            .map(normalize_keyword)
            .filter(|t| !t.is_empty())
            .collect()
    };

    let docs: Vec<Vec<String>> = chunks.iter().map(|c| tokenize(&c.text)).collect();
    let n = chunks.len() as f64;
    let mut df: std::collections::BTreeMap<&str, f64> = Default::default();
    for tokens in &docs {
        let distinct: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        for t in distinct {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let idf = |term: &str| -> f64 {
        let d = df.get(term).copied().unwrap_or(0.0);
        ((1.0 + n) / (1.0 + d)).ln() + 1.0
    };
    let weigh = |tokens: &[String]| -> std::collections::BTreeMap<String, f64> {
        let mut tf: std::collections::BTreeMap<String, f64> = Default::default();
        for t in tokens {
            *tf.entry(t.clone()).or_default() += 1.0;
        }
        let mut norm = 0.0;
        for (t, count) in tf.iter_mut() {
            *count *= idf(t);
            norm += *count * *count;
        }
        if norm > 0.0 {
            let norm = norm.sqrt();
            for v in tf.values_mut() {
                *v /= norm;
            }
        }
        tf
    };

    let q_vec = weigh(&tokenize(q_text));
    let mut scored: Vec<(f64, &ChunkId)> = chunks
        .iter()
        .zip(&docs)
        .map(|(chunk, tokens)| {
            let d_vec = weigh(tokens);
            let dot: f64 = q_vec
                .iter()
                .filter_map(|(t, qv)| d_vec.get(t).map(|dv| qv * dv))
                .sum();
            (dot, &chunk.chunk_id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored
        .into_iter()
        .take(top_n)
        .map(|(_, id)| id.clone())
        .collect())
}
