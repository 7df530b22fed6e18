//! Edge construction and full graph assembly.
//!
//! Semantic and keyword edges have both a sequential and (behind the
//! `parallel` feature) a rayon-backed builder; both orderings produce the
//! same edge set, and the default entry point picks whichever is compiled.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{chunk_document, Chunk, Document};
use crate::exec;
use crate::providers::Provider;

use super::{Cig, EdgeAttributes, GraphConfig, GraphError, NodePair};

/// Chain edges between consecutive chunks of a single document, each with
/// weight 1. Input must be one document's chunks sorted by position.
pub fn build_structural_edges(
    chunks: &[Chunk],
) -> Result<Vec<(NodePair, EdgeAttributes)>, GraphError> {
    let docs: BTreeSet<_> = chunks.iter().map(|c| &c.doc_id).collect();
    if docs.len() > 1 {
        return Err(GraphError::MixedDocuments { found: docs.len() });
    }
    for pair in chunks.windows(2) {
        if pair[1].position <= pair[0].position {
            return Err(GraphError::UnsortedChunks {
                doc_id: pair[0].doc_id.to_string(),
            });
        }
    }
    Ok(chunks
        .windows(2)
        .filter_map(|pair| {
            NodePair::new(pair[0].chunk_id.clone(), pair[1].chunk_id.clone())
                .map(|p| (p, EdgeAttributes::structural()))
        })
        .collect())
}

/// One node's top-k selection: the k most cosine-similar other nodes with
/// strictly positive similarity, ties broken by chunk id.
fn top_k_for_node(
    i: usize,
    chunks: &[Chunk],
    embeddings: &[&crate::providers::EmbeddingVector],
    k: usize,
) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(chunks.len() - 1);
    for (j, other) in embeddings.iter().enumerate() {
        if j == i {
            continue;
        }
        let sim = embeddings[i].cosine(other);
        if sim > 0.0 {
            scored.push((j, sim));
        }
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| chunks[a.0].chunk_id.cmp(&chunks[b.0].chunk_id))
    });
    scored.truncate(k);
    scored
}

fn collect_embeddings(
    chunks: &[Chunk],
) -> Result<Vec<&crate::providers::EmbeddingVector>, GraphError> {
    let mut out = Vec::with_capacity(chunks.len());
    let mut dim: Option<usize> = None;
    for chunk in chunks {
        let e = chunk
            .embedding
            .as_ref()
            .ok_or_else(|| GraphError::MissingEmbedding {
                chunk_id: chunk.chunk_id.clone(),
            })?;
        match dim {
            None => dim = Some(e.dim()),
            Some(d) if d != e.dim() => {
                return Err(GraphError::DimensionMismatch {
                    chunk_id: chunk.chunk_id.clone(),
                    expected: d,
                    got: e.dim(),
                });
            }
            _ => {}
        }
        out.push(e);
    }
    Ok(out)
}

fn semantic_edges_from_selections(
    chunks: &[Chunk],
    selections: Vec<Vec<(usize, f64)>>,
) -> Vec<(NodePair, EdgeAttributes)> {
    // Undirected union of the per-node selections; cosine is computed with
    // the same operation order from both sides, so the weight agrees.
    let mut merged: BTreeMap<NodePair, f64> = BTreeMap::new();
    for (i, list) in selections.into_iter().enumerate() {
        for (j, sim) in list {
            if let Some(pair) = NodePair::new(chunks[i].chunk_id.clone(), chunks[j].chunk_id.clone())
            {
                merged.insert(pair, sim);
            }
        }
    }
    merged
        .into_iter()
        .map(|(pair, sim)| (pair, EdgeAttributes::semantic(sim)))
        .collect()
}

/// Semantic edges, sequential scan.
pub fn build_semantic_edges_seq(
    chunks: &[Chunk],
    k: usize,
) -> Result<Vec<(NodePair, EdgeAttributes)>, GraphError> {
    let embeddings = collect_embeddings(chunks)?;
    let selections: Vec<Vec<(usize, f64)>> = (0..chunks.len())
        .map(|i| top_k_for_node(i, chunks, &embeddings, k))
        .collect();
    Ok(semantic_edges_from_selections(chunks, selections))
}

/// Semantic edges, one rayon task per node.
#[cfg(feature = "parallel")]
pub fn build_semantic_edges_par(
    chunks: &[Chunk],
    k: usize,
) -> Result<Vec<(NodePair, EdgeAttributes)>, GraphError> {
    use rayon::prelude::*;
    let embeddings = collect_embeddings(chunks)?;
    let selections: Vec<Vec<(usize, f64)>> = (0..chunks.len())
        .into_par_iter()
        .map(|i| top_k_for_node(i, chunks, &embeddings, k))
        .collect();
    Ok(semantic_edges_from_selections(chunks, selections))
}

/// Semantic edges: each node links to its k nearest neighbours by cosine
/// similarity; the undirected union is returned, so merged degree may exceed
/// k even though each node selects at most k.
pub fn build_semantic_edges(
    chunks: &[Chunk],
    k: usize,
) -> Result<Vec<(NodePair, EdgeAttributes)>, GraphError> {
    #[cfg(feature = "parallel")]
    {
        build_semantic_edges_par(chunks, k)
    }
    #[cfg(not(feature = "parallel"))]
    {
        build_semantic_edges_seq(chunks, k)
    }
}

#[cfg(feature = "parallel")]
fn keyword_sets(chunks: &[Chunk]) -> Vec<BTreeSet<&str>> {
    chunks
        .iter()
        .map(|c| c.keywords.iter().map(String::as_str).collect())
        .collect()
}

/// Keyword edges via an inverted index: for every keyword, all node pairs in
/// its posting list accumulate that keyword; pairs with an intersection
/// strictly larger than `threshold` become edges.
pub fn build_keyword_edges_seq(
    chunks: &[Chunk],
    threshold: usize,
) -> Vec<(NodePair, EdgeAttributes)> {
    let mut postings: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, chunk) in chunks.iter().enumerate() {
        let set: BTreeSet<&str> = chunk.keywords.iter().map(String::as_str).collect();
        for kw in set {
            postings.entry(kw).or_default().push(i);
        }
    }
    let mut shared: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
    for (kw, nodes) in postings {
        for (ai, &a) in nodes.iter().enumerate() {
            for &b in &nodes[ai + 1..] {
                shared.entry((a, b)).or_default().push(kw.to_string());
            }
        }
    }
    shared
        .into_iter()
        .filter(|(_, kws)| kws.len() > threshold)
        .filter_map(|((a, b), mut kws)| {
            kws.sort();
            NodePair::new(chunks[a].chunk_id.clone(), chunks[b].chunk_id.clone())
                .map(|p| (p, EdgeAttributes::keyword(kws)))
        })
        .collect()
}

/// Keyword edges via a parallel pairwise scan; same edge set as the
/// inverted-index route.
#[cfg(feature = "parallel")]
pub fn build_keyword_edges_par(
    chunks: &[Chunk],
    threshold: usize,
) -> Vec<(NodePair, EdgeAttributes)> {
    use rayon::prelude::*;
    let sets = keyword_sets(chunks);
    let mut edges: Vec<(NodePair, EdgeAttributes)> = (0..chunks.len())
        .into_par_iter()
        .flat_map_iter(|a| {
            let sets = &sets;
            (a + 1..chunks.len()).filter_map(move |b| {
                let inter: Vec<String> = sets[a]
                    .intersection(&sets[b])
                    .map(|s| s.to_string())
                    .collect();
                if inter.len() > threshold {
                    NodePair::new(chunks[a].chunk_id.clone(), chunks[b].chunk_id.clone())
                        .map(|p| (p, EdgeAttributes::keyword(inter)))
                } else {
                    None
                }
            })
        })
        .collect();
    edges.sort_by(|x, y| x.0.cmp(&y.0));
    edges
}

/// Keyword edges between every pair sharing strictly more than `threshold`
/// normalized keywords.
pub fn build_keyword_edges(
    chunks: &[Chunk],
    threshold: usize,
) -> Vec<(NodePair, EdgeAttributes)> {
    #[cfg(feature = "parallel")]
    {
        build_keyword_edges_par(chunks, threshold)
    }
    #[cfg(not(feature = "parallel"))]
    {
        build_keyword_edges_seq(chunks, threshold)
    }
}

/// Merge per-family edge lists into one attribute record per pair,
/// component-wise; families never overwrite each other's weights.
pub fn merge_edge_families(
    families: Vec<Vec<(NodePair, EdgeAttributes)>>,
) -> BTreeMap<NodePair, EdgeAttributes> {
    let mut merged: BTreeMap<NodePair, EdgeAttributes> = BTreeMap::new();
    for family in families {
        for (pair, attrs) in family {
            let slot = merged.entry(pair).or_default();
            if attrs.w_struc == 1 {
                slot.w_struc = 1;
            }
            if attrs.w_sim != 0.0 {
                slot.w_sim = attrs.w_sim;
            }
            if attrs.w_keyword != 0 {
                slot.w_keyword = attrs.w_keyword;
                slot.shared_keywords = attrs.shared_keywords;
            }
        }
    }
    merged
}

/// Build the full graph: chunk every document, fill keywords and embeddings
/// through the provider (document titles are excluded from keywords), build
/// the three edge families, and merge coincident pairs into single records.
pub fn build_cig(
    documents: &[Document],
    provider: &Provider,
    config: &GraphConfig,
) -> Result<Cig, GraphError> {
    config.validate()?;
    if documents.is_empty() {
        return Err(GraphError::EmptyCorpus);
    }

    // Flatten per-document chunks, remembering each document's range so the
    // structural chains can be built after annotation.
    let mut all_chunks: Vec<Chunk> = Vec::new();
    let mut doc_ranges: Vec<std::ops::Range<usize>> = Vec::with_capacity(documents.len());
    for doc in documents {
        let chunks = chunk_document(doc, &config.corpus)?;
        let start = all_chunks.len();
        all_chunks.extend(chunks);
        doc_ranges.push(start..all_chunks.len());
    }

    let annotated: Vec<Result<(Vec<String>, crate::providers::EmbeddingVector), GraphError>> =
        exec::map_slice(&all_chunks, |chunk| {
            let ctx = |source| GraphError::Provider {
                chunk_id: Some(chunk.chunk_id.clone()),
                source,
            };
            let keywords = provider
                .extract_chunk_keywords(&chunk.text, config.keywords_per_chunk)
                .map_err(ctx)?
                .without_title(&chunk.title);
            let embedding = provider.embed_text(&chunk.text).map_err(ctx)?;
            Ok((keywords.into_vec(), embedding))
        });
    for (chunk, result) in all_chunks.iter_mut().zip(annotated) {
        let (keywords, embedding) = result?;
        chunk.keywords = keywords;
        chunk.embedding = Some(embedding);
    }

    let mut families = Vec::with_capacity(doc_ranges.len() + 2);
    for range in doc_ranges {
        families.push(build_structural_edges(&all_chunks[range])?);
    }
    families.push(build_semantic_edges(&all_chunks, config.semantic_top_k)?);
    families.push(build_keyword_edges(&all_chunks, config.keyword_threshold));

    let edges = merge_edge_families(families);
    Cig::from_parts(all_chunks, edges, config.clone())
}
