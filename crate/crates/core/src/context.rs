//! Context assembly: turn retrieved chains into prompt blocks.
//!
//! Three formats exist for the ablation between them:
//!
//! - `chain`: one block per chain, chunk texts in hop order;
//! - `iterative`: chunks grouped by hop index across chains, one block per
//!   iteration;
//! - `shuffle`: every chunk its own block, order given by a seeded
//!   permutation.
//!
//! Duplicate chunk ids survive only at their first occurrence (in
//! chain-then-hop order), so all three formats carry exactly the same chunk
//! set and differ only in arrangement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::ChunkId;
use crate::graph::Cig;
use crate::providers::templates;
use crate::retriever::EvidenceChain;
use crate::TEXT_SEPARATOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextFormat {
    Chain,
    Iterative,
    Shuffle,
}

impl std::str::FromStr for ContextFormat {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain" => Ok(ContextFormat::Chain),
            "iterative" => Ok(ContextFormat::Iterative),
            "shuffle" => Ok(ContextFormat::Shuffle),
            other => Err(ContextError::UnknownFormat {
                format: other.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for ContextFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ContextFormat::Chain => "chain",
            ContextFormat::Iterative => "iterative",
            ContextFormat::Shuffle => "shuffle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("unknown context format {format:?} (expected chain, iterative, or shuffle)")]
    UnknownFormat { format: String },
    #[error("chain references chunk {chunk_id} missing from the graph")]
    UnknownChunk { chunk_id: ChunkId },
}

/// Assembly options.
#[derive(Debug, Clone, Default)]
pub struct AssembleOptions {
    /// Character budget; trailing blocks are dropped whole until the total
    /// block length fits.
    pub token_budget: Option<usize>,
    /// Permutation seed, used only by the shuffle format.
    pub shuffle_seed: u64,
}

/// Ordered context blocks plus the provenance needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub format: ContextFormat,
    pub blocks: Vec<String>,
    /// Chunk ids backing the blocks, deduplicated, in block order.
    pub chunk_ids: Vec<ChunkId>,
    pub token_budget: Option<usize>,
    pub shuffle_seed: u64,
}

impl ContextBundle {
    /// All blocks joined for the prompt's context slot.
    pub fn joined(&self) -> String {
        self.blocks.join(TEXT_SEPARATOR)
    }
}

/// Assemble retrieved chains into context blocks under the given format.
pub fn assemble_context(
    chains: &[EvidenceChain],
    g: &Cig,
    format: ContextFormat,
    opts: &AssembleOptions,
) -> Result<ContextBundle, ContextError> {
    // First occurrence wins, scanning chains in seed order and hops in
    // traversal order; the surviving set is identical for every format.
    let mut seen = std::collections::BTreeSet::new();
    let mut keep = |id: &ChunkId| seen.insert(id.clone());

    let text_of = |id: &ChunkId| -> Result<&str, ContextError> {
        g.node(id)
            .map(|c| c.text.as_str())
            .ok_or_else(|| ContextError::UnknownChunk {
                chunk_id: id.clone(),
            })
    };

    let mut blocks: Vec<(Vec<ChunkId>, String)> = Vec::new();
    match format {
        ContextFormat::Chain => {
            for chain in chains {
                let mut ids = Vec::new();
                let mut texts = Vec::new();
                for hop in &chain.hops {
                    if keep(&hop.chunk_id) {
                        texts.push(text_of(&hop.chunk_id)?.to_string());
                        ids.push(hop.chunk_id.clone());
                    }
                }
                if !ids.is_empty() {
                    blocks.push((ids, texts.join(TEXT_SEPARATOR)));
                }
            }
        }
        ContextFormat::Iterative => {
            let deepest = chains.iter().map(|c| c.hops.len()).max().unwrap_or(0);
            for hop_idx in 0..deepest {
                let mut ids = Vec::new();
                let mut texts = Vec::new();
                for chain in chains {
                    if let Some(hop) = chain.hops.get(hop_idx) {
                        if keep(&hop.chunk_id) {
                            texts.push(text_of(&hop.chunk_id)?.to_string());
                            ids.push(hop.chunk_id.clone());
                        }
                    }
                }
                if !ids.is_empty() {
                    blocks.push((ids, texts.join(TEXT_SEPARATOR)));
                }
            }
        }
        ContextFormat::Shuffle => {
            let mut flat: Vec<ChunkId> = Vec::new();
            for chain in chains {
                for hop in &chain.hops {
                    if keep(&hop.chunk_id) {
                        flat.push(hop.chunk_id.clone());
                    }
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.shuffle_seed);
            for i in (1..flat.len()).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                flat.swap(i, j);
            }
            for id in flat {
                let text = text_of(&id)?.to_string();
                blocks.push((vec![id], text));
            }
        }
    }

    if let Some(budget) = opts.token_budget {
        let mut used = 0;
        let mut kept = Vec::new();
        for (ids, text) in blocks {
            if used + text.chars().count() > budget {
                break;
            }
            used += text.chars().count();
            kept.push((ids, text));
        }
        blocks = kept;
    }

    let mut chunk_ids = Vec::new();
    let mut texts = Vec::new();
    for (ids, text) in blocks {
        chunk_ids.extend(ids);
        texts.push(text);
    }
    Ok(ContextBundle {
        format,
        blocks: texts,
        chunk_ids,
        token_budget: opts.token_budget,
        shuffle_seed: opts.shuffle_seed,
    })
}

/// Render the QA prompt over the assembled context, byte-stable.
pub fn build_qa_prompt(question: &str, bundle: &ContextBundle) -> String {
    templates::qa_prompt(question, &bundle.joined())
}
