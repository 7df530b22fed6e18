//! Training-set construction from shortest paths between evidence nodes.
//!
//! For every ordered evidence pair (s, t) the unweighted shortest-path DAG
//! from s to t is computed with BFS. Each DAG node contributes one decision
//! step: its DAG successors are positive candidates (they move the path
//! toward t as fast as possible), its remaining graph neighbours are
//! negatives. Keeping the whole DAG rather than one arbitrary path makes the
//! positive set independent of tie-breaking.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::ChunkId;
use crate::graph::Cig;
use crate::TEXT_SEPARATOR;

use super::{ScorerError, TrainingExample};

/// Knobs for negative sampling.
#[derive(Debug, Clone)]
pub struct SupervisionConfig {
    /// Maximum negatives emitted per decision step; `None` keeps every
    /// off-path neighbour.
    pub negative_cap: Option<usize>,
    pub seed: u64,
}

impl Default for SupervisionConfig {
    fn default() -> Self {
        SupervisionConfig {
            negative_cap: Some(8),
            seed: 42,
        }
    }
}

/// BFS distances from `start` over the undirected edge set.
fn bfs_distances(g: &Cig, start: &ChunkId) -> BTreeMap<ChunkId, usize> {
    let mut dist = BTreeMap::new();
    dist.insert(start.clone(), 0);
    let mut queue = VecDeque::new();
    queue.push_back(start.clone());
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        for next in g.neighbors(&node) {
            if !dist.contains_key(next) {
                dist.insert(next.clone(), d + 1);
                queue.push_back(next.clone());
            }
        }
    }
    dist
}

/// Nodes lying on at least one shortest path from `s` to `t`, given BFS
/// distances from `s`: walk backwards from `t` through predecessors that
/// are exactly one step closer to `s`.
fn shortest_path_dag_nodes(
    g: &Cig,
    dist: &BTreeMap<ChunkId, usize>,
    t: &ChunkId,
) -> BTreeSet<ChunkId> {
    let mut on_path = BTreeSet::new();
    let mut queue = VecDeque::new();
    on_path.insert(t.clone());
    queue.push_back(t.clone());
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        if d == 0 {
            continue;
        }
        for prev in g.neighbors(&node) {
            if dist.get(prev) == Some(&(d - 1)) && on_path.insert(prev.clone()) {
                queue.push_back(prev.clone());
            }
        }
    }
    on_path
}

/// Generate labelled next-hop decisions for one question.
///
/// Unreachable evidence pairs are skipped with a warning rather than
/// failing the whole question.
pub fn generate_training_examples(
    g: &Cig,
    question: &str,
    evidence: &BTreeSet<ChunkId>,
    config: &SupervisionConfig,
) -> Result<Vec<TrainingExample>, ScorerError> {
    if evidence.is_empty() {
        return Err(ScorerError::EmptyEvidence);
    }
    for id in evidence {
        if !g.contains(id) {
            return Err(ScorerError::UnknownEvidence {
                chunk_id: id.clone(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut examples = Vec::new();

    for seed_node in evidence {
        let dist = bfs_distances(g, seed_node);

        // Union of the shortest-path DAGs from this seed to every other
        // evidence node. Merging targets before labelling keeps one
        // decision step from labelling the same candidate both ways when
        // different targets lie in different directions.
        let mut on_path: BTreeSet<ChunkId> = BTreeSet::new();
        let mut successors: BTreeMap<ChunkId, BTreeSet<ChunkId>> = BTreeMap::new();
        for target in evidence {
            if target == seed_node {
                continue;
            }
            if !dist.contains_key(target) {
                log::warn!("evidence node {target} unreachable from {seed_node}; skipping pair");
                continue;
            }
            let dag = shortest_path_dag_nodes(g, &dist, target);
            for node in &dag {
                let depth = dist[node];
                if depth >= dist[target] {
                    continue;
                }
                for next in g.neighbors(node) {
                    if dag.contains(next) && dist.get(next) == Some(&(depth + 1)) {
                        successors
                            .entry(node.clone())
                            .or_default()
                            .insert(next.clone());
                    }
                }
            }
            on_path.extend(dag);
        }
        if successors.is_empty() {
            continue;
        }

        // Canonical path text per on-path node: extend the lexicographically
        // smallest on-path predecessor, mirroring how the retriever
        // accumulates path text at inference time.
        let mut path_text: BTreeMap<ChunkId, String> = BTreeMap::new();
        let mut path_members: BTreeMap<ChunkId, BTreeSet<ChunkId>> = BTreeMap::new();
        let mut by_depth: BTreeMap<usize, Vec<ChunkId>> = BTreeMap::new();
        for node in &on_path {
            by_depth.entry(dist[node]).or_default().push(node.clone());
        }
        let seed_text = g.node(seed_node).expect("evidence in graph").text.clone();
        path_text.insert(seed_node.clone(), seed_text);
        path_members.insert(
            seed_node.clone(),
            std::iter::once(seed_node.clone()).collect(),
        );
        for (depth, nodes) in &by_depth {
            if *depth == 0 {
                continue;
            }
            for node in nodes {
                let pred = g
                    .neighbors(node)
                    .iter()
                    .filter(|p| on_path.contains(*p) && dist.get(*p) == Some(&(depth - 1)))
                    .min()
                    .expect("on-path node has an on-path predecessor");
                let text = format!(
                    "{}{}{}",
                    path_text[pred],
                    TEXT_SEPARATOR,
                    g.node(node).expect("node in graph").text
                );
                path_text.insert(node.clone(), text);
                let mut members = path_members[pred].clone();
                members.insert(node.clone());
                path_members.insert(node.clone(), members);
            }
        }

        for (node, positives) in &successors {
            let members = &path_members[node];
            let mut negatives: Vec<&ChunkId> = g
                .neighbors(node)
                .iter()
                .filter(|n| !positives.contains(*n) && !members.contains(*n))
                .collect();
            if let Some(cap) = config.negative_cap {
                // Seeded down-sampling keeps class balance bounded.
                while negatives.len() > cap {
                    let drop = (rng.next_u64() % negatives.len() as u64) as usize;
                    negatives.remove(drop);
                }
            }
            let text_of = |id: &ChunkId| g.node(id).expect("node in graph").text.clone();
            for (candidate, label) in positives
                .iter()
                .map(|c| (c, 1u8))
                .chain(negatives.iter().map(|c| (*c, 0u8)))
            {
                let edge = g
                    .edge_between(node, candidate)
                    .expect("neighbour implies edge")
                    .clone();
                examples.push(TrainingExample {
                    query: question.to_string(),
                    path_text: path_text[node].clone(),
                    candidate_text: text_of(candidate),
                    edge,
                    label,
                });
            }
        }
    }
    Ok(examples)
}
