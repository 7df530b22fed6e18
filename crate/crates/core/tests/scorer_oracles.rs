//! Gradient checking and supervision oracles for the scoring model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use cig_core::corpus::{Chunk, ChunkId, DocId};
use cig_core::graph::{Cig, EdgeAttributes, GraphConfig, NodePair};
use cig_core::providers::EmbeddingVector;
use cig_core::scorer::{
    generate_training_examples, score_candidate, ScorerModel, SupervisionConfig,
};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Loss as a pure function of the model, for finite differencing.
fn loss_of(
    model: &ScorerModel,
    q: &[f64],
    p: &[f64],
    n: &[f64],
    edge: &EdgeAttributes,
    label: f64,
) -> f64 {
    let s = score_candidate(model, q, p, n, edge).unwrap();
    let prob = sigmoid(s);
    let eps = 1e-12;
    -(label * (prob + eps).ln() + (1.0 - label) * (1.0 - prob + eps).ln())
}

#[test]
fn gradient_check_against_central_differences() {
    // 100 seeded probes: random small model, random inputs, random
    // parameter coordinate. Central differences on the BCE loss must match
    // the analytic gradient within 1e-4 relative error.
    let dim = 6;
    let hidden = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;

    while checked < 100 {
        let seed = rng.next_u64();
        let model = ScorerModel::seeded(dim, hidden, 10, seed);
        let q: Vec<f64> = (0..dim).map(|_| uniform(&mut rng)).collect();
        let p: Vec<f64> = (0..dim).map(|_| uniform(&mut rng)).collect();
        let n: Vec<f64> = (0..dim).map(|_| uniform(&mut rng)).collect();
        let edge = EdgeAttributes {
            w_struc: (rng.next_u64() % 2) as u8,
            w_sim: (uniform(&mut rng) + 1.0) / 2.0,
            w_keyword: (rng.next_u64() % 12) as usize,
            shared_keywords: vec![],
        };
        let edge = EdgeAttributes {
            shared_keywords: vec!["k".to_string(); edge.w_keyword],
            ..edge
        };
        let label = (rng.next_u64() % 2) as f64;

        let param_count = model.param_count();
        let idx = (rng.next_u64() % param_count as u64) as usize;

        // Analytic gradient via the library's backward pass.
        let grads = cig_core::scorer::loss_gradient_probe(&model, &q, &p, &n, &edge, label);
        let analytic = grads.param(idx);

        // Central finite difference.
        let h = 1e-5;
        let mut plus = model.clone();
        plus.set_param(idx, model.param(idx) + h);
        let mut minus = model.clone();
        minus.set_param(idx, model.param(idx) - h);
        let numeric =
            (loss_of(&plus, &q, &p, &n, &edge, label) - loss_of(&minus, &q, &p, &n, &edge, label))
                / (2.0 * h);

        let denom = analytic.abs().max(numeric.abs());
        if denom < 1e-7 {
            // Both effectively zero; relative error is meaningless here.
            assert!((analytic - numeric).abs() < 1e-7);
        } else {
            let rel = (analytic - numeric).abs() / denom;
            assert!(
                rel <= 1e-4,
                "param {idx}: analytic {analytic}, numeric {numeric}, rel {rel}"
            );
        }
        checked += 1;
    }
}

fn tiny_chunk(id: &str) -> Chunk {
    Chunk {
        chunk_id: ChunkId(id.to_string()),
        doc_id: DocId::new("d"),
        position: 0,
        text: format!("text {id}"),
        title: "T".into(),
        keywords: vec![],
        embedding: Some(EmbeddingVector(vec![1.0, 0.0])),
    }
}

/// Random connected-ish graph on n nodes.
fn random_graph(seed: u64, n: usize) -> Cig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chunks: Vec<Chunk> = (0..n).map(|i| tiny_chunk(&format!("n{i:02}"))).collect();
    let mut edges = BTreeMap::new();
    // Spanning chain keeps most pairs reachable, then random extras.
    for i in 1..n {
        let j = (rng.next_u64() % i as u64) as usize;
        let pair = NodePair::new(
            chunks[i].chunk_id.clone(),
            chunks[j].chunk_id.clone(),
        )
        .unwrap();
        edges.insert(pair, EdgeAttributes::structural());
    }
    let extras = n / 2;
    for _ in 0..extras {
        let a = (rng.next_u64() % n as u64) as usize;
        let b = (rng.next_u64() % n as u64) as usize;
        if a != b {
            let pair = NodePair::new(
                chunks[a].chunk_id.clone(),
                chunks[b].chunk_id.clone(),
            )
            .unwrap();
            edges.entry(pair).or_insert(EdgeAttributes::semantic(0.5));
        }
    }
    Cig::from_parts(chunks, edges, GraphConfig::default()).unwrap()
}

fn bfs_dist(g: &Cig, start: &ChunkId) -> BTreeMap<ChunkId, usize> {
    let mut dist = BTreeMap::new();
    dist.insert(start.clone(), 0usize);
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

/// Oracle: nodes on any shortest path between an evidence pair, excluding
/// the seed itself, unioned over ordered pairs.
fn all_shortest_path_positive_oracle(g: &Cig, evidence: &BTreeSet<ChunkId>) -> BTreeSet<ChunkId> {
    let mut positives = BTreeSet::new();
    for s in evidence {
        let ds = bfs_dist(g, s);
        for t in evidence {
            if s == t || !ds.contains_key(t) {
                continue;
            }
            let dt = bfs_dist(g, t);
            let total = ds[t];
            for id in g.node_ids() {
                let (Some(&a), Some(&b)) = (ds.get(id), dt.get(id)) else {
                    continue;
                };
                if a + b == total && id != s {
                    positives.insert(id.clone());
                }
            }
        }
    }
    positives
}

#[test]
fn supervision_positives_equal_bfs_oracle_on_seeded_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    for round in 0..50 {
        let n = 8 + (rng.next_u64() % 53) as usize; // up to 60 nodes
        let g = random_graph(rng.next_u64(), n);
        let ids: Vec<ChunkId> = g.node_ids().cloned().collect();
        let mut evidence = BTreeSet::new();
        let picks = 2 + (rng.next_u64() % 3) as usize;
        while evidence.len() < picks {
            evidence.insert(ids[(rng.next_u64() % ids.len() as u64) as usize].clone());
        }

        let config = SupervisionConfig {
            negative_cap: None,
            seed: 7,
        };
        let examples = generate_training_examples(&g, "q?", &evidence, &config).unwrap();
        let got: BTreeSet<ChunkId> = examples
            .iter()
            .filter(|e| e.label == 1)
            .map(|e| {
                // candidate_text is "text <id>"; recover the id.
                ChunkId(e.candidate_text.trim_start_matches("text ").to_string())
            })
            .collect();
        let expected = all_shortest_path_positive_oracle(&g, &evidence);
        assert_eq!(got, expected, "round {round}, evidence {evidence:?}");
    }
}

#[test]
fn positives_and_negatives_never_overlap_per_step() {
    let g = random_graph(500, 30);
    let ids: Vec<ChunkId> = g.node_ids().cloned().collect();
    let evidence: BTreeSet<ChunkId> = [ids[0].clone(), ids[15].clone(), ids[29].clone()]
        .into_iter()
        .collect();
    let examples = generate_training_examples(
        &g,
        "q?",
        &evidence,
        &SupervisionConfig {
            negative_cap: None,
            seed: 1,
        },
    )
    .unwrap();
    let mut by_path: BTreeMap<&str, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for e in &examples {
        let slot = by_path.entry(&e.path_text).or_default();
        if e.label == 1 {
            slot.0.insert(&e.candidate_text);
        } else {
            slot.1.insert(&e.candidate_text);
        }
    }
    for (path, (pos, neg)) in by_path {
        assert!(
            pos.intersection(&neg).next().is_none(),
            "step at path {path:?} labels a candidate both ways"
        );
    }
}
