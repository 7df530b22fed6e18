// Not every test target uses every helper here.
#![allow(dead_code)]

//! Synthetic multi-document QA task generator.
//!
//! Each task is a self-contained retrieval scenario over 12 documents: two
//! topic documents and ten distractors drawn from a shared pool through the
//! dataset-extension path. The seed chunk names the two question entities,
//! its structural neighbour shares three planted entities with the evidence
//! chunk in the other topic document, and the evidence chunk sits at hop
//! distance exactly two from the seed, reached over a keyword edge. Tasks
//! whose random semantic edges create a shortcut or an alternate two-hop
//! path are rerolled so the planted path is the unique shortest one.

use std::collections::{BTreeSet, VecDeque};

use cig_core::corpus::{ChunkId, CorpusConfig, DocId, Document};
use cig_core::eval::{extend_dataset, QaExample};
use cig_core::graph::{build_cig, Cig, GraphConfig};
use cig_core::providers::Provider;

const FIRST: [&str; 10] = [
    "Var", "Kel", "Dor", "Mal", "Tes", "Rin", "Bel", "Hol", "Gar", "Fen",
];
const SECOND: [&str; 10] = [
    "na", "vik", "mor", "dan", "lis", "ter", "gun", "wel", "sor", "pia",
];

/// Deterministic unique two-word entity name for an index.
pub fn entity(idx: usize) -> String {
    let d0 = idx % 10;
    let d1 = (idx / 10) % 10;
    let d2 = (idx / 100) % 10;
    let d3 = (idx / 1000) % 10;
    format!("{}{} {}{}", FIRST[d0], SECOND[d1], FIRST[d2], SECOND[d3])
}

/// Entity for one slot of one task. The slot perturbs every syllable pick
/// (with strides coprime to the pool size), so a task's entities never
/// share a word; sharing words would make every chunk of the task look
/// semantically alike and let shortcut edges form.
pub fn task_entity(nonce: usize, slot: usize) -> String {
    let d0 = nonce % 10;
    let d1 = (nonce / 10) % 10;
    let d2 = (nonce / 100) % 10;
    let d3 = (nonce / 1000) % 10;
    let f = (d0 + slot) % 10;
    let s = (d1 + 3 * slot) % 10;
    let g = (d2 + 7 * slot) % 10;
    let n = (d3 + 9 * slot) % 10;
    format!("{}{} {}{}", FIRST[f], SECOND[s], FIRST[g], SECOND[n])
}

/// A generated retrieval task over its own graph.
pub struct PlantedTask {
    pub documents: Vec<Document>,
    pub question: String,
    pub seed_chunk: ChunkId,
    pub bridge_chunk: ChunkId,
    pub evidence_chunk: ChunkId,
    pub graph: Cig,
}

pub fn task_graph_config() -> GraphConfig {
    GraphConfig {
        semantic_top_k: 2,
        keyword_threshold: 2,
        keywords_per_chunk: 5,
        corpus: CorpusConfig {
            max_chunk_size: 110,
            split_punctuation: vec!['.'],
        },
    }
}

/// Shared distractor pool for the dataset-extension step.
pub fn distractor_pool(count: usize) -> Vec<Document> {
    (0..count)
        .map(|i| {
            let base = 5000 + i * 4;
            let e1 = entity(base);
            let e2 = entity(base + 1);
            let e3 = entity(base + 2);
            let body = format!(
                "{e1} traded maps with {e2} near the old lighthouse. \
                 {e2} kept a ledger of storms for {e3}. \
                 Every winter {e3} repainted the pier railings."
            );
            Document::new(format!("pool-{i:03}"), format!("Pool Volume {i}"), body).unwrap()
        })
        .collect()
}

/// Keyword overlap plan: the seed chunk carries {q1, q2, b1, b2, b3}, the
/// bridge {b1, b2, b3, c1, c2}, the evidence {b1, c1, c2, ans}. Seed and
/// bridge share three entities (keyword edge on top of the structural one),
/// bridge and evidence share three (the planted keyword hop), seed and
/// evidence share only one, so no shortcut edge can form.
fn build_topic_documents(nonce: usize) -> (Vec<Document>, [String; 8]) {
    let q1 = task_entity(nonce, 0);
    let q2 = task_entity(nonce, 1);
    let b1 = task_entity(nonce, 2);
    let b2 = task_entity(nonce, 3);
    let b3 = task_entity(nonce, 4);
    let c1 = task_entity(nonce, 5);
    let c2 = task_entity(nonce, 6);
    let ans = task_entity(nonce, 7);

    let chronicle = format!(
        "{q1} met {q2} cataloguing {b1}, {b2}, {b3}. \
         {b1} and {b2} asked {b3} to consult {c1} and {c2}. \
         The catalogue closed after a long and quiet decade of rain."
    );
    let register = format!(
        "The register opens with a list of unpaid harbour fees and stamps. \
         {b1} wrote that {c1} and {c2} kept the ledger at {ans}. \
         Nothing else of note survives anywhere in the register."
    );
    let docs = vec![
        Document::new(
            format!("chronicle-{nonce:04}"),
            format!("Chronicle {nonce}"),
            chronicle,
        )
        .unwrap(),
        Document::new(
            format!("register-{nonce:04}"),
            format!("Register {nonce}"),
            register,
        )
        .unwrap(),
    ];
    (docs, [q1, q2, b1, b2, b3, c1, c2, ans])
}

fn bfs_paths_of_len2(g: &Cig, s: &ChunkId, e: &ChunkId) -> Vec<ChunkId> {
    // Middle nodes of every s-x-e path.
    g.neighbors(s)
        .iter()
        .filter(|x| g.neighbors(x).contains(e))
        .cloned()
        .collect()
}

fn bfs_distance(g: &Cig, s: &ChunkId, e: &ChunkId) -> Option<usize> {
    let mut dist = std::collections::BTreeMap::new();
    dist.insert(s.clone(), 0usize);
    let mut queue = VecDeque::new();
    queue.push_back(s.clone());
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        if &node == e {
            return Some(d);
        }
        for next in g.neighbors(&node) {
            if !dist.contains_key(next) {
                dist.insert(next.clone(), d + 1);
                queue.push_back(next.clone());
            }
        }
    }
    None
}

/// Generate one task; `index` seeds both the entity names and the
/// distractor draw. Rerolls (bounded) until the planted path is the unique
/// shortest route from seed to evidence.
pub fn planted_task(index: usize, pool: &[Document], provider: &Provider) -> PlantedTask {
    let config = task_graph_config();
    for attempt in 0..50 {
        let nonce = index * 64 + attempt;
        let (topic_docs, names) = build_topic_documents(nonce);
        let [q1, q2, ..] = names;

        let example = QaExample {
            question: format!("When did {q1} first meet {q2}?"),
            gold_answers: vec!["unused".into()],
            evidence_chunk_ids: vec![],
            topic_doc_ids: topic_docs.iter().map(|d| d.doc_id.clone()).collect(),
        };
        let extended = extend_dataset(&[example], pool, 12, nonce as u64)
            .expect("pool is large enough")
            .remove(0);

        let mut documents = topic_docs;
        for doc_id in &extended.topic_doc_ids[2..] {
            let doc = pool
                .iter()
                .find(|d| &d.doc_id == doc_id)
                .expect("extension only picks pool documents");
            documents.push(doc.clone());
        }
        assert_eq!(documents.len(), 12);

        let graph = build_cig(&documents, provider, &config).expect("task graph builds");
        let seed_chunk = ChunkId::new(&DocId::new(format!("chronicle-{nonce:04}")), 0);
        let bridge_chunk = ChunkId::new(&DocId::new(format!("chronicle-{nonce:04}")), 1);
        let evidence_chunk = ChunkId::new(&DocId::new(format!("register-{nonce:04}")), 1);

        // The planted route must be the unique shortest path: distance
        // exactly two with the bridge as the only middle node.
        if bfs_distance(&graph, &seed_chunk, &evidence_chunk) != Some(2) {
            continue;
        }
        let middles = bfs_paths_of_len2(&graph, &seed_chunk, &evidence_chunk);
        if middles != vec![bridge_chunk.clone()] {
            continue;
        }
        let bridge_edge = graph
            .edge_between(&bridge_chunk, &evidence_chunk)
            .expect("planted keyword edge exists");
        assert!(
            bridge_edge.w_keyword > 2,
            "bridge-evidence edge must be a keyword edge, got {bridge_edge:?}"
        );

        return PlantedTask {
            documents,
            question: extended.question,
            seed_chunk,
            bridge_chunk,
            evidence_chunk,
            graph,
        };
    }
    panic!("no valid planted task after 50 attempts for index {index}");
}

/// Evidence annotation used when training on a task: the seed and evidence
/// chunks are the question's supporting facts.
pub fn task_evidence(task: &PlantedTask) -> BTreeSet<ChunkId> {
    [task.seed_chunk.clone(), task.evidence_chunk.clone()]
        .into_iter()
        .collect()
}
