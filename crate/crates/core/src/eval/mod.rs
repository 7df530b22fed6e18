//! Evaluation: dataset handling, answer metrics, and evidence match rate.
//!
//! Metrics follow the SQuAD conventions. A prediction is normalized by
//! lowercasing, deleting ASCII punctuation, dropping the articles a/an/the,
//! and collapsing whitespace; EM is normalized string equality against any
//! gold, F1 is the best token-multiset overlap, and accuracy (which the
//! answer-length ablations need, since verbose answers depress EM and F1)
//! is containment: some gold's tokens appearing as a contiguous subsequence
//! of the prediction's tokens.

mod harness;

pub use harness::{
    run_chain_scope_sweep, run_density_sweep, run_eval, run_format_ablation, write_report,
    Baseline, DensityPoint, EvalReport, ExampleRecord, RunConfig,
};

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextError;
use crate::corpus::{ChunkId, DocId, Document};
use crate::providers::ProviderError;
use crate::retriever::RetrieveError;
use crate::scorer::ScorerError;

/// One QA item: question, gold answers, and (when known) the gold evidence
/// chunks and the documents relevant to the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub question: String,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence_chunk_ids: Vec<ChunkId>,
    #[serde(default)]
    pub topic_doc_ids: Vec<DocId>,
}

impl QaExample {
    pub fn evidence_set(&self) -> BTreeSet<ChunkId> {
        self.evidence_chunk_ids.iter().cloned().collect()
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset file {path} line {line}: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("distractor pool too small: need {needed} more documents, only {available} available")]
    InsufficientPool { needed: usize, available: usize },
    #[error("invalid eval config: {reason}")]
    InvalidConfig { reason: String },
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

/// Read a line-delimited QA dataset.
pub fn read_dataset(path: &Path) -> Result<Vec<QaExample>, EvalError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| EvalError::Io {
        path: display.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| EvalError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let example: QaExample =
            serde_json::from_str(&line).map_err(|e| EvalError::MalformedRecord {
                path: display.clone(),
                line: line_no,
                reason: e.to_string(),
            })?;
        if example.gold_answers.is_empty() || example.gold_answers.iter().any(|a| a.is_empty()) {
            return Err(EvalError::MalformedRecord {
                path: display,
                line: line_no,
                reason: "answers must be a non-empty list of non-empty strings".into(),
            });
        }
        out.push(example);
    }
    Ok(out)
}

/// Pad every example's topic documents with seeded-random distractors drawn
/// from the pool, up to `target_topics` distinct documents. True topics are
/// never removed or duplicated.
pub fn extend_dataset(
    examples: &[QaExample],
    corpus_pool: &[Document],
    target_topics: usize,
    seed: u64,
) -> Result<Vec<QaExample>, EvalError> {
    let pool_ids: Vec<&DocId> = corpus_pool.iter().map(|d| &d.doc_id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(examples.len());
    for example in examples {
        let mut extended = example.clone();
        let current: BTreeSet<&DocId> = example.topic_doc_ids.iter().collect();
        if current.len() >= target_topics {
            out.push(extended);
            continue;
        }
        let needed = target_topics - current.len();
        let mut eligible: Vec<&DocId> = pool_ids
            .iter()
            .copied()
            .filter(|id| !current.contains(*id))
            .collect();
        // The pool may repeat documents; distractors must not.
        eligible.dedup();
        if eligible.len() < needed {
            return Err(EvalError::InsufficientPool {
                needed,
                available: eligible.len(),
            });
        }
        // Partial Fisher-Yates: the first `needed` slots become the sample.
        for i in 0..needed {
            let j = i + (rng.next_u64() % (eligible.len() - i) as u64) as usize;
            eligible.swap(i, j);
        }
        for id in &eligible[..needed] {
            extended.topic_doc_ids.push((*id).clone());
        }
        out.push(extended);
    }
    Ok(out)
}

/// SQuAD answer normalization: lowercase, strip ASCII punctuation, drop
/// the articles a/an/the, collapse whitespace. Idempotent.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn answer_tokens(s: &str) -> Vec<String> {
    normalize_answer(s)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// 1 iff the normalized prediction equals any normalized gold.
pub fn exact_match(pred: &str, golds: &[String]) -> u8 {
    let p = normalize_answer(pred);
    golds.iter().any(|g| normalize_answer(g) == p) as u8
}

/// Best token-multiset F1 over the golds; empty-vs-empty is 1, empty
/// against non-empty is 0.
pub fn f1_score(pred: &str, golds: &[String]) -> f64 {
    let pred_tokens = answer_tokens(pred);
    golds
        .iter()
        .map(|g| single_f1(&pred_tokens, &answer_tokens(g)))
        .fold(0.0, f64::max)
}

fn single_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut gold_counts: std::collections::BTreeMap<&str, usize> = Default::default();
    for t in gold {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = gold_counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// 1 iff some gold's normalized tokens appear as a contiguous subsequence
/// of the prediction's normalized tokens. Containment subsumes equality,
/// so accuracy is never below EM.
pub fn accuracy(pred: &str, golds: &[String]) -> u8 {
    let pred_tokens = answer_tokens(pred);
    golds
        .iter()
        .any(|g| {
            let gold_tokens = answer_tokens(g);
            if gold_tokens.is_empty() {
                return true;
            }
            if gold_tokens.len() > pred_tokens.len() {
                return false;
            }
            pred_tokens
                .windows(gold_tokens.len())
                .any(|w| w == gold_tokens.as_slice())
        }) as u8
}

/// Fraction of gold evidence chunks present among the retrieved ids.
/// `None` when the example carries no gold evidence annotation.
pub fn evidence_match_rate(
    retrieved: &BTreeSet<ChunkId>,
    gold: &BTreeSet<ChunkId>,
) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let hit = gold.intersection(retrieved).count();
    Some(hit as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn golds(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization_cases() {
        assert_eq!(normalize_answer("The Iran."), "iran");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("already normalized"), "already normalized");
        // Idempotence.
        let once = normalize_answer("An  Example, OF a THING!");
        assert_eq!(normalize_answer(&once), once);
    }

    #[test]
    fn f1_token_oracle_cases() {
        // pred {in, iran} vs gold {iran}: P=1/2, R=1 -> 2/3.
        assert!((f1_score("in Iran", &golds(&["Iran"])) - 2.0 / 3.0).abs() < 1e-12);
        // pred {yes, both, in, iran} vs {yes}: P=1/4, R=1 -> 0.4.
        assert!((f1_score("Yes, both in Iran.", &golds(&["yes"])) - 0.4).abs() < 1e-12);
        assert_eq!(f1_score("exact words", &golds(&["exact words"])), 1.0);
    }

    #[test]
    fn verbose_answer_scores_accuracy_but_not_em() {
        let g = golds(&["yes"]);
        assert_eq!(exact_match("Yes, both in Iran.", &g), 0);
        assert_eq!(accuracy("Yes, both in Iran.", &g), 1);
    }

    #[test]
    fn accuracy_requires_contiguous_tokens() {
        let g = golds(&["new york"]);
        assert_eq!(accuracy("new zealand york", &g), 0);
        assert_eq!(accuracy("in new york city", &g), 1);
    }

    #[test]
    fn accuracy_subsumes_exact_match() {
        for (pred, gold) in [
            ("Iran", "Iran"),
            ("in Iran", "Iran"),
            ("unrelated", "Iran"),
            ("the u.s.a.", "USA"),
        ] {
            let g = golds(&[gold]);
            assert!(accuracy(pred, &g) >= exact_match(pred, &g));
        }
    }

    #[test]
    fn metrics_are_symmetric_under_gold_permutation() {
        let a = golds(&["first answer", "second one"]);
        let b = golds(&["second one", "first answer"]);
        for pred in ["first answer", "second", "nothing"] {
            assert_eq!(exact_match(pred, &a), exact_match(pred, &b));
            assert_eq!(f1_score(pred, &a), f1_score(pred, &b));
            assert_eq!(accuracy(pred, &a), accuracy(pred, &b));
        }
    }

    #[test]
    fn match_rate_cases() {
        let gold: BTreeSet<ChunkId> =
            [ChunkId("a".into()), ChunkId("b".into())].into_iter().collect();
        let all: BTreeSet<ChunkId> = gold.clone();
        let none: BTreeSet<ChunkId> = BTreeSet::new();
        let half: BTreeSet<ChunkId> = [ChunkId("a".into()), ChunkId("z".into())]
            .into_iter()
            .collect();
        assert_eq!(evidence_match_rate(&all, &gold), Some(1.0));
        assert_eq!(evidence_match_rate(&none, &gold), Some(0.0));
        assert_eq!(evidence_match_rate(&half, &gold), Some(0.5));
        assert_eq!(evidence_match_rate(&all, &none), None);
    }

    #[test]
    fn extend_pads_to_target_without_touching_true_topics() {
        let pool: Vec<Document> = (0..20)
            .map(|i| Document::new(format!("doc{i:02}"), "T", "body text").unwrap())
            .collect();
        let example = QaExample {
            question: "q?".into(),
            gold_answers: golds(&["x"]),
            evidence_chunk_ids: vec![],
            topic_doc_ids: vec![DocId::new("doc00"), DocId::new("doc01")],
        };
        let extended = extend_dataset(std::slice::from_ref(&example), &pool, 12, 9).unwrap();
        let topics = &extended[0].topic_doc_ids;
        assert_eq!(topics.len(), 12);
        assert_eq!(&topics[0], &DocId::new("doc00"));
        assert_eq!(&topics[1], &DocId::new("doc01"));
        let distinct: BTreeSet<&DocId> = topics.iter().collect();
        assert_eq!(distinct.len(), 12, "distractors must be distinct");

        // Same seed, same assignment; reaching the target is a no-op.
        let again = extend_dataset(std::slice::from_ref(&example), &pool, 12, 9).unwrap();
        assert_eq!(extended, again);
        let untouched = extend_dataset(&[extended[0].clone()], &pool, 12, 1).unwrap();
        assert_eq!(untouched[0], extended[0]);
    }

    #[test]
    fn extend_fails_on_small_pool() {
        let pool: Vec<Document> = (0..5)
            .map(|i| Document::new(format!("doc{i}"), "T", "body").unwrap())
            .collect();
        let example = QaExample {
            question: "q?".into(),
            gold_answers: golds(&["x"]),
            evidence_chunk_ids: vec![],
            topic_doc_ids: vec![DocId::new("doc0")],
        };
        assert!(matches!(
            extend_dataset(&[example], &pool, 12, 0),
            Err(EvalError::InsufficientPool { .. })
        ));
    }

    #[test]
    fn dataset_reader_validates_answers() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"question":"q?","answers":["ok"],"topic_doc_ids":["d1"]}}"#
        )
        .unwrap();
        writeln!(f, r#"{{"question":"q2?","answers":[]}}"#).unwrap();
        let err = read_dataset(f.path()).unwrap_err();
        match err {
            EvalError::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other}"),
        }
    }
}
