//! End-to-end evaluation runs and the ablation harnesses built on them.
//!
//! `run_eval` scores one dataset pass; the sweep helpers repeat it across
//! context formats (chain/iterative/shuffle), maximum chain lengths, and
//! graph densities. Per-example failures are recorded on the example and
//! zero-scored rather than aborting the run.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::{assemble_context, AssembleOptions, ContextFormat};
use crate::corpus::{Chunk, ChunkId, Document};
use crate::exec;
use crate::graph::{build_cig, Cig, GraphConfig};
use crate::providers::Provider;
use crate::retriever::{retrieve_chains, tfidf_baseline_retrieve, EvidenceChain, Hop};
use crate::scorer::ScorerModel;

use super::{accuracy, evidence_match_rate, exact_match, f1_score, EvalError, QaExample};

/// Retrieval stand-in used instead of the graph traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Baseline {
    None,
    Tfidf { top_n: usize },
}

/// One evaluation run's knobs, echoed into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub format: ContextFormat,
    pub max_len: usize,
    pub no_retrieval: bool,
    pub baseline: Baseline,
    pub shuffle_seed: u64,
    pub token_budget: Option<usize>,
    /// Upper bound on concurrent per-example evaluations (and therefore
    /// concurrent provider calls). `None` uses the default pool.
    pub concurrency: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format: ContextFormat::Chain,
            max_len: 5,
            no_retrieval: false,
            baseline: Baseline::None,
            shuffle_seed: 0,
            token_budget: None,
            concurrency: None,
        }
    }
}

/// Outcome of one example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub question: String,
    pub gold_answers: Vec<String>,
    pub prediction: String,
    pub em: u8,
    pub f1: f64,
    pub accuracy: u8,
    /// Present when the example carries gold evidence annotations.
    pub match_rate: Option<f64>,
    pub retrieved_chunk_ids: Vec<ChunkId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregated metrics plus the per-example records backing them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub em: f64,
    pub f1: f64,
    /// Mean over examples with gold evidence; 0 when none carry it.
    pub match_rate: f64,
    pub example_count: usize,
    pub config: RunConfig,
    pub per_example: Vec<ExampleRecord>,
}

fn evaluate_one(
    example: &QaExample,
    g: &Cig,
    model: &ScorerModel,
    provider: &Provider,
    config: &RunConfig,
    sorted_chunks: &[Chunk],
) -> ExampleRecord {
    let mut record = ExampleRecord {
        question: example.question.clone(),
        gold_answers: example.gold_answers.clone(),
        prediction: String::new(),
        em: 0,
        f1: 0.0,
        accuracy: 0,
        match_rate: if example.evidence_chunk_ids.is_empty() {
            None
        } else {
            Some(0.0)
        },
        retrieved_chunk_ids: Vec::new(),
        error: None,
    };

    let outcome: Result<(), EvalError> = (|| {
        let chains: Vec<EvidenceChain> = if config.no_retrieval {
            Vec::new()
        } else {
            match config.baseline {
                Baseline::None => {
                    retrieve_chains(&example.question, g, model, provider, config.max_len)?
                }
                Baseline::Tfidf { top_n } => {
                    let ids =
                        tfidf_baseline_retrieve(&example.question, sorted_chunks, top_n)?;
                    ids.first()
                        .map(|first| {
                            vec![EvidenceChain {
                                seed_id: first.clone(),
                                hops: ids
                                    .iter()
                                    .enumerate()
                                    .map(|(i, id)| Hop {
                                        chunk_id: id.clone(),
                                        score: if i == 0 { None } else { Some(0.0) },
                                    })
                                    .collect(),
                                max_len: top_n,
                            }]
                        })
                        .unwrap_or_default()
                }
            }
        };

        let opts = AssembleOptions {
            token_budget: config.token_budget,
            shuffle_seed: config.shuffle_seed,
        };
        let bundle = assemble_context(&chains, g, config.format, &opts)?;
        record.retrieved_chunk_ids = bundle.chunk_ids.clone();

        let prediction = if config.no_retrieval {
            provider.generate_answer_no_retrieval(&example.question)?
        } else {
            provider.generate_answer(&example.question, &bundle.joined())?
        };
        record.prediction = prediction;
        Ok(())
    })();

    if let Err(e) = outcome {
        record.error = Some(e.to_string());
    }

    record.em = exact_match(&record.prediction, &record.gold_answers);
    record.f1 = f1_score(&record.prediction, &record.gold_answers);
    record.accuracy = accuracy(&record.prediction, &record.gold_answers);
    let retrieved: BTreeSet<ChunkId> = record.retrieved_chunk_ids.iter().cloned().collect();
    record.match_rate = evidence_match_rate(&retrieved, &example.evidence_set());
    record
}

fn run_records(
    dataset: &[QaExample],
    g: &Cig,
    model: &ScorerModel,
    provider: &Provider,
    config: &RunConfig,
    sorted_chunks: &[Chunk],
) -> Vec<ExampleRecord> {
    let eval = |example: &QaExample| evaluate_one(example, g, model, provider, config, sorted_chunks);
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = config.concurrency {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
                use rayon::prelude::*;
                return pool.install(|| dataset.par_iter().map(eval).collect());
            }
        }
    }
    exec::map_slice(dataset, eval)
}

/// Evaluate a dataset end to end: retrieve (unless disabled), assemble
/// context, generate an answer, and score every metric.
pub fn run_eval(
    dataset: &[QaExample],
    g: &Cig,
    model: &ScorerModel,
    provider: &Provider,
    config: &RunConfig,
) -> Result<EvalReport, EvalError> {
    if config.max_len == 0 {
        return Err(EvalError::InvalidConfig {
            reason: "max_len must be at least 1".into(),
        });
    }
    let sorted_chunks: Vec<Chunk> = g.nodes().cloned().collect();
    let per_example = run_records(dataset, g, model, provider, config, &sorted_chunks);

    let n = per_example.len().max(1) as f64;
    let em = per_example.iter().map(|r| r.em as f64).sum::<f64>() / n;
    let f1 = per_example.iter().map(|r| r.f1).sum::<f64>() / n;
    let acc = per_example.iter().map(|r| r.accuracy as f64).sum::<f64>() / n;
    let with_evidence: Vec<f64> = per_example.iter().filter_map(|r| r.match_rate).collect();
    let match_rate = if with_evidence.is_empty() {
        0.0
    } else {
        with_evidence.iter().sum::<f64>() / with_evidence.len() as f64
    };

    Ok(EvalReport {
        accuracy: acc,
        em,
        f1,
        match_rate,
        example_count: per_example.len(),
        config: config.clone(),
        per_example,
    })
}

/// Run the chain/iterative/shuffle trio with otherwise identical settings.
pub fn run_format_ablation(
    dataset: &[QaExample],
    g: &Cig,
    model: &ScorerModel,
    provider: &Provider,
    base: &RunConfig,
) -> Result<Vec<(ContextFormat, EvalReport)>, EvalError> {
    let mut out = Vec::new();
    for format in [
        ContextFormat::Chain,
        ContextFormat::Iterative,
        ContextFormat::Shuffle,
    ] {
        let config = RunConfig {
            format,
            ..base.clone()
        };
        out.push((format, run_eval(dataset, g, model, provider, &config)?));
    }
    Ok(out)
}

/// Evaluate across maximum chain lengths (the 1-step condition reduces
/// retrieval to seed selection).
pub fn run_chain_scope_sweep(
    dataset: &[QaExample],
    g: &Cig,
    model: &ScorerModel,
    provider: &Provider,
    base: &RunConfig,
    max_lens: &[usize],
) -> Result<Vec<(usize, EvalReport)>, EvalError> {
    let mut out = Vec::new();
    for &max_len in max_lens {
        let config = RunConfig {
            max_len,
            ..base.clone()
        };
        out.push((max_len, run_eval(dataset, g, model, provider, &config)?));
    }
    Ok(out)
}

/// One cell of the density sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityPoint {
    pub semantic_top_k: usize,
    pub keyword_threshold: usize,
    pub nodes: usize,
    pub edges: usize,
    pub structural_edges: usize,
    pub semantic_edges: usize,
    pub keyword_edges: usize,
    /// Evidence match rate when a dataset and model were supplied.
    pub match_rate: Option<f64>,
}

/// Rebuild the graph across (top-k, threshold) settings and report edge
/// counts, optionally re-running retrieval to track the evidence match
/// rate as density changes.
pub fn run_density_sweep(
    documents: &[Document],
    provider: &Provider,
    base: &GraphConfig,
    top_ks: &[usize],
    thresholds: &[usize],
    eval: Option<(&[QaExample], &ScorerModel, usize)>,
) -> Result<Vec<DensityPoint>, EvalError> {
    let mut out = Vec::new();
    for &k in top_ks {
        for &t in thresholds {
            let config = GraphConfig {
                semantic_top_k: k,
                keyword_threshold: t,
                ..base.clone()
            };
            let g = build_cig(documents, provider, &config)?;
            let (structural, semantic, keyword) = g.edge_family_counts();
            let match_rate = match eval {
                None => None,
                Some((dataset, model, max_len)) => {
                    let config = RunConfig {
                        max_len,
                        ..RunConfig::default()
                    };
                    Some(run_eval(dataset, &g, model, provider, &config)?.match_rate)
                }
            };
            out.push(DensityPoint {
                semantic_top_k: k,
                keyword_threshold: t,
                nodes: g.node_count(),
                edges: g.edge_count(),
                structural_edges: structural,
                semantic_edges: semantic,
                keyword_edges: keyword,
                match_rate,
            });
        }
    }
    Ok(out)
}

/// Persist a report as a summary JSON plus one record per line.
///
/// Writes `report.json` and `records.jsonl` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<(), EvalError> {
    let io_err = |source: std::io::Error| EvalError::Io {
        path: dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        accuracy: f64,
        em: f64,
        f1: f64,
        match_rate: f64,
        example_count: usize,
        config: &'a RunConfig,
    }
    let summary = Summary {
        accuracy: report.accuracy,
        em: report.em,
        f1: report.f1,
        match_rate: report.match_rate,
        example_count: report.example_count,
        config: &report.config,
    };
    let mut summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    summary_json.push('\n');
    std::fs::write(dir.join("report.json"), summary_json).map_err(io_err)?;

    let mut records = String::new();
    for record in &report.per_example {
        records.push_str(&serde_json::to_string(record).expect("record serializes"));
        records.push('\n');
    }
    std::fs::write(dir.join("records.jsonl"), records).map_err(io_err)?;
    Ok(())
}
