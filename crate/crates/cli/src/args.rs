//! Command-line surface.
//!
//! Settings left unset on the command line may come from a `--config` JSON
//! object (keys named after the flags); explicit flags always win. Range
//! checks run inside clap, so an invalid value fails before any file is
//! touched.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

fn at_least_one(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("{s:?} is not an integer"))?;
    if v == 0 {
        return Err("value must be at least 1".into());
    }
    Ok(v)
}

#[derive(Parser, Debug)]
#[command(
    name = "cig",
    version,
    about = "Chunk-interaction graph retrieval: build graphs, train the \
             next-hop scorer, retrieve evidence chains, and evaluate QA"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Chunk a corpus and build the interaction graph file.
    BuildGraph(BuildGraphArgs),
    /// Train the neighbour scorer from evidence-annotated questions.
    TrainScorer(TrainScorerArgs),
    /// Retrieve evidence chains for one question.
    Retrieve(RetrieveArgs),
    /// Evaluate a QA dataset end to end.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct BuildGraphArgs {
    /// Line-delimited corpus with doc_id / title / body fields.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Graph file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum chunk size in characters.
    #[arg(long, value_parser = at_least_one)]
    pub max_chunk_size: Option<usize>,
    /// Semantic neighbours per node.
    #[arg(long, value_parser = at_least_one)]
    pub top_k: Option<usize>,
    /// Keyword edges require strictly more shared keywords than this.
    #[arg(long)]
    pub keyword_threshold: Option<usize>,
    /// Keywords extracted per chunk.
    #[arg(long, value_parser = at_least_one)]
    pub keywords_per_chunk: Option<usize>,
    /// "offline" or a path to a provider JSON file.
    #[arg(long)]
    pub provider: Option<String>,
    /// JSON object supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainScorerArgs {
    /// Graph file from build-graph.
    #[arg(long)]
    pub graph: PathBuf,
    /// QA dataset with evidence_chunk_ids annotations.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = at_least_one)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = at_least_one)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden width of both MLPs.
    #[arg(long, value_parser = at_least_one)]
    pub hidden: Option<usize>,
    /// Shared-keyword counts are normalized against this cap.
    #[arg(long, value_parser = at_least_one)]
    pub keyword_norm_cap: Option<usize>,
    /// Maximum negatives sampled per decision step.
    #[arg(long)]
    pub negative_cap: Option<usize>,
    /// Keep every off-path neighbour as a negative.
    #[arg(long)]
    pub no_negative_cap: bool,
    /// "offline" or a path to a provider JSON file.
    #[arg(long)]
    pub provider: Option<String>,
    /// JSON object supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Question text.
    #[arg(long)]
    pub question: String,
    /// Maximum chain length in nodes (1 = seeds only).
    #[arg(long, value_parser = at_least_one)]
    pub max_len: Option<usize>,
    /// chain | iterative | shuffle.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    /// Optional path for the chains as JSON lines (manifest written
    /// alongside).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// "offline" or a path to a provider JSON file.
    #[arg(long)]
    pub provider: Option<String>,
    /// JSON object supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Report directory (report.json + records.jsonl).
    #[arg(long)]
    pub out: PathBuf,
    /// chain | iterative | shuffle.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, value_parser = at_least_one)]
    pub max_len: Option<usize>,
    /// Answer from the question alone, skipping retrieval.
    #[arg(long)]
    pub no_retrieval: bool,
    /// none | tfidf.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Chunks returned by the tfidf baseline (defaults to max-len).
    #[arg(long, value_parser = at_least_one)]
    pub tfidf_top_n: Option<usize>,
    /// Ceiling on concurrent per-example provider calls.
    #[arg(long, value_parser = at_least_one)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    /// "offline" or a path to a provider JSON file.
    #[arg(long)]
    pub provider: Option<String>,
    /// JSON object supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}
