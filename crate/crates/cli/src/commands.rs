//! The four pipeline commands.
//!
//! Every command resolves its settings in the same order: explicit flags
//! beat the optional `--config` JSON file, which beats built-in defaults.
//! Commands that write artifacts also write a manifest next to their
//! primary output.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::json;

use cig_core::context::{assemble_context, AssembleOptions, ContextFormat};
use cig_core::corpus::{ingest_corpus, ChunkId, CorpusConfig};
use cig_core::eval::{read_dataset, run_eval, write_report, Baseline, RunConfig};
use cig_core::graph::{build_cig, load_cig, save_cig, GraphConfig};
use cig_core::providers::{Provider, ProviderConfig};
use cig_core::retriever::retrieve_chains;
use cig_core::scorer::{
    generate_training_examples, load_model, save_model, train_scorer, SupervisionConfig,
    TrainHyper,
};

use crate::args::{BuildGraphArgs, EvalArgs, RetrieveArgs, TrainScorerArgs};
use crate::manifest::RunManifest;

/// Load the optional `--config` JSON file as a flat key -> value map.
fn load_config_file(path: &Option<PathBuf>) -> Result<serde_json::Map<String, serde_json::Value>> {
    match path {
        None => Ok(Default::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing config file {}", p.display()))?;
            match value {
                serde_json::Value::Object(map) => Ok(map),
                _ => bail!("config file {} must be a JSON object", p.display()),
            }
        }
    }
}

/// Flag-over-file-over-default resolution for one setting.
fn resolve<T: serde::de::DeserializeOwned>(
    flag: Option<T>,
    file: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(raw) = file.get(key) {
        return serde_json::from_value(raw.clone())
            .with_context(|| format!("config key {key:?} has the wrong type"));
    }
    Ok(default)
}

/// `--provider` accepts the literal `offline` or a path to a provider JSON
/// file; a config-file `provider` key supplies the same.
pub fn load_provider(spec: &str) -> Result<(Provider, ProviderConfig)> {
    let config: ProviderConfig = if spec == "offline" {
        ProviderConfig::default()
    } else {
        let text = std::fs::read_to_string(spec)
            .with_context(|| format!("reading provider config {spec}"))?;
        serde_json::from_str(&text).with_context(|| format!("parsing provider config {spec}"))?
    };
    let provider = Provider::from_config(&config)?;
    Ok((provider, config))
}

pub fn cmd_build_graph(args: &BuildGraphArgs) -> Result<()> {
    let file = load_config_file(&args.config)?;
    let max_chunk_size = resolve(args.max_chunk_size, &file, "max-chunk-size", 512)?;
    let top_k = resolve(args.top_k, &file, "top-k", 5)?;
    let keyword_threshold = resolve(args.keyword_threshold, &file, "keyword-threshold", 2)?;
    let keywords_per_chunk = resolve(args.keywords_per_chunk, &file, "keywords-per-chunk", 5)?;
    let provider_spec = resolve(
        args.provider.clone(),
        &file,
        "provider",
        "offline".to_string(),
    )?;

    let corpus_config = CorpusConfig {
        max_chunk_size,
        ..CorpusConfig::default()
    };
    let graph_config = GraphConfig {
        semantic_top_k: top_k,
        keyword_threshold,
        keywords_per_chunk,
        corpus: corpus_config.clone(),
    };
    graph_config.validate()?;
    let (provider, provider_config) = load_provider(&provider_spec)?;

    let resolved = json!({
        "corpus": args.corpus.display().to_string(),
        "out": args.out.display().to_string(),
        "graph_config": graph_config,
        "provider": provider_config,
    });
    let mut manifest = RunManifest::start("build-graph", resolved);
    manifest.record_input(&args.corpus)?;

    let documents = ingest_corpus(&args.corpus, &corpus_config)?;
    let graph = build_cig(&documents, &provider, &graph_config)?;
    save_cig(&graph, &args.out)?;

    let (structural, semantic, keyword) = graph.edge_family_counts();
    println!("nodes: {}", graph.node_count());
    println!(
        "edges: {} (structural {}, semantic {}, keyword {})",
        graph.edge_count(),
        structural,
        semantic,
        keyword
    );
    println!("graph written to {}", args.out.display());

    manifest.record_output(&args.out)?;
    manifest.finish(&args.out)?;
    Ok(())
}

pub fn cmd_train_scorer(args: &TrainScorerArgs) -> Result<()> {
    let file = load_config_file(&args.config)?;
    let lr = resolve(args.lr, &file, "lr", 1e-3)?;
    let epochs = resolve(args.epochs, &file, "epochs", 10)?;
    let batch_size = resolve(args.batch_size, &file, "batch-size", 32)?;
    let seed = resolve(args.seed, &file, "seed", 42)?;
    let hidden = resolve(args.hidden, &file, "hidden", 256)?;
    let keyword_norm_cap = resolve(args.keyword_norm_cap, &file, "keyword-norm-cap", 10)?;
    let negative_cap = resolve(args.negative_cap, &file, "negative-cap", 8)?;
    let provider_spec = resolve(
        args.provider.clone(),
        &file,
        "provider",
        "offline".to_string(),
    )?;

    let (provider, provider_config) = load_provider(&provider_spec)?;
    let graph = load_cig(&args.graph)?;
    if provider_config.embedding_dim != graph.dim() {
        bail!(
            "provider embeds at dimension {}, graph was built at {}",
            provider_config.embedding_dim,
            graph.dim()
        );
    }
    let dataset = read_dataset(&args.dataset)?;

    let supervision = SupervisionConfig {
        negative_cap: if args.no_negative_cap {
            None
        } else {
            Some(negative_cap)
        },
        seed,
    };
    let mut examples = Vec::new();
    let mut with_evidence = 0usize;
    for item in &dataset {
        let evidence: BTreeSet<ChunkId> = item.evidence_set();
        if evidence.is_empty() {
            continue;
        }
        with_evidence += 1;
        examples.extend(generate_training_examples(
            &graph,
            &item.question,
            &evidence,
            &supervision,
        )?);
    }
    if with_evidence == 0 {
        bail!(
            "no dataset example carries evidence_chunk_ids; shortest-path supervision \
             is impossible without them"
        );
    }

    let hyper = TrainHyper {
        lr,
        epochs,
        batch_size,
        seed,
        hidden,
        keyword_norm_cap,
    };
    let resolved = json!({
        "graph": args.graph.display().to_string(),
        "dataset": args.dataset.display().to_string(),
        "out": args.out.display().to_string(),
        "hyper": hyper,
        "negative_cap": supervision.negative_cap,
        "provider": provider_config,
    });
    let mut manifest = RunManifest::start("train-scorer", resolved);
    manifest.record_input(&args.graph)?;
    manifest.record_input(&args.dataset)?;
    manifest.record_seed("train", seed);

    let (model, report) = train_scorer(&examples, &provider, &hyper)?;
    save_model(&model, &provider_config.model_name, &args.out)?;

    println!(
        "examples: {} ({} positive, {} negative) from {} annotated questions",
        report.example_count, report.positive_count, report.negative_count, with_evidence
    );
    println!("final loss: {:.6}", report.final_loss);
    println!(
        "final training accuracy: {:.4}",
        report.final_train_accuracy
    );
    println!("model written to {}", args.out.display());

    manifest.record_output(&args.out)?;
    manifest.finish(&args.out)?;
    Ok(())
}

pub fn cmd_retrieve(args: &RetrieveArgs) -> Result<()> {
    let file = load_config_file(&args.config)?;
    let max_len = resolve(args.max_len, &file, "max-len", 5)?;
    let format: String = resolve(args.format.clone(), &file, "format", "chain".to_string())?;
    let format: ContextFormat = format.parse()?;
    let shuffle_seed = resolve(args.shuffle_seed, &file, "shuffle-seed", 0)?;
    let provider_spec = resolve(
        args.provider.clone(),
        &file,
        "provider",
        "offline".to_string(),
    )?;

    let (provider, provider_config) = load_provider(&provider_spec)?;
    let graph = load_cig(&args.graph)?;
    let (model, encoder_name) = load_model(&args.model)?;
    if model.dim != graph.dim() {
        bail!(
            "model expects embedding dimension {}, graph was built at {}",
            model.dim,
            graph.dim()
        );
    }
    if provider_config.embedding_dim != graph.dim() {
        bail!(
            "provider embeds at dimension {}, graph was built at {}",
            provider_config.embedding_dim,
            graph.dim()
        );
    }
    if provider_config.model_name != encoder_name {
        log::warn!(
            "model was trained against encoder {encoder_name:?}, provider is {:?}",
            provider_config.model_name
        );
    }

    let chains = retrieve_chains(&args.question, &graph, &model, &provider, max_len)?;
    for (i, chain) in chains.iter().enumerate() {
        println!("chain {} (seed {}):", i + 1, chain.seed_id);
        for hop in &chain.hops {
            let text = graph
                .node(&hop.chunk_id)
                .map(|c| c.text.as_str())
                .unwrap_or_default();
            match hop.score {
                None => println!("  {}  (seed)  {}", hop.chunk_id, text),
                Some(s) => println!("  {}  score={:.6}  {}", hop.chunk_id, s, text),
            }
        }
    }

    let opts = AssembleOptions {
        token_budget: None,
        shuffle_seed,
    };
    let bundle = assemble_context(&chains, &graph, format, &opts)?;
    println!("context ({format} format):");
    for (i, block) in bundle.blocks.iter().enumerate() {
        if i > 0 {
            println!("---");
        }
        println!("{block}");
    }

    if let Some(out) = &args.out {
        let resolved = json!({
            "graph": args.graph.display().to_string(),
            "model": args.model.display().to_string(),
            "question": args.question,
            "max_len": max_len,
            "format": format.to_string(),
            "shuffle_seed": shuffle_seed,
            "provider": provider_config,
        });
        let mut manifest = RunManifest::start("retrieve", resolved);
        manifest.record_input(&args.graph)?;
        manifest.record_input(&args.model)?;
        manifest.record_seed("shuffle", shuffle_seed);

        let mut lines = String::new();
        for chain in &chains {
            lines.push_str(&serde_json::to_string(chain).context("serializing chain")?);
            lines.push('\n');
        }
        std::fs::write(out, lines)
            .with_context(|| format!("writing chains to {}", out.display()))?;
        manifest.record_output(out)?;
        manifest.finish(out)?;
        println!("chains written to {}", out.display());
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let file = load_config_file(&args.config)?;
    let max_len = resolve(args.max_len, &file, "max-len", 5)?;
    let format: String = resolve(args.format.clone(), &file, "format", "chain".to_string())?;
    let format: ContextFormat = format.parse()?;
    let shuffle_seed = resolve(args.shuffle_seed, &file, "shuffle-seed", 0)?;
    let baseline: String = resolve(args.baseline.clone(), &file, "baseline", "none".to_string())?;
    let tfidf_top_n = resolve(args.tfidf_top_n, &file, "tfidf-top-n", max_len)?;
    let concurrency = match args.concurrency {
        Some(n) => Some(n),
        None => match file.get("concurrency") {
            Some(v) => Some(
                serde_json::from_value(v.clone())
                    .context("config key \"concurrency\" has the wrong type")?,
            ),
            None => None,
        },
    };
    let provider_spec = resolve(
        args.provider.clone(),
        &file,
        "provider",
        "offline".to_string(),
    )?;

    let baseline = match baseline.as_str() {
        "none" => Baseline::None,
        "tfidf" => Baseline::Tfidf { top_n: tfidf_top_n },
        other => bail!("unknown baseline {other:?} (expected none or tfidf)"),
    };

    let (provider, provider_config) = load_provider(&provider_spec)?;
    let graph = load_cig(&args.graph)?;
    let (model, _encoder) = load_model(&args.model)?;
    if model.dim != graph.dim() {
        bail!(
            "model expects embedding dimension {}, graph was built at {}",
            model.dim,
            graph.dim()
        );
    }
    let dataset = read_dataset(&args.dataset)?;

    let run_config = RunConfig {
        format,
        max_len,
        no_retrieval: args.no_retrieval,
        baseline,
        shuffle_seed,
        token_budget: None,
        concurrency,
    };
    let resolved = json!({
        "graph": args.graph.display().to_string(),
        "model": args.model.display().to_string(),
        "dataset": args.dataset.display().to_string(),
        "out": args.out.display().to_string(),
        "run_config": run_config,
        "provider": provider_config,
    });
    let mut manifest = RunManifest::start("eval", resolved);
    manifest.record_input(&args.graph)?;
    manifest.record_input(&args.model)?;
    manifest.record_input(&args.dataset)?;
    manifest.record_seed("shuffle", shuffle_seed);

    let report = run_eval(&dataset, &graph, &model, &provider, &run_config)?;
    write_report(&report, &args.out)?;

    println!("examples: {}", report.example_count);
    println!("accuracy: {:.4}", report.accuracy);
    println!("em: {:.4}", report.em);
    println!("f1: {:.4}", report.f1);
    println!("match_rate: {:.4}", report.match_rate);
    println!("report written to {}", args.out.display());

    manifest.record_output(&args.out.join("report.json"))?;
    manifest.record_output(&args.out.join("records.jsonl"))?;
    manifest.finish(&args.out.join("report.json"))?;
    Ok(())
}

/// Map an error chain to the documented exit codes: 3 for provider
/// failures, 4 for data problems, 1 otherwise (clap owns 2 for usage).
/// Wrapper enums are unfolded variant by variant because several carry
/// their sources transparently.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    use cig_core::context::ContextError;
    use cig_core::corpus::CorpusError;
    use cig_core::eval::EvalError;
    use cig_core::graph::GraphError;
    use cig_core::providers::ProviderError;
    use cig_core::retriever::RetrieveError;
    use cig_core::scorer::ScorerError;

    fn graph(e: &GraphError) -> i32 {
        match e {
            GraphError::Provider { .. } => 3,
            _ => 4,
        }
    }
    fn scorer(e: &ScorerError) -> i32 {
        match e {
            ScorerError::Provider(_) => 3,
            _ => 4,
        }
    }
    fn retrieve(e: &RetrieveError) -> i32 {
        match e {
            RetrieveError::Provider(_) => 3,
            RetrieveError::Scorer(s) => scorer(s),
            _ => 4,
        }
    }
    fn eval(e: &EvalError) -> i32 {
        match e {
            EvalError::Provider(_) => 3,
            EvalError::Retrieve(r) => retrieve(r),
            EvalError::Scorer(s) => scorer(s),
            EvalError::Graph(g) => graph(g),
            _ => 4,
        }
    }

    for cause in err.chain() {
        if cause.downcast_ref::<ProviderError>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<GraphError>() {
            return graph(e);
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return eval(e);
        }
        if let Some(e) = cause.downcast_ref::<RetrieveError>() {
            return retrieve(e);
        }
        if let Some(e) = cause.downcast_ref::<ScorerError>() {
            return scorer(e);
        }
        if cause.downcast_ref::<CorpusError>().is_some()
            || cause.downcast_ref::<ContextError>().is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
        {
            return 4;
        }
    }
    1
}

