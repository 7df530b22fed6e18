//! Mini-batch training of the scoring model.
//!
//! Text embeddings are computed once per unique string through the frozen
//! encoder; per-example gradients within a batch may be computed in parallel
//! but are summed in example order, so a fixed seed gives bitwise-identical
//! parameters with or without the `parallel` feature.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::providers::{EmbeddingVector, TextEmbedder};

use super::{loss_and_gradients, sigmoid, Gradients, ScorerError, ScorerModel, TrainingExample};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: usize,
    pub keyword_norm_cap: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 1e-3,
            epochs: 10,
            batch_size: 32,
            seed: 42,
            hidden: 256,
            keyword_norm_cap: 10,
        }
    }
}

/// Summary returned alongside the trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over all examples, measured after each epoch's updates.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub final_train_accuracy: f64,
    pub example_count: usize,
    pub positive_count: usize,
    pub negative_count: usize,
}

struct Prepared {
    query: usize,
    path: usize,
    neighbour: usize,
    edge_features: [f64; 3],
    label: f64,
}

struct Dataset {
    pool: Vec<EmbeddingVector>,
    examples: Vec<Prepared>,
}

fn prepare(
    examples: &[TrainingExample],
    encoder: &(impl TextEmbedder + ?Sized),
    model: &ScorerModel,
) -> Result<Dataset, ScorerError> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut texts: Vec<&str> = Vec::new();
    for ex in examples {
        for text in [&ex.query, &ex.path_text, &ex.candidate_text] {
            if !index.contains_key(text.as_str()) {
                index.insert(text.as_str(), texts.len());
                texts.push(text.as_str());
            }
        }
    }
    let pool = exec::try_map_slice(&texts, |t| encoder.embed(t))?;
    for v in &pool {
        if v.dim() != model.dim {
            return Err(ScorerError::DimensionMismatch {
                expected: model.dim,
                got: v.dim(),
            });
        }
    }
    let prepared = examples
        .iter()
        .map(|ex| Prepared {
            query: index[ex.query.as_str()],
            path: index[ex.path_text.as_str()],
            neighbour: index[ex.candidate_text.as_str()],
            edge_features: model.edge_features(&ex.edge),
            label: ex.label as f64,
        })
        .collect();
    Ok(Dataset {
        pool,
        examples: prepared,
    })
}

fn example_gradients(model: &ScorerModel, data: &Dataset, idx: usize) -> (f64, Gradients) {
    let ex = &data.examples[idx];
    loss_and_gradients(
        model,
        data.pool[ex.query].values(),
        data.pool[ex.path].values(),
        data.pool[ex.neighbour].values(),
        &ex.edge_features,
        ex.label,
    )
}

fn forward_score(model: &ScorerModel, data: &Dataset, idx: usize) -> f64 {
    let ex = &data.examples[idx];
    let e_edge = {
        let mut z1 = vec![0.0; model.hidden];
        model.edge_mlp.l1.affine(&ex.edge_features, &mut z1);
        let h = super::tanh_vec(&z1);
        let mut out = vec![0.0; model.dim];
        model.edge_mlp.l2.affine(&h, &mut out);
        out
    };
    let mut z = Vec::with_capacity(4 * model.dim);
    z.extend_from_slice(data.pool[ex.query].values());
    z.extend_from_slice(data.pool[ex.path].values());
    z.extend_from_slice(data.pool[ex.neighbour].values());
    z.extend_from_slice(&e_edge);
    let mut z1 = vec![0.0; model.hidden];
    model.score_mlp.l1.affine(&z, &mut z1);
    let h = super::tanh_vec(&z1);
    let mut out = [0.0];
    model.score_mlp.l2.affine(&h, &mut out);
    out[0]
}

fn mean_loss_and_accuracy(model: &ScorerModel, data: &Dataset) -> (f64, f64) {
    let eps = 1e-12;
    let n = data.examples.len();
    let stats: Vec<(f64, bool)> = exec::map_range(n, |i| {
        let score = forward_score(model, data, i);
        let p = sigmoid(score);
        let label = data.examples[i].label;
        let loss = -(label * (p + eps).ln() + (1.0 - label) * (1.0 - p + eps).ln());
        let correct = (p > 0.5) == (label > 0.5);
        (loss, correct)
    });
    let total: f64 = stats.iter().map(|(l, _)| l).sum();
    let correct = stats.iter().filter(|(_, c)| *c).count();
    (total / n as f64, correct as f64 / n as f64)
}

/// Train a fresh scorer on the examples with mini-batch gradient descent on
/// binary cross-entropy. Deterministic for a fixed seed.
pub fn train_scorer(
    examples: &[TrainingExample],
    encoder: &(impl TextEmbedder + ?Sized),
    hyper: &TrainHyper,
) -> Result<(ScorerModel, TrainReport), ScorerError> {
    if examples.is_empty() {
        return Err(ScorerError::EmptyExamples);
    }
    let positives = examples.iter().filter(|e| e.label == 1).count();
    let negatives = examples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ScorerError::SingleClass {
            label: examples[0].label,
        });
    }

    let mut model = ScorerModel::seeded(
        encoder.dim(),
        hyper.hidden,
        hyper.keyword_norm_cap,
        hyper.seed,
    );
    let data = prepare(examples, encoder, &model)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..data.examples.len()).collect();
    let batch_size = hyper.batch_size.max(1);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);

    for _ in 0..hyper.epochs {
        // Fisher-Yates with our own index draws: stable across platforms
        // and library versions.
        for i in (1..order.len()).rev() {
            let j = (shuffle_rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        for batch in order.chunks(batch_size) {
            let per_example: Vec<Gradients> = exec::map_slice(batch, |&idx| {
                let (_, grads) = example_gradients(&model, &data, idx);
                grads
            });
            let mut total = Gradients::zeros_like(&model);
            for g in &per_example {
                total.add_assign(g);
            }
            total.scale(1.0 / batch.len() as f64);
            for (param_layer, grad_layer) in
                model.layers_mut().into_iter().zip(total.0.layers())
            {
                for (p, g) in param_layer.w.iter_mut().zip(&grad_layer.w) {
                    *p -= hyper.lr * g;
                }
                for (p, g) in param_layer.b.iter_mut().zip(&grad_layer.b) {
                    *p -= hyper.lr * g;
                }
            }
        }
        let (loss, _) = mean_loss_and_accuracy(&model, &data);
        epoch_losses.push(loss);
    }

    if !model.all_finite() {
        return Err(ScorerError::NonFinite {
            what: "model parameters after training".into(),
        });
    }
    let (final_loss, final_train_accuracy) = mean_loss_and_accuracy(&model, &data);
    let report = TrainReport {
        epoch_losses,
        final_loss,
        final_train_accuracy,
        example_count: examples.len(),
        positive_count: positives,
        negative_count: negatives,
    };
    Ok((model, report))
}

/// Mean loss and accuracy of a trained model on labelled examples.
pub fn evaluate_examples(
    model: &ScorerModel,
    encoder: &(impl TextEmbedder + ?Sized),
    examples: &[TrainingExample],
) -> Result<(f64, f64), ScorerError> {
    if examples.is_empty() {
        return Err(ScorerError::EmptyExamples);
    }
    let data = prepare(examples, encoder, model)?;
    Ok(mean_loss_and_accuracy(model, &data))
}
