//! The trainable neighbour-scoring model.
//!
//! Two small MLPs sit on top of the frozen text encoder: an edge MLP mapping
//! the three interaction weights into the embedding space, and a scoring MLP
//! mapping the concatenated (query, path, neighbour, edge) representation to
//! a scalar. The scorer is trained with binary cross-entropy on
//! shortest-path supervision extracted from evidence annotations.
//!
//! All arithmetic is plain `f64` with explicit loops: forward passes are
//! deterministic, and the analytic gradients are checked against central
//! finite differences in the test suite.

mod model_io;
mod supervision;
mod train;

pub use model_io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use supervision::{generate_training_examples, SupervisionConfig};
pub use train::{evaluate_examples, train_scorer, TrainHyper, TrainReport};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::ChunkId;
use crate::graph::EdgeAttributes;
use crate::providers::ProviderError;

/// One supervised next-hop decision: from the node at the end of
/// `path_text`, is `candidate_text` the right way to move?
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub query: String,
    /// Concatenated texts of the traversed path, seed first.
    pub path_text: String,
    pub candidate_text: String,
    pub edge: EdgeAttributes,
    /// 1 when the candidate lies on a shortest path toward remaining
    /// evidence, else 0.
    pub label: u8,
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("no training examples")]
    EmptyExamples,
    #[error("all training examples share label {label}; cannot train a discriminator")]
    SingleClass { label: u8 },
    #[error("evidence node {chunk_id} is not in the graph")]
    UnknownEvidence { chunk_id: ChunkId },
    #[error("no evidence nodes given")]
    EmptyEvidence,
    #[error("non-finite {what} encountered")]
    NonFinite { what: String },
    #[error("vector dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file has format version {found}, this build reads {expected}")]
    FormatVersion { found: u32, expected: u32 },
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed model file: {reason}")]
    MalformedModel { reason: String },
}

/// A dense layer (`out × in` weights, row-major, plus bias).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `w[o * in_dim + i]` is the weight from input `i` to output `o`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn seeded(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // Uniform in (-1/sqrt(in), 1/sqrt(in)), drawn through a fixed
        // bits-to-float mapping so initialization is platform-stable.
        let scale = 1.0 / (in_dim as f64).sqrt();
        let mut layer = DenseLayer::zeros(in_dim, out_dim);
        for w in layer.w.iter_mut() {
            let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            *w = (unit * 2.0 - 1.0) * scale;
        }
        layer
    }

    /// `z = W x + b`.
    fn affine(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *slot = acc;
        }
    }
}

/// Edge-feature MLP `f_r`: (w_struc, w_sim, w_keyword_normalized) -> R^D,
/// with tanh between the two layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMlp {
    pub l1: DenseLayer,
    pub l2: DenseLayer,
}

/// Scoring MLP `f_n`: concatenated (query, path, neighbour, edge)
/// representations in exactly that order -> scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMlp {
    pub l1: DenseLayer,
    pub l2: DenseLayer,
}

/// The full scorer: both MLPs plus the dimensions they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    pub edge_mlp: EdgeMlp,
    pub score_mlp: ScoreMlp,
    pub dim: usize,
    pub hidden: usize,
    /// Shared-keyword counts are clipped to this and divided by it before
    /// entering the edge MLP, keeping inputs O(1).
    pub keyword_norm_cap: usize,
}

impl ScorerModel {
    pub fn zeros(dim: usize, hidden: usize, keyword_norm_cap: usize) -> Self {
        ScorerModel {
            edge_mlp: EdgeMlp {
                l1: DenseLayer::zeros(3, hidden),
                l2: DenseLayer::zeros(hidden, dim),
            },
            score_mlp: ScoreMlp {
                l1: DenseLayer::zeros(4 * dim, hidden),
                l2: DenseLayer::zeros(hidden, 1),
            },
            dim,
            hidden,
            keyword_norm_cap,
        }
    }

    pub fn seeded(dim: usize, hidden: usize, keyword_norm_cap: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = ScorerModel::zeros(dim, hidden, keyword_norm_cap);
        model.edge_mlp.l1 = DenseLayer::seeded(3, hidden, &mut rng);
        model.edge_mlp.l2 = DenseLayer::seeded(hidden, dim, &mut rng);
        model.score_mlp.l1 = DenseLayer::seeded(4 * dim, hidden, &mut rng);
        model.score_mlp.l2 = DenseLayer::seeded(hidden, 1, &mut rng);
        model
    }

    /// The edge-MLP input triple, in its fixed order.
    pub fn edge_features(&self, e: &EdgeAttributes) -> [f64; 3] {
        let cap = self.keyword_norm_cap.max(1);
        [
            e.w_struc as f64,
            e.w_sim,
            e.w_keyword.min(cap) as f64 / cap as f64,
        ]
    }

    pub fn layers(&self) -> [&DenseLayer; 4] {
        [
            &self.edge_mlp.l1,
            &self.edge_mlp.l2,
            &self.score_mlp.l1,
            &self.score_mlp.l2,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut DenseLayer; 4] {
        [
            &mut self.edge_mlp.l1,
            &mut self.edge_mlp.l2,
            &mut self.score_mlp.l1,
            &mut self.score_mlp.l2,
        ]
    }

    /// Total parameter count across both MLPs.
    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn param(&self, idx: usize) -> f64 {
        let mut idx = idx;
        for layer in self.layers() {
            if idx < layer.w.len() {
                return layer.w[idx];
            }
            idx -= layer.w.len();
            if idx < layer.b.len() {
                return layer.b[idx];
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let mut idx = idx;
        for layer in self.layers_mut() {
            if idx < layer.w.len() {
                layer.w[idx] = value;
                return;
            }
            idx -= layer.w.len();
            if idx < layer.b.len() {
                layer.b[idx] = value;
                return;
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

pub(crate) fn tanh_vec(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.tanh()).collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Forward pass of the edge MLP.
pub fn embed_edge(model: &ScorerModel, e: &EdgeAttributes) -> Vec<f64> {
    let x = model.edge_features(e);
    let mut z1 = vec![0.0; model.hidden];
    model.edge_mlp.l1.affine(&x, &mut z1);
    let h = tanh_vec(&z1);
    let mut out = vec![0.0; model.dim];
    model.edge_mlp.l2.affine(&h, &mut out);
    out
}

/// Score one candidate: the scoring MLP applied to the concatenation
/// (query, path, neighbour, edge embedding), in exactly that order.
pub fn score_candidate(
    model: &ScorerModel,
    e_query: &[f64],
    e_path: &[f64],
    e_neighbour: &[f64],
    edge: &EdgeAttributes,
) -> Result<f64, ScorerError> {
    for (name, v) in [
        ("query", e_query),
        ("path", e_path),
        ("neighbour", e_neighbour),
    ] {
        if v.len() != model.dim {
            return Err(ScorerError::DimensionMismatch {
                expected: model.dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ScorerError::NonFinite {
                what: format!("{name} embedding"),
            });
        }
    }
    let e_edge = embed_edge(model, edge);
    let mut z = Vec::with_capacity(4 * model.dim);
    z.extend_from_slice(e_query);
    z.extend_from_slice(e_path);
    z.extend_from_slice(e_neighbour);
    z.extend_from_slice(&e_edge);
    let mut z1 = vec![0.0; model.hidden];
    model.score_mlp.l1.affine(&z, &mut z1);
    let h = tanh_vec(&z1);
    let mut out = [0.0];
    model.score_mlp.l2.affine(&h, &mut out);
    Ok(out[0])
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone)]
pub(crate) struct Gradients(pub(crate) ScorerModel);

impl Gradients {
    pub(crate) fn zeros_like(model: &ScorerModel) -> Self {
        Gradients(ScorerModel::zeros(
            model.dim,
            model.hidden,
            model.keyword_norm_cap,
        ))
    }

    pub(crate) fn add_assign(&mut self, other: &Gradients) {
        for (mine, theirs) in self.0.layers_mut().into_iter().zip(other.0.layers()) {
            for (a, b) in mine.w.iter_mut().zip(&theirs.w) {
                *a += b;
            }
            for (a, b) in mine.b.iter_mut().zip(&theirs.b) {
                *a += b;
            }
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for layer in self.0.layers_mut() {
            for w in layer.w.iter_mut() {
                *w *= factor;
            }
            for b in layer.b.iter_mut() {
                *b *= factor;
            }
        }
    }
}

/// Forward + backward for one example. Returns (loss, gradients).
///
/// Loss is binary cross-entropy of `sigmoid(score)` against the label;
/// embeddings are frozen, so gradients flow only into the two MLPs.
pub(crate) fn loss_and_gradients(
    model: &ScorerModel,
    e_query: &[f64],
    e_path: &[f64],
    e_neighbour: &[f64],
    edge_features: &[f64; 3],
    label: f64,
) -> (f64, Gradients) {
    let d = model.dim;
    let h_dim = model.hidden;

    // Forward, keeping every activation the backward pass needs.
    let mut e_z1 = vec![0.0; h_dim];
    model.edge_mlp.l1.affine(edge_features, &mut e_z1);
    let e_h = tanh_vec(&e_z1);
    let mut e_out = vec![0.0; d];
    model.edge_mlp.l2.affine(&e_h, &mut e_out);

    let mut z = Vec::with_capacity(4 * d);
    z.extend_from_slice(e_query);
    z.extend_from_slice(e_path);
    z.extend_from_slice(e_neighbour);
    z.extend_from_slice(&e_out);

    let mut s_z1 = vec![0.0; h_dim];
    model.score_mlp.l1.affine(&z, &mut s_z1);
    let s_h = tanh_vec(&s_z1);
    let mut score = [0.0];
    model.score_mlp.l2.affine(&s_h, &mut score);
    let score = score[0];

    let p = sigmoid(score);
    let eps = 1e-12;
    let loss = -(label * (p + eps).ln() + (1.0 - label) * (1.0 - p + eps).ln());

    // Backward.
    let mut grads = Gradients::zeros_like(model);
    let d_score = p - label;

    // score_mlp.l2: out = W2 s_h + b2.
    {
        let g = &mut grads.0.score_mlp.l2;
        for (gw, sh) in g.w.iter_mut().zip(&s_h) {
            *gw = d_score * sh;
        }
        g.b[0] = d_score;
    }
    // d s_h = W2^T d_score; d s_z1 = d s_h * (1 - s_h^2).
    let mut d_s_z1 = vec![0.0; h_dim];
    for (k, slot) in d_s_z1.iter_mut().enumerate() {
        let d_sh = model.score_mlp.l2.w[k] * d_score;
        *slot = d_sh * (1.0 - s_h[k] * s_h[k]);
    }
    // score_mlp.l1 parameter grads.
    {
        let g = &mut grads.0.score_mlp.l1;
        for (k, dk) in d_s_z1.iter().enumerate() {
            let row = &mut g.w[k * 4 * d..(k + 1) * 4 * d];
            for (gw, zi) in row.iter_mut().zip(&z) {
                *gw = dk * zi;
            }
            g.b[k] = *dk;
        }
    }
    // Only the last D slots of z (the edge embedding) pass gradient onward;
    // the three text embeddings are frozen.
    let mut d_e_out = vec![0.0; d];
    for (k, dk) in d_s_z1.iter().enumerate() {
        let row = &model.score_mlp.l1.w[k * 4 * d..(k + 1) * 4 * d];
        for (slot, wi) in d_e_out.iter_mut().zip(&row[3 * d..]) {
            *slot += dk * wi;
        }
    }
    // edge_mlp.l2.
    {
        let g = &mut grads.0.edge_mlp.l2;
        for (o, do_) in d_e_out.iter().enumerate() {
            let row = &mut g.w[o * h_dim..(o + 1) * h_dim];
            for (gw, eh) in row.iter_mut().zip(&e_h) {
                *gw = do_ * eh;
            }
            g.b[o] = *do_;
        }
    }
    // d e_h = W2e^T d_e_out; d e_z1 = d e_h * (1 - e_h^2).
    let mut d_e_z1 = vec![0.0; h_dim];
    for (k, slot) in d_e_z1.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (o, do_) in d_e_out.iter().enumerate() {
            acc += model.edge_mlp.l2.w[o * h_dim + k] * do_;
        }
        *slot = acc * (1.0 - e_h[k] * e_h[k]);
    }
    // edge_mlp.l1.
    {
        let g = &mut grads.0.edge_mlp.l1;
        for (k, dk) in d_e_z1.iter().enumerate() {
            let row = &mut g.w[k * 3..(k + 1) * 3];
            for (gw, xi) in row.iter_mut().zip(edge_features) {
                *gw = dk * xi;
            }
            g.b[k] = *dk;
        }
    }

    (loss, grads)
}

/// Analytic gradients of the single-example BCE loss, returned in model
/// layout so `param(idx)` addresses them like parameters. This is the
/// surface the finite-difference gradient check compares against.
pub fn loss_gradient_probe(
    model: &ScorerModel,
    e_query: &[f64],
    e_path: &[f64],
    e_neighbour: &[f64],
    edge: &EdgeAttributes,
    label: f64,
) -> ScorerModel {
    let features = model.edge_features(edge);
    let (_, grads) = loss_and_gradients(model, e_query, e_path, e_neighbour, &features, label);
    grads.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(w_struc: u8, w_sim: f64, w_keyword: usize) -> EdgeAttributes {
        EdgeAttributes {
            w_struc,
            w_sim,
            w_keyword,
            shared_keywords: vec![String::from("k"); w_keyword],
        }
    }

    #[test]
    fn zero_model_edge_embedding_is_output_bias() {
        let mut model = ScorerModel::zeros(4, 8, 10);
        model.edge_mlp.l2.b = vec![0.5, -0.25, 0.0, 1.0];
        let out = embed_edge(&model, &edge(1, 0.9, 3));
        assert_eq!(out, vec![0.5, -0.25, 0.0, 1.0]);
    }

    #[test]
    fn edge_embedding_ignores_shared_keyword_content() {
        let model = ScorerModel::seeded(8, 16, 10, 7);
        let mut e1 = edge(1, 0.5, 3);
        let mut e2 = edge(1, 0.5, 3);
        e1.shared_keywords = vec!["apple".into(), "pear".into(), "plum".into()];
        e2.shared_keywords = vec!["x".into(), "y".into(), "z".into()];
        assert_eq!(embed_edge(&model, &e1), embed_edge(&model, &e2));
    }

    #[test]
    fn keyword_weight_is_capped_and_normalized() {
        let model = ScorerModel::zeros(4, 8, 10);
        assert_eq!(model.edge_features(&edge(0, 0.0, 25)), [0.0, 0.0, 1.0]);
        assert_eq!(model.edge_features(&edge(1, 0.5, 5)), [1.0, 0.5, 0.5]);
    }

    #[test]
    fn seeded_edge_forward_matches_hand_computation() {
        // Independent two-layer forward pass over the same parameters.
        let model = ScorerModel::seeded(3, 4, 10, 42);
        let e = edge(1, 0.5, 3);
        let x = model.edge_features(&e);

        let mut hand_h = vec![0.0; model.hidden];
        for (k, slot) in hand_h.iter_mut().enumerate() {
            let mut acc = model.edge_mlp.l1.b[k];
            for (i, xi) in x.iter().enumerate() {
                acc += model.edge_mlp.l1.w[k * 3 + i] * xi;
            }
            *slot = acc.tanh();
        }
        let mut hand_out = vec![0.0; model.dim];
        for (o, slot) in hand_out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, hk) in hand_h.iter().enumerate() {
                acc += model.edge_mlp.l2.w[o * model.hidden + k] * hk;
            }
            *slot = acc;
        }
        assert_eq!(embed_edge(&model, &e), hand_out);
    }

    #[test]
    fn zero_model_scores_all_candidates_equally() {
        let model = ScorerModel::zeros(4, 8, 10);
        let q = vec![0.1, 0.2, 0.3, 0.4];
        let p = vec![0.4, 0.3, 0.2, 0.1];
        let s1 = score_candidate(&model, &q, &p, &[1.0, 0.0, 0.0, 0.0], &edge(1, 0.9, 0)).unwrap();
        let s2 = score_candidate(&model, &q, &p, &[0.0, 1.0, 0.0, 0.0], &edge(0, 0.1, 5)).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn concatenation_order_is_load_bearing() {
        let model = ScorerModel::seeded(4, 8, 10, 3);
        let a = vec![0.9, 0.1, 0.0, 0.0];
        let b = vec![0.0, 0.1, 0.9, 0.0];
        let c = vec![0.2, 0.2, 0.2, 0.2];
        let e = edge(1, 0.5, 2);
        let s_abc = score_candidate(&model, &a, &b, &c, &e).unwrap();
        let s_bac = score_candidate(&model, &b, &a, &c, &e).unwrap();
        assert_ne!(s_abc, s_bac);
    }

    #[test]
    fn score_rejects_wrong_dimension() {
        let model = ScorerModel::zeros(4, 8, 10);
        let err =
            score_candidate(&model, &[0.0; 3], &[0.0; 4], &[0.0; 4], &edge(1, 0.0, 0)).unwrap_err();
        assert!(matches!(err, ScorerError::DimensionMismatch { .. }));
    }

    #[test]
    fn forward_is_deterministic() {
        let model = ScorerModel::seeded(6, 12, 10, 11);
        let q = vec![0.1; 6];
        let p = vec![0.2; 6];
        let n = vec![0.3; 6];
        let e = edge(0, 0.7, 4);
        let s1 = score_candidate(&model, &q, &p, &n, &e).unwrap();
        let s2 = score_candidate(&model, &q, &p, &n, &e).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn param_indexing_round_trips() {
        let mut model = ScorerModel::seeded(4, 8, 10, 1);
        let n = model.param_count();
        let probe = [0usize, 1, n / 2, n - 1];
        for &idx in &probe {
            let v = model.param(idx);
            model.set_param(idx, v + 1.0);
            assert_eq!(model.param(idx), v + 1.0);
            model.set_param(idx, v);
        }
    }
}
