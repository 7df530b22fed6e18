//! Model file format: a header line followed by one JSON line of parameter
//! blocks, checksummed like the graph file.
//!
//! ```text
//! line 1  {"format_version", "dim", "hidden", "keyword_norm_cap",
//!          "encoder_model", "checksum"}
//! line 2  {"edge_l1_w": [...], "edge_l1_b": [...], ..., "score_l2_b": [...]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DenseLayer, EdgeMlp, ScoreMlp, ScorerError, ScorerModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dim: usize,
    hidden: usize,
    keyword_norm_cap: usize,
    /// Name of the frozen encoder the model was trained against.
    encoder_model: String,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct Params {
    edge_l1_w: Vec<f64>,
    edge_l1_b: Vec<f64>,
    edge_l2_w: Vec<f64>,
    edge_l2_b: Vec<f64>,
    score_l1_w: Vec<f64>,
    score_l1_b: Vec<f64>,
    score_l2_w: Vec<f64>,
    score_l2_b: Vec<f64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScorerError + '_ {
    move |source| ScorerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write the model with the encoder name it expects at inference time.
pub fn save_model(
    model: &ScorerModel,
    encoder_model: &str,
    path: &Path,
) -> Result<(), ScorerError> {
    let params = Params {
        edge_l1_w: model.edge_mlp.l1.w.clone(),
        edge_l1_b: model.edge_mlp.l1.b.clone(),
        edge_l2_w: model.edge_mlp.l2.w.clone(),
        edge_l2_b: model.edge_mlp.l2.b.clone(),
        score_l1_w: model.score_mlp.l1.w.clone(),
        score_l1_b: model.score_mlp.l1.b.clone(),
        score_l2_w: model.score_mlp.l2.w.clone(),
        score_l2_b: model.score_mlp.l2.b.clone(),
    };
    let mut body = serde_json::to_string(&params).expect("params serialize");
    body.push('\n');
    let header = Header {
        format_version: MODEL_FORMAT_VERSION,
        dim: model.dim,
        hidden: model.hidden,
        keyword_norm_cap: model.keyword_norm_cap,
        encoder_model: encoder_model.to_string(),
        checksum: sha256_hex(body.as_bytes()),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    out.push_str(&body);
    fs::write(path, out).map_err(io_err(path))
}

/// Load a model plus the encoder name it was trained with.
pub fn load_model(path: &Path) -> Result<(ScorerModel, String), ScorerError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    let (header_line, body) = content
        .split_once('\n')
        .ok_or_else(|| ScorerError::MalformedModel {
            reason: "missing header line".into(),
        })?;
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| ScorerError::MalformedModel {
            reason: format!("bad header: {e}"),
        })?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(ScorerError::FormatVersion {
            found: header.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    if sha256_hex(body.as_bytes()) != header.checksum {
        return Err(ScorerError::ChecksumMismatch);
    }
    let params: Params =
        serde_json::from_str(body.trim_end()).map_err(|e| ScorerError::MalformedModel {
            reason: format!("bad parameter block: {e}"),
        })?;

    let d = header.dim;
    let h = header.hidden;
    let expect = |name: &str, got: usize, want: usize| -> Result<(), ScorerError> {
        if got != want {
            Err(ScorerError::MalformedModel {
                reason: format!("{name} has {got} values, expected {want}"),
            })
        } else {
            Ok(())
        }
    };
    expect("edge_l1_w", params.edge_l1_w.len(), 3 * h)?;
    expect("edge_l1_b", params.edge_l1_b.len(), h)?;
    expect("edge_l2_w", params.edge_l2_w.len(), h * d)?;
    expect("edge_l2_b", params.edge_l2_b.len(), d)?;
    expect("score_l1_w", params.score_l1_w.len(), 4 * d * h)?;
    expect("score_l1_b", params.score_l1_b.len(), h)?;
    expect("score_l2_w", params.score_l2_w.len(), h)?;
    expect("score_l2_b", params.score_l2_b.len(), 1)?;

    let model = ScorerModel {
        edge_mlp: EdgeMlp {
            l1: DenseLayer {
                in_dim: 3,
                out_dim: h,
                w: params.edge_l1_w,
                b: params.edge_l1_b,
            },
            l2: DenseLayer {
                in_dim: h,
                out_dim: d,
                w: params.edge_l2_w,
                b: params.edge_l2_b,
            },
        },
        score_mlp: ScoreMlp {
            l1: DenseLayer {
                in_dim: 4 * d,
                out_dim: h,
                w: params.score_l1_w,
                b: params.score_l1_b,
            },
            l2: DenseLayer {
                in_dim: h,
                out_dim: 1,
                w: params.score_l2_w,
                b: params.score_l2_b,
            },
        },
        dim: d,
        hidden: h,
        keyword_norm_cap: header.keyword_norm_cap,
    };
    if !model.all_finite() {
        return Err(ScorerError::NonFinite {
            what: "loaded model parameters".into(),
        });
    }
    Ok((model, header.encoder_model))
}
