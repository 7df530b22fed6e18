//! Graph file format.
//!
//! A graph is one UTF-8 text file of JSON lines:
//!
//! ```text
//! line 1      header: {"format_version", "dim", "config", "node_count",
//!                      "edge_count", "checksum"}
//! next N      one node per line, sorted by chunk_id
//! next M      one edge per line, sorted by (a, b) with a < b
//! ```
//!
//! The checksum is the lowercase hex SHA-256 of every byte after the header
//! line (node and edge lines including their trailing newlines). Loading
//! verifies the version, the checksum, and the counts before rebuilding the
//! graph, and takes the embedding dimension from the file rather than the
//! caller.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Chunk;

use super::{Cig, EdgeAttributes, GraphConfig, GraphError, NodePair};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dim: usize,
    config: GraphConfig,
    node_count: usize,
    edge_count: usize,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct EdgeLine {
    a: String,
    b: String,
    w_struc: u8,
    w_sim: f64,
    w_keyword: usize,
    #[serde(default)]
    shared_keywords: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serialize the graph body (nodes then edges) as JSON lines.
fn render_body(g: &Cig) -> String {
    let mut body = String::new();
    for chunk in g.nodes() {
        body.push_str(&serde_json::to_string(chunk).expect("chunk serializes"));
        body.push('\n');
    }
    for (pair, attrs) in g.edges() {
        let line = EdgeLine {
            a: pair.lo().as_str().to_string(),
            b: pair.hi().as_str().to_string(),
            w_struc: attrs.w_struc,
            w_sim: attrs.w_sim,
            w_keyword: attrs.w_keyword,
            shared_keywords: attrs.shared_keywords.clone(),
        };
        body.push_str(&serde_json::to_string(&line).expect("edge serializes"));
        body.push('\n');
    }
    body
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write the graph to a single file. Identical graphs produce byte-identical
/// files.
pub fn save_cig(g: &Cig, path: &Path) -> Result<(), GraphError> {
    let body = render_body(g);
    let header = Header {
        format_version: FORMAT_VERSION,
        dim: g.dim(),
        config: g.config().clone(),
        node_count: g.node_count(),
        edge_count: g.edge_count(),
        checksum: sha256_hex(body.as_bytes()),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    out.push_str(&body);
    fs::write(path, out).map_err(io_err(path))
}

/// Load and validate a graph file.
pub fn load_cig(path: &Path) -> Result<Cig, GraphError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    let (header_line, body) =
        content
            .split_once('\n')
            .ok_or_else(|| GraphError::MalformedFile {
                line: 1,
                reason: "missing header line".into(),
            })?;
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| GraphError::MalformedFile {
            line: 1,
            reason: format!("bad header: {e}"),
        })?;
    if header.format_version != FORMAT_VERSION {
        return Err(GraphError::FormatVersion {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let actual = sha256_hex(body.as_bytes());
    if actual != header.checksum {
        return Err(GraphError::ChecksumMismatch {
            expected: header.checksum,
            actual,
        });
    }

    let mut chunks: Vec<Chunk> = Vec::with_capacity(header.node_count);
    let mut edges: BTreeMap<NodePair, EdgeAttributes> = BTreeMap::new();
    for (idx, line) in body.lines().enumerate() {
        let line_no = idx + 2;
        if idx < header.node_count {
            let chunk: Chunk =
                serde_json::from_str(line).map_err(|e| GraphError::MalformedFile {
                    line: line_no,
                    reason: format!("bad node: {e}"),
                })?;
            chunks.push(chunk);
        } else {
            let edge: EdgeLine =
                serde_json::from_str(line).map_err(|e| GraphError::MalformedFile {
                    line: line_no,
                    reason: format!("bad edge: {e}"),
                })?;
            let pair = NodePair::new(
                crate::corpus::ChunkId(edge.a.clone()),
                crate::corpus::ChunkId(edge.b.clone()),
            )
            .ok_or_else(|| GraphError::MalformedFile {
                line: line_no,
                reason: format!("self-loop on {}", edge.a),
            })?;
            edges.insert(
                pair,
                EdgeAttributes {
                    w_struc: edge.w_struc,
                    w_sim: edge.w_sim,
                    w_keyword: edge.w_keyword,
                    shared_keywords: edge.shared_keywords,
                },
            );
        }
    }
    if chunks.len() != header.node_count || edges.len() != header.edge_count {
        return Err(GraphError::MalformedFile {
            line: 1,
            reason: format!(
                "header claims {} nodes / {} edges, file has {} / {}",
                header.node_count,
                header.edge_count,
                chunks.len(),
                edges.len()
            ),
        });
    }
    let g = Cig::from_parts(chunks, edges, header.config)?;
    if g.dim() != header.dim {
        return Err(GraphError::MalformedFile {
            line: 1,
            reason: format!("header dim {} but embeddings have dim {}", header.dim, g.dim()),
        });
    }
    Ok(g)
}
