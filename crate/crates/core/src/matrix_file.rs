//! Binary f32 matrix container with a JSON sidecar.
//!
//! Layout: magic bytes, `u32` rows, `u32` cols, then `rows × cols`
//! little-endian `f32` values in row-major order. The sidecar lives next to
//! the matrix at `<path>.json`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::features::{pos, EmbeddingTable, FeatureVector, LexiconSet, FEATURE_DIM};
use crate::model::manifest_path;
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8] = b"FV441";
pub const SCORE_MAGIC: &[u8] = b"SCR1";

pub fn to_bytes(magic: &[u8], m: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(magic.len() + 8 + 4 * m.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for &v in &m.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn from_bytes(magic: &[u8], bytes: &[u8], path: &Path) -> Result<Tensor> {
    if !bytes.starts_with(magic) {
        return Err(Error::format(path, format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
    }
    let rest = &bytes[magic.len()..];
    if rest.len() < 8 {
        return Err(Error::format(path, "truncated header"));
    }
    let rows = u32::from_le_bytes(rest[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(rest[4..8].try_into().unwrap()) as usize;
    let body = &rest[8..];
    if body.len() != rows * cols * 4 {
        return Err(Error::format(
            path,
            format!("expected {} value bytes for {rows}x{cols}, found {}", rows * cols * 4, body.len()),
        ));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Ok(Tensor::from_vec(rows, cols, data))
}

pub fn write_matrix<S: Serialize>(path: &Path, magic: &[u8], m: &Tensor, sidecar: &S) -> Result<()> {
    fs::write(path, to_bytes(magic, m))?;
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    fs::write(manifest_path(path), text)?;
    Ok(())
}

pub fn read_matrix<S: DeserializeOwned>(path: &Path, magic: &[u8]) -> Result<(Tensor, S)> {
    let m = from_bytes(magic, &crate::error::read_bytes(path)?, path)?;
    let side = manifest_path(path);
    let sidecar =
        serde_json::from_str(&crate::error::read_text(&side)?).map_err(|e| Error::format(&side, e.to_string()))?;
    Ok((m, sidecar))
}

/// Identifies the post behind one feature row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowKey {
    pub split: String,
    pub thread: String,
    pub post: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub format: String,
    pub dim: usize,
    /// (group, offset, width)
    pub groups: Vec<(String, usize, usize)>,
    pub pos_tags: Vec<String>,
    pub rows: Vec<RowKey>,
}

/// Per-thread feature tensors of every split, in dataset order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    pub splits: Vec<(String, Vec<Tensor>)>,
}

impl FeatureStore {
    /// Extracts the features of every split.
    pub fn extract(datasets: &[Dataset], lex: &LexiconSet, emb: &EmbeddingTable) -> Self {
        let splits = datasets
            .iter()
            .map(|d| (d.split.name().to_string(), crate::training::feature_matrices(d, lex, emb)))
            .collect();
        Self { splits }
    }

    pub fn split(&self, name: &str) -> Option<&[Tensor]> {
        self.splits.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// One matrix holding every post row plus its key.
    pub fn flatten(&self, datasets: &[Dataset]) -> Result<(Tensor, FeatureSidecar)> {
        let mut data = Vec::new();
        let mut rows = Vec::new();
        for d in datasets {
            let mats = self
                .split(d.split.name())
                .ok_or_else(|| Error::Invalid(format!("no features for split {}", d.split.name())))?;
            for (thread, m) in d.threads.iter().zip(mats) {
                for (post, row) in thread.posts.iter().zip(0..m.rows) {
                    data.extend_from_slice(m.row(row));
                    rows.push(RowKey {
                        split: d.split.name().to_string(),
                        thread: thread.id().to_string(),
                        post: post.id.clone(),
                    });
                }
            }
        }
        let sidecar = FeatureSidecar {
            format: "FV441".into(),
            dim: FEATURE_DIM,
            groups: FeatureVector::group_offsets().into_iter().map(|(n, o, w)| (n.to_string(), o, w)).collect(),
            pos_tags: pos::POS_TAGS.iter().map(|t| t.to_string()).collect(),
            rows,
        };
        Ok((Tensor::from_vec(sidecar.rows.len(), FEATURE_DIM, data), sidecar))
    }

    /// Regroups a flat matrix by the datasets' thread structure, checking
    /// that every row key lines up.
    pub fn unflatten(datasets: &[Dataset], m: &Tensor, sidecar: &FeatureSidecar, path: &Path) -> Result<Self> {
        if m.cols != FEATURE_DIM || sidecar.rows.len() != m.rows {
            return Err(Error::format(
                path,
                format!("matrix is {}x{}, sidecar lists {} rows", m.rows, m.cols, sidecar.rows.len()),
            ));
        }
        let mut next = 0;
        let mut splits = Vec::new();
        for d in datasets {
            let mut mats = Vec::with_capacity(d.threads.len());
            for thread in &d.threads {
                let mut rows = Vec::with_capacity(thread.len());
                for post in &thread.posts {
                    let key =
                        sidecar.rows.get(next).ok_or_else(|| Error::format(path, "fewer feature rows than posts"))?;
                    if key.split != d.split.name() || key.thread != thread.id() || key.post != post.id {
                        return Err(Error::format(
                            path,
                            format!(
                                "row {next} is {}/{}/{}, expected {}/{}/{}",
                                key.split,
                                key.thread,
                                key.post,
                                d.split.name(),
                                thread.id(),
                                post.id
                            ),
                        ));
                    }
                    rows.push(m.row(next).to_vec());
                    next += 1;
                }
                mats.push(if rows.is_empty() { Tensor::zeros(0, FEATURE_DIM) } else { Tensor::from_rows(&rows) });
            }
            splits.push((d.split.name().to_string(), mats));
        }
        if next != m.rows {
            return Err(Error::format(path, "more feature rows than posts"));
        }
        Ok(Self { splits })
    }
}
