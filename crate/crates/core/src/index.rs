//! The slice index: every slice of a fixed length from a corpus of processes,
//! with its embedding, provenance and the elements that followed it.
//!
//! On disk an index is line-oriented JSON: a meta line, one line per record,
//! and a closing checksum line holding the SHA-256 (hex) of all prior bytes.
//! Floats are written in shortest round-trip form, so a load reproduces the
//! saved embeddings bit for bit.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{embed_all, EmbedError, EmbedderDescriptor, EmbeddingProvider, EmbeddingVector};
use crate::process::{contract_gateways, ProcessGraph};
use crate::scalar::Scalar;
use crate::slicer::{enumerate_slices, textualize, NextElement, SliceText};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("slice length must be at least 1")]
    InvalidSliceLength,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no process in the corpus yields a slice of length {0}")]
    EmptyIndex(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("index checksum mismatch (file truncated or modified)")]
    ChecksumMismatch,
    #[error("index stores {found} values, expected {expected}")]
    ScalarMismatch { found: String, expected: String },
    #[error("malformed index: {0}")]
    Malformed(String),
}

impl IndexError {
    pub fn code(&self) -> &'static str {
        match self {
            IndexError::InvalidSliceLength => "invalid_slice_length",
            IndexError::EmptyCorpus => "empty_corpus",
            IndexError::EmptyIndex(_) => "empty_index",
            IndexError::Embed(EmbedError::ProviderUnavailable(_)) => "provider_unavailable",
            IndexError::Embed(EmbedError::DimensionMismatch { .. }) => "dimension_mismatch",
            IndexError::Io(_) => "io_failure",
            IndexError::FormatVersionMismatch { .. } => "format_version_mismatch",
            IndexError::ChecksumMismatch => "checksum_mismatch",
            IndexError::ScalarMismatch { .. } => "scalar_mismatch",
            IndexError::Malformed(_) => "malformed_index",
        }
    }
}

/// Whether gateways take part in slicing or are contracted away first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    WithGateways,
    TasksOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::WithGateways => "with_gateways",
            Mode::TasksOnly => "tasks_only",
        }
    }

    /// Graph as seen in this mode.
    pub fn prepare(self, g: &ProcessGraph) -> ProcessGraph {
        match self {
            Mode::WithGateways => g.clone(),
            Mode::TasksOnly => contract_gateways(g),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "with_gateways" => Ok(Mode::WithGateways),
            "tasks_only" => Ok(Mode::TasksOnly),
            other => Err(format!("unknown mode `{other}` (expected with-gateways or tasks-only)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    pub slice_length: usize,
    pub embedder: EmbedderDescriptor,
    pub mode: Mode,
    pub scalar: String,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SliceRecord<T> {
    pub slice_text: SliceText,
    pub node_ids: Vec<String>,
    pub process_id: String,
    pub next: Vec<NextElement>,
    pub embedding: EmbeddingVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceIndex<T> {
    pub meta: IndexMeta,
    pub records: Vec<SliceRecord<T>>,
}

impl<T: Scalar> SliceIndex<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn embeddings(&self) -> Vec<EmbeddingVector<T>> {
        self.records.iter().map(|r| r.embedding.clone()).collect()
    }
}

/// Slices of one graph (already prepared for the mode) without embeddings.
fn slice_graph(g: &ProcessGraph, n: usize) -> Vec<(SliceText, Vec<String>, Vec<NextElement>)> {
    enumerate_slices(g, n)
        .into_iter()
        .map(|(slice, next)| {
            let text = textualize(&slice, g).expect("enumerated slices resolve in their graph");
            (text, slice.node_ids, next)
        })
        .collect()
}

/// Slices every graph of the corpus and embeds each slice paragraph.
///
/// Graphs are processed in parallel; records keep corpus order, then
/// depth-first slice order within each graph.
pub fn build_index<T: Scalar, P: EmbeddingProvider + ?Sized>(
    corpus: &[ProcessGraph],
    n: usize,
    provider: &P,
    mode: Mode,
) -> Result<SliceIndex<T>, IndexError> {
    if n == 0 {
        return Err(IndexError::InvalidSliceLength);
    }
    if corpus.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let per_graph: Vec<Result<Vec<SliceRecord<T>>, IndexError>> = corpus
        .par_iter()
        .map(|g| {
            let prepared = mode.prepare(g);
            let slices = slice_graph(&prepared, n);
            let texts: Vec<&str> = slices.iter().map(|(t, _, _)| t.as_str()).collect();
            let embeddings = if texts.is_empty() {
                Vec::new()
            } else {
                embed_all::<T>(provider, &texts)?
            };
            Ok(slices
                .into_iter()
                .zip(embeddings)
                .map(|((slice_text, node_ids, next), embedding)| SliceRecord {
                    slice_text,
                    node_ids,
                    process_id: g.process_id().to_string(),
                    next,
                    embedding,
                })
                .collect())
        })
        .collect();
    let mut records = Vec::new();
    for part in per_graph {
        records.extend(part?);
    }
    if records.is_empty() {
        return Err(IndexError::EmptyIndex(n));
    }
    Ok(SliceIndex {
        meta: IndexMeta {
            format_version: FORMAT_VERSION,
            slice_length: n,
            embedder: provider.descriptor().clone(),
            mode,
            scalar: T::NAME.to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        },
        records,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line<M, R> {
    Meta(M),
    Record(R),
    Checksum { sha256: String },
}

type OutLine<'a, T> = Line<&'a IndexMeta, &'a SliceRecord<T>>;
type InLine<T> = Line<IndexMeta, SliceRecord<T>>;

/// Serializes an index in the line-oriented format, checksum line included.
pub fn encode_index<T: Scalar>(index: &SliceIndex<T>) -> Vec<u8> {
    let mut body = Vec::new();
    let mut push = |line: &OutLine<'_, T>| {
        serde_json::to_writer(&mut body, line).expect("index lines serialize");
        body.push(b'\n');
    };
    push(&Line::Meta(&index.meta));
    for r in &index.records {
        push(&Line::Record(r));
    }
    let digest = hex::encode(Sha256::digest(&body));
    serde_json::to_writer(&mut body, &OutLine::<T>::Checksum { sha256: digest }).expect("checksum line");
    body.push(b'\n');
    body
}

pub fn decode_index<T: Scalar>(bytes: &[u8]) -> Result<SliceIndex<T>, IndexError> {
    // the checksum line is the last nonempty line; it covers everything before it
    let trimmed = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let split = trimmed.iter().rposition(|&b| b == b'\n').ok_or(IndexError::ChecksumMismatch)?;
    let (body, last) = (&bytes[..=split], &trimmed[split + 1..]);
    let expected = match serde_json::from_slice::<InLine<T>>(last) {
        Ok(Line::Checksum { sha256 }) => sha256,
        _ => return Err(IndexError::ChecksumMismatch),
    };
    if hex::encode(Sha256::digest(body)) != expected {
        return Err(IndexError::ChecksumMismatch);
    }

    let mut lines = body.split(|&b| b == b'\n').filter(|l| !l.is_empty());
    let meta = match lines.next().map(serde_json::from_slice::<serde_json::Value>) {
        Some(Ok(v)) => {
            let version = v.get("format_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
            if version != FORMAT_VERSION {
                return Err(IndexError::FormatVersionMismatch {
                    found: version,
                    expected: FORMAT_VERSION,
                });
            }
            match serde_json::from_value::<InLine<T>>(v) {
                Ok(Line::Meta(m)) => m,
                Ok(_) => return Err(IndexError::Malformed("first line is not a meta record".into())),
                Err(e) => return Err(IndexError::Malformed(e.to_string())),
            }
        }
        Some(Err(e)) => return Err(IndexError::Malformed(e.to_string())),
        None => return Err(IndexError::Malformed("missing meta line".into())),
    };
    if meta.scalar != T::NAME {
        return Err(IndexError::ScalarMismatch {
            found: meta.scalar,
            expected: T::NAME.to_string(),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        match serde_json::from_slice::<InLine<T>>(line) {
            Ok(Line::Record(r)) => {
                if r.embedding.dimension() != meta.embedder.dimension {
                    return Err(IndexError::Malformed(format!(
                        "record {i} has dimension {}, meta says {}",
                        r.embedding.dimension(),
                        meta.embedder.dimension
                    )));
                }
                records.push(r)
            }
            Ok(_) => return Err(IndexError::Malformed(format!("line {} is not a record", i + 2))),
            Err(e) => return Err(IndexError::Malformed(format!("line {}: {e}", i + 2))),
        }
    }
    Ok(SliceIndex { meta, records })
}

pub fn save_index<T: Scalar>(index: &SliceIndex<T>, path: impl AsRef<Path>) -> Result<(), IndexError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_index(index))?;
    file.sync_all()?;
    Ok(())
}

pub fn load_index<T: Scalar>(path: impl AsRef<Path>) -> Result<SliceIndex<T>, IndexError> {
    decode_index(&fs::read(path)?)
}
