//! Next-element recommendation against a slice index.
//!
//! Slices ending at the target node are embedded and compared with every
//! indexed slice. Indexed slices are then visited from most to least similar,
//! and the elements that followed each one are collected until `k` distinct
//! (label, type) pairs have been gathered.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{embed_all, similarity_matrix, EmbedError, EmbeddingProvider};
use crate::index::{Mode, SliceIndex};
use crate::process::{Element, ElementType, GraphError, ProcessGraph};
use crate::scalar::Scalar;
use crate::slicer::{extract_slices_ending_at, textualize};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecommendError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no slice of length {0} ends at the target node")]
    NoSliceEndsAtTarget(usize),
    #[error("query mode {query} does not match index mode {index}")]
    ModeMismatch { query: Mode, index: Mode },
    #[error("embedder `{provider}` does not match index embedder `{index}`")]
    DescriptorMismatch { provider: String, index: String },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

impl RecommendError {
    pub fn code(&self) -> &'static str {
        match self {
            RecommendError::UnknownNode(_) => "task_not_found",
            RecommendError::NoSliceEndsAtTarget(_) => "no_slices",
            RecommendError::ModeMismatch { .. } => "mode_mismatch",
            RecommendError::DescriptorMismatch { .. } => "embedder_mismatch",
            RecommendError::EmptyIndex => "empty_index",
            RecommendError::InvalidK => "invalid_k",
            RecommendError::Embed(EmbedError::ProviderUnavailable(_)) => "provider_unavailable",
            RecommendError::Embed(EmbedError::DimensionMismatch { .. }) => "dimension_mismatch",
        }
    }
}

impl From<GraphError> for RecommendError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownNode(id) => RecommendError::UnknownNode(id),
            other => RecommendError::UnknownNode(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub matched_slice_text: String,
    pub source_process_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub label: Option<String>,
    #[serde(rename = "type")]
    pub element_type: ElementType,
    pub score: f64,
    pub explanation: Explanation,
}

impl Recommendation {
    pub fn element(&self) -> Element {
        Element {
            label: self.label.clone(),
            element_type: self.element_type.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecommendationQuery<'a> {
    pub graph: &'a ProcessGraph,
    pub target_node: &'a str,
    pub k: usize,
    pub filtered: bool,
    pub mode: Mode,
    /// Use the longest shorter slice length when no slice of the index's
    /// length ends at the target.
    pub fallback: bool,
}

impl<'a> RecommendationQuery<'a> {
    pub fn new(graph: &'a ProcessGraph, target_node: &'a str) -> Self {
        RecommendationQuery {
            graph,
            target_node,
            k: DEFAULT_K,
            filtered: false,
            mode: Mode::WithGateways,
            fallback: false,
        }
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn filtered(mut self, filtered: bool) -> Self {
        self.filtered = filtered;
        self
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn fallback(mut self, fallback: bool) -> Self {
        self.fallback = fallback;
        self
    }
}

/// Top-`k` next-element recommendations for `query.target_node`.
pub fn recommend<T: Scalar, P: EmbeddingProvider + ?Sized>(
    query: &RecommendationQuery<'_>,
    index: &SliceIndex<T>,
    provider: &P,
) -> Result<Vec<Recommendation>, RecommendError> {
    if query.k == 0 {
        return Err(RecommendError::InvalidK);
    }
    if query.mode != index.meta.mode {
        return Err(RecommendError::ModeMismatch {
            query: query.mode,
            index: index.meta.mode,
        });
    }
    if provider.descriptor() != &index.meta.embedder {
        return Err(RecommendError::DescriptorMismatch {
            provider: format!("{}/{}", provider.descriptor().id, provider.descriptor().dimension),
            index: format!("{}/{}", index.meta.embedder.id, index.meta.embedder.dimension),
        });
    }
    if index.is_empty() {
        return Err(RecommendError::EmptyIndex);
    }
    if !query.graph.contains(query.target_node) {
        return Err(RecommendError::UnknownNode(query.target_node.to_string()));
    }

    let prepared;
    let graph = match query.mode {
        Mode::WithGateways => query.graph,
        Mode::TasksOnly => {
            prepared = query.mode.prepare(query.graph);
            &prepared
        }
    };
    let n = index.meta.slice_length;
    let slices = extract_slices_ending_at(graph, query.target_node, n, query.fallback)?;
    if slices.is_empty() {
        return Err(RecommendError::NoSliceEndsAtTarget(n));
    }
    let texts = slices
        .iter()
        .map(|s| textualize(s, graph))
        .collect::<Result<Vec<_>, _>>()?;
    let text_refs: Vec<&str> = texts.iter().map(|t| t.as_str()).collect();
    let queries = embed_all::<T>(provider, &text_refs)?;

    let corpus: Vec<_> = index.records.iter().map(|r| &r.embedding).collect();
    let matrix = similarity_matrix(&queries, &corpus)?;
    Ok(collect_top(index, &matrix.column_max(), query.k, query.filtered))
}

/// Walks records by descending pooled similarity (earlier record first on
/// ties) and gathers up to `k` distinct next elements.
pub(crate) fn collect_top<T: Scalar>(
    index: &SliceIndex<T>,
    best: &[T],
    k: usize,
    filtered: bool,
) -> Vec<Recommendation> {
    let mut order: Vec<usize> = (0..best.len()).filter(|&j| !index.records[j].next.is_empty()).collect();
    order.sort_by(|&a, &b| {
        best[b]
            .partial_cmp(&best[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut seen: HashSet<Element> = HashSet::new();
    let mut out = Vec::with_capacity(k);
    'records: for j in order {
        let record = &index.records[j];
        let similarity = best[j].to_f64_lossy();
        for next in &record.next {
            if filtered && next.element_type.is_filtered_out() {
                continue;
            }
            if !seen.insert(next.element()) {
                continue;
            }
            out.push(Recommendation {
                label: next.label.clone(),
                element_type: next.element_type.clone(),
                score: similarity,
                explanation: Explanation {
                    matched_slice_text: record.slice_text.0.clone(),
                    source_process_id: record.process_id.clone(),
                    similarity,
                },
            });
            if out.len() == k {
                break 'records;
            }
        }
    }
    out
}
