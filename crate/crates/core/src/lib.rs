//! Next-element recommendation for partially built process models.
//!
//! A model is cut into slices (paths of `n` consecutive elements), each slice
//! is rendered as a short paragraph and embedded as a vector, and the slices
//! ending at the element being edited are matched against an index of slices
//! from existing processes. The elements that followed the best matches are
//! offered as recommendations.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the default precision.

pub mod bpmn;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod index;
pub mod metrics;
pub mod process;
pub mod recommend;
pub mod report;
pub mod scalar;
pub mod slicer;

pub use bpmn::{parse_bpmn, to_bpmn_xml, ParseError};
pub use embedding::{
    cosine, similarity_matrix, EmbedError, EmbedderDescriptor, EmbeddingProvider, EmbeddingVector,
    HashEmbedder, RemoteEmbedder, SimilarityMatrix,
};
pub use index::{build_index, load_index, save_index, IndexError, IndexMeta, Mode, SliceIndex, SliceRecord};
pub use process::{contract_gateways, Element, ElementType, Flow, GraphError, Node, ProcessGraph};
pub use recommend::{recommend, Recommendation, RecommendError, RecommendationQuery};
pub use scalar::Scalar;
pub use slicer::{enumerate_slices, extract_slices_ending_at, textualize, NextElement, Slice, SliceText};

/// Embedding in the default (double) precision.
pub type Embedding = EmbeddingVector<f64>;
/// Slice index in the default (double) precision.
pub type Index = SliceIndex<f64>;
pub type Record = SliceRecord<f64>;
pub type Matrix = SimilarityMatrix<f64>;

pub type Embedding32 = EmbeddingVector<f32>;
pub type Index32 = SliceIndex<f32>;
