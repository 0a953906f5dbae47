//! Paragraph embeddings and cosine similarity.
//!
//! Providers turn text into fixed-length `f64` vectors; callers store them as
//! [`EmbeddingVector`]s of any [`Scalar`] type. Stored vectors are
//! L2-normalized, except the all-zero vector produced for text without tokens.

use std::borrow::Borrow;
use std::time::Duration;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use std::hash::Hasher;
use thiserror::Error;

use crate::scalar::Scalar;

pub const DEFAULT_DIMENSION: usize = 512;
pub const HASH_PROVIDER_ID: &str = "hash-v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Identifies an embedding function and its output size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbedderDescriptor {
    pub id: String,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<T>(Vec<T>);

impl<T: Scalar> EmbeddingVector<T> {
    pub fn zeros(dimension: usize) -> Self {
        EmbeddingVector(vec![T::zero(); dimension])
    }

    /// L2-normalizes `raw` in double precision; all-zero input stays zero.
    pub fn normalized(raw: &[f64]) -> Self {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self::zeros(raw.len());
        }
        EmbeddingVector(raw.iter().map(|v| T::from_f64_lossy(v / norm)).collect())
    }

    /// Wraps values as-is.
    pub fn from_values(values: Vec<T>) -> Self {
        EmbeddingVector(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> T {
        self.0.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| v.is_zero())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

fn dot<T: Scalar>(p: &[T], q: &[T]) -> T {
    p.iter().zip(q).map(|(&a, &b)| a * b).sum()
}

/// Cosine similarity `p·q / (‖p‖‖q‖)`; zero when either vector is all-zero.
pub fn cosine<T: Scalar>(p: &EmbeddingVector<T>, q: &EmbeddingVector<T>) -> Result<T, EmbedError> {
    if p.dimension() != q.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: p.dimension(),
            actual: q.dimension(),
        });
    }
    let (np, nq) = (p.norm(), q.norm());
    if np.is_zero() || nq.is_zero() {
        return Ok(T::zero());
    }
    Ok(dot(p.values(), q.values()) / (np * nq))
}

/// Row-major `rows × cols` matrix of cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// Column-wise maximum over all rows; empty when there are no rows.
    pub fn column_max(&self) -> Vec<T> {
        if self.rows == 0 {
            return Vec::new();
        }
        let mut best = self.row(0).to_vec();
        for i in 1..self.rows {
            for (b, &v) in best.iter_mut().zip(self.row(i)) {
                if v > *b {
                    *b = v;
                }
            }
        }
        best
    }
}

/// Cosine similarity of every query vector against every corpus vector.
///
/// Corpus norms are computed once; each entry is then a dot product scaled by
/// the two norms.
pub fn similarity_matrix<T, Q, D>(queries: &[Q], corpus: &[D]) -> Result<SimilarityMatrix<T>, EmbedError>
where
    T: Scalar,
    Q: Borrow<EmbeddingVector<T>>,
    D: Borrow<EmbeddingVector<T>>,
{
    let queries: Vec<&EmbeddingVector<T>> = queries.iter().map(Borrow::borrow).collect();
    let corpus: Vec<&EmbeddingVector<T>> = corpus.iter().map(Borrow::borrow).collect();
    let dim = queries
        .first()
        .or_else(|| corpus.first())
        .map(|v| v.dimension())
        .unwrap_or(0);
    for v in queries.iter().chain(&corpus) {
        if v.dimension() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                actual: v.dimension(),
            });
        }
    }
    let corpus_norms: Vec<T> = corpus.iter().map(|v| v.norm()).collect();
    let mut entries = Vec::with_capacity(queries.len() * corpus.len());
    for q in &queries {
        let nq = q.norm();
        for (d, &nd) in corpus.iter().zip(&corpus_norms) {
            if nq.is_zero() || nd.is_zero() {
                entries.push(T::zero());
            } else {
                entries.push(dot(q.values(), d.values()) / (nq * nd));
            }
        }
    }
    Ok(SimilarityMatrix {
        rows: queries.len(),
        cols: corpus.len(),
        entries,
    })
}

/// Source of paragraph embeddings. Implementations must be deterministic per
/// descriptor id and safe to call from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn descriptor(&self) -> &EmbedderDescriptor;

    /// Raw (not necessarily normalized) vectors, one per input text.
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;

    fn embed<T: Scalar>(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError>
    where
        Self: Sized,
    {
        embed_one(self, text)
    }
}

pub fn embed_one<T: Scalar>(
    provider: &(impl EmbeddingProvider + ?Sized),
    text: &str,
) -> Result<EmbeddingVector<T>, EmbedError> {
    Ok(embed_all(provider, &[text])?.pop().expect("one text in, one vector out"))
}

/// Embeds and normalizes a batch, checking the provider's vector length.
pub fn embed_all<T: Scalar>(
    provider: &(impl EmbeddingProvider + ?Sized),
    texts: &[&str],
) -> Result<Vec<EmbeddingVector<T>>, EmbedError> {
    let expected = provider.descriptor().dimension;
    let raw = provider.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(EmbedError::ProviderUnavailable(format!(
            "provider returned {} vectors for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    raw.iter()
        .map(|v| {
            if v.len() != expected {
                return Err(EmbedError::DimensionMismatch {
                    expected,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::ProviderUnavailable("non-finite embedding value".into()));
            }
            Ok(EmbeddingVector::normalized(v))
        })
        .collect()
}

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Signed feature hashing over unigrams and adjacent-token bigrams (`"a b"`)
/// with 64-bit FNV-1a. Bucket is `h mod dimension`; bit 63 picks the sign.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    descriptor: EmbedderDescriptor,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashEmbedder {
            descriptor: EmbedderDescriptor {
                id: HASH_PROVIDER_ID.to_string(),
                dimension,
            },
        }
    }

    /// Hashed features of `text` in order: all unigrams, then all bigrams.
    pub fn features(text: &str) -> Vec<String> {
        let tokens = tokenize(text);
        let bigrams = tokens.windows(2).map(|w| format!("{} {}", w[0], w[1]));
        tokens.iter().cloned().chain(bigrams).collect()
    }

    /// (bucket, sign) of one feature.
    pub fn bucket(&self, feature: &str) -> (usize, f64) {
        let h = fnv1a(feature.as_bytes());
        let bucket = (h % self.descriptor.dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }

    /// Unnormalized accumulation of the given features.
    pub fn accumulate<'a>(&self, features: impl IntoIterator<Item = &'a str>) -> Vec<f64> {
        let mut v = vec![0.0; self.descriptor.dimension];
        for f in features {
            let (b, s) = self.bucket(f);
            v[b] += s;
        }
        v
    }

    pub fn hash_embed(&self, text: &str) -> Vec<f64> {
        let features = Self::features(text);
        self.accumulate(features.iter().map(String::as_str))
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn descriptor(&self) -> &EmbedderDescriptor {
        &self.descriptor
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.hash_embed(t)).collect())
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    embeddings: Vec<Vec<f64>>,
}

/// HTTP encoder client: `POST {"texts": [...]}` answered by
/// `{"embeddings": [[...], ...]}`. Requests are split into batches.
pub struct RemoteEmbedder {
    descriptor: EmbedderDescriptor,
    url: String,
    batch_size: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, dimension: usize) -> Self {
        let url = url.into();
        RemoteEmbedder {
            descriptor: EmbedderDescriptor {
                id: format!("remote:{url}"),
                dimension,
            },
            url,
            batch_size: 64,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = ureq::AgentBuilder::new().timeout(timeout).build();
        self
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn descriptor(&self) -> &EmbedderDescriptor {
        &self.descriptor
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            let resp: RemoteResponse = self
                .agent
                .post(&self.url)
                .send_json(RemoteRequest { texts: batch })
                .map_err(|e| EmbedError::ProviderUnavailable(e.to_string()))?
                .into_json()
                .map_err(|e| EmbedError::ProviderUnavailable(format!("bad response body: {e}")))?;
            if resp.embeddings.len() != batch.len() {
                return Err(EmbedError::ProviderUnavailable(format!(
                    "expected {} embeddings, got {}",
                    batch.len(),
                    resp.embeddings.len()
                )));
            }
            out.extend(resp.embeddings);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(values: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::from_values(values.to_vec())
    }

    #[test]
    fn cosine_hand_values() {
        assert_abs_diff_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0, epsilon = 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(cosine(&v(&[1.0, 0.0]), &v(&[h, h])).unwrap(), 0.70710678, epsilon = 1e-8);
        let x = v(&[0.3, -2.0, 5.5]);
        assert_abs_diff_eq!(cosine(&x, &x).unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(cosine(&x, &v(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(cosine(&x, &v(&[1.0])), Err(EmbedError::DimensionMismatch { .. })));
    }

    #[test]
    fn identity_matrix_for_basis() {
        let basis = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let m = similarity_matrix(&basis, &basis).unwrap();
        assert_eq!((m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)), (1.0, 0.0, 0.0, 1.0));
        let empty = similarity_matrix::<f64, EmbeddingVector<f64>, _>(&[], &basis).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (0, 2));
        assert!(empty.column_max().is_empty());
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashEmbedder::new(16);
        let z: EmbeddingVector<f64> = e.embed("").unwrap();
        assert!(z.is_zero());
        let z: EmbeddingVector<f64> = e.embed(" .,;! ").unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("A. a!"), vec!["a", "a"]);
        assert_eq!(HashEmbedder::features("A. a!"), vec!["a", "a", "a a"]);
        assert_eq!(tokenize("Task: Check documents."), vec!["task", "check", "documents"]);
    }

    #[test]
    fn hash_embeddings_are_normalized_and_deterministic() {
        let e = HashEmbedder::default();
        let a: EmbeddingVector<f64> = e.embed("Task: Evaluate. Exclusive Gateway.").unwrap();
        let b: EmbeddingVector<f64> = e.embed("Task: Evaluate. Exclusive Gateway.").unwrap();
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.norm(), 1.0, epsilon = 1e-9);
        assert_eq!(a.dimension(), 512);
    }

    #[test]
    fn f32_vectors_work_too() {
        let e = HashEmbedder::new(64);
        let a: EmbeddingVector<f32> = e.embed("send letter").unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-6);
    }
}
