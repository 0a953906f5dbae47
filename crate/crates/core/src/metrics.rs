//! Scoring recommendations against ground truth.
//!
//! Exact-match ranking metrics (precision@k, recall@k) compare (label, type)
//! pairs. Text metrics (BLEU, a stem-matching METEOR variant, embedding
//! cosine) compare the `"<Type>: <label>"` renderings.

use std::collections::HashMap;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, embed_all, tokenize, EmbedError, EmbeddingProvider};
use crate::process::Element;

/// The true next elements of one query state. Duplicates are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    elements: Vec<Element>,
}

impl GroundTruth {
    /// `None` when `elements` is empty.
    pub fn new(elements: impl IntoIterator<Item = Element>) -> Option<Self> {
        let mut out: Vec<Element> = Vec::new();
        for e in elements {
            if !out.contains(&e) {
                out.push(e);
            }
        }
        if out.is_empty() {
            None
        } else {
            Some(GroundTruth { elements: out })
        }
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Truth without gateways and end events; `None` if nothing remains.
    pub fn filtered(&self) -> Option<Self> {
        GroundTruth::new(
            self.elements
                .iter()
                .filter(|e| !e.element_type.is_filtered_out())
                .cloned(),
        )
    }
}

/// Scores of one recommendation list against one ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSample {
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub bleu: f64,
    pub meteor: f64,
    pub cosine: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PrecisionAtK,
    RecallAtK,
    Bleu,
    Meteor,
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::PrecisionAtK,
        Metric::RecallAtK,
        Metric::Bleu,
        Metric::Meteor,
        Metric::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::PrecisionAtK => "precision_at_k",
            Metric::RecallAtK => "recall_at_k",
            Metric::Bleu => "bleu",
            Metric::Meteor => "meteor",
            Metric::Cosine => "cosine",
        }
    }

    pub fn heading(self, k: usize) -> String {
        match self {
            Metric::PrecisionAtK => format!("Precision@{k}"),
            Metric::RecallAtK => format!("Recall@{k}"),
            Metric::Bleu => "BLEU".into(),
            Metric::Meteor => "METEOR".into(),
            Metric::Cosine => "Cosine".into(),
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl MetricSample {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::PrecisionAtK => self.precision_at_k,
            Metric::RecallAtK => self.recall_at_k,
            Metric::Bleu => self.bleu,
            Metric::Meteor => self.meteor,
            Metric::Cosine => self.cosine,
        }
    }
}

/// Fraction of the top-`k` slots holding an exact truth match. Short lists
/// are not padded: the denominator is always `k`.
pub fn precision_at_k(recs: &[Element], truth: &GroundTruth, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let hits = recs
        .iter()
        .take(k)
        .filter(|r| truth.elements().contains(r))
        .count();
    hits as f64 / k as f64
}

/// Fraction of truth elements found among the top-`k` recommendations.
pub fn recall_at_k(recs: &[Element], truth: &GroundTruth, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let top = &recs[..recs.len().min(k)];
    let found = truth.elements().iter().filter(|t| top.contains(t)).count();
    found as f64 / truth.len() as f64
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU with clipped n-gram precision up to `max_order`, a brevity
/// penalty against the closest reference length (shorter wins ties), and
/// add-one smoothing of the precision at every order above one.
pub fn bleu(candidate: &str, references: &[&str], max_order: usize) -> f64 {
    assert!(max_order >= 1, "max_order must be at least 1");
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }

    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matched: usize = cand_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = cand.len().saturating_sub(n - 1);
        let p = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let geo = (log_sum / max_order as f64).exp();

    let c = cand.len() as i64;
    let r = refs
        .iter()
        .map(|t| t.len() as i64)
        .min_by_key(|&len| ((len - c).abs(), len))
        .expect("at least one reference");
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    (bp * geo).clamp(0.0, 1.0)
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// Snowball English stem of a lowercase token.
pub fn stem(token: &str) -> String {
    stemmer().stem(token).into_owned()
}

/// Aligned (candidate position, reference position) pairs: exact matches
/// first, then stem matches among the still-unaligned tokens. Each stage
/// aligns every candidate token, left to right, with the leftmost free
/// reference token.
fn align(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let cand_stems: Vec<String> = cand.iter().map(|t| stem(t)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|t| stem(t)).collect();
    for stage in 0..2 {
        for (i, c) in cand.iter().enumerate() {
            if cand_used[i] {
                continue;
            }
            let hit = (0..reference.len()).find(|&j| {
                !ref_used[j]
                    && if stage == 0 {
                        reference[j] == *c
                    } else {
                        ref_stems[j] == cand_stems[i]
                    }
            });
            if let Some(j) = hit {
                cand_used[i] = true;
                ref_used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn meteor_single(cand: &[String], reference: &[String]) -> f64 {
    let pairs = align(cand, reference);
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let precision = m as f64 / cand.len() as f64;
    let recall = m as f64 / reference.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

/// METEOR with exact and stem matching only (no synonym stage), recall
/// weighted 9:1 against precision and a cubic fragmentation penalty. The best
/// score over the references is returned.
pub fn meteor_lite(candidate: &str, references: &[&str]) -> f64 {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return 0.0;
    }
    references
        .iter()
        .map(|r| tokenize(r))
        .filter(|r| !r.is_empty())
        .map(|r| meteor_single(&cand, &r))
        .fold(0.0, f64::max)
}

/// Highest embedding cosine between the candidate and any reference.
pub fn cosine_score<P: EmbeddingProvider + ?Sized>(
    candidate: &str,
    references: &[&str],
    provider: &P,
) -> Result<f64, EmbedError> {
    if references.is_empty() {
        return Ok(0.0);
    }
    let mut texts = vec![candidate];
    texts.extend_from_slice(references);
    let vectors = embed_all::<f64>(provider, &texts)?;
    let mut best = f64::NEG_INFINITY;
    for r in &vectors[1..] {
        best = best.max(cosine(&vectors[0], r)?);
    }
    Ok(best)
}

/// All five metrics for one recommendation list. Text metrics take the best
/// (candidate, truth element) pair over the top `k` candidates; an empty list
/// scores zero everywhere.
pub fn score<P: EmbeddingProvider + ?Sized>(
    recs: &[Element],
    truth: &GroundTruth,
    k: usize,
    provider: &P,
) -> Result<MetricSample, EmbedError> {
    let mut sample = MetricSample {
        precision_at_k: precision_at_k(recs, truth, k),
        recall_at_k: recall_at_k(recs, truth, k),
        ..MetricSample::default()
    };
    let top = &recs[..recs.len().min(k)];
    if top.is_empty() {
        return Ok(sample);
    }
    let cand_texts: Vec<String> = top.iter().map(Element::sentence).collect();
    let ref_texts: Vec<String> = truth.elements().iter().map(Element::sentence).collect();
    let refs: Vec<&str> = ref_texts.iter().map(String::as_str).collect();

    let mut all: Vec<&str> = cand_texts.iter().map(String::as_str).collect();
    all.extend_from_slice(&refs);
    let vectors = embed_all::<f64>(provider, &all)?;
    let (cand_vecs, ref_vecs) = vectors.split_at(cand_texts.len());

    let mut best_cos = f64::NEG_INFINITY;
    for (i, c) in cand_texts.iter().enumerate() {
        for (j, r) in refs.iter().enumerate() {
            let single = [*r];
            sample.bleu = sample.bleu.max(bleu(c, &single, 4));
            sample.meteor = sample.meteor.max(meteor_lite(c, &single));
            best_cos = best_cos.max(cosine(&cand_vecs[i], &ref_vecs[j])?);
        }
    }
    sample.cosine = best_cos;
    Ok(sample)
}
