//! Leave-one-group-out evaluation of the slicing recommender and of a
//! frequency-weighted random baseline.
//!
//! Each process in turn is held out; an index is built from the remaining
//! processes and the held-out process is replayed element by element in
//! depth-first construction order, asking for the next element at every step.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, EmbeddingProvider};
use crate::index::{build_index, IndexError, Mode, SliceIndex};
use crate::metrics::{score, GroundTruth, Metric, MetricSample};
use crate::process::{Element, ProcessGraph};
use crate::recommend::{recommend, RecommendError, RecommendationQuery};
use crate::report::{Algorithm, Configuration, EvalReport, ReportRow};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("leave-one-group-out needs at least 2 processes, got {0}")]
    InsufficientCorpus(usize),
    #[error("process id `{0}` appears more than once in the corpus")]
    DuplicateProcessId(String),
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::InsufficientCorpus(_) => "insufficient_corpus",
            EvalError::DuplicateProcessId(_) => "duplicate_process_id",
            EvalError::EmptyPool => "empty_pool",
            EvalError::InvalidConfig(_) => "invalid_config",
            EvalError::Embed(_) => "provider_unavailable",
            EvalError::Index(e) => e.code(),
            EvalError::Recommend(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub slice_length: usize,
    pub k: usize,
    pub filtered: bool,
    pub mode: Mode,
    pub runs_for_random: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            slice_length: 3,
            k: 3,
            filtered: false,
            mode: Mode::WithGateways,
            runs_for_random: 30,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.slice_length == 0 {
            return Err(EvalError::InvalidConfig("slice length must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(EvalError::InvalidConfig("k must be at least 1".into()));
        }
        if self.runs_for_random == 0 {
            return Err(EvalError::InvalidConfig("random runs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn configuration(&self) -> Configuration {
        if self.filtered {
            Configuration::Filtered
        } else {
            Configuration::AllElements
        }
    }
}

/// One simulated stage of building a process.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryState {
    /// The first `t` elements in construction order and the flows among them.
    pub prefix_graph: ProcessGraph,
    /// The `t`-th element.
    pub target_node: String,
    pub truth: GroundTruth,
}

/// Query states for every prefix of the depth-first construction order,
/// from one element up to all but the last. States whose target has no
/// successor are dropped.
pub fn generate_query_states(g: &ProcessGraph) -> Vec<QueryState> {
    let order = g.dfs_node_ids();
    let mut states = Vec::new();
    for t in 1..order.len() {
        let target = order[t - 1];
        let succ = g.successors(target).expect("dfs ids belong to the graph");
        let Some(truth) = GroundTruth::new(succ.into_iter().map(|n| n.element())) else {
            continue;
        };
        let prefix_graph = g
            .induced_subgraph(&order[..t])
            .expect("prefix ids belong to the graph");
        states.push(QueryState {
            prefix_graph,
            target_node: target.to_string(),
            truth,
        });
    }
    states
}

/// Query states under `config`: graphs prepared for the mode, truth filtered
/// when requested (states left without truth are dropped).
pub fn states_for(g: &ProcessGraph, config: &EvalConfig) -> Vec<QueryState> {
    let prepared = config.mode.prepare(g);
    generate_query_states(&prepared)
        .into_iter()
        .filter_map(|mut s| {
            if config.filtered {
                s.truth = s.truth.filtered()?;
            }
            Some(s)
        })
        .collect()
}

fn check_corpus(corpus: &[ProcessGraph]) -> Result<(), EvalError> {
    if corpus.len() < 2 {
        return Err(EvalError::InsufficientCorpus(corpus.len()));
    }
    let mut ids = HashSet::new();
    for g in corpus {
        if !ids.insert(g.process_id()) {
            return Err(EvalError::DuplicateProcessId(g.process_id().to_string()));
        }
    }
    Ok(())
}

fn others(corpus: &[ProcessGraph], held_out: usize) -> Vec<ProcessGraph> {
    corpus
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != held_out)
        .map(|(_, g)| g.clone())
        .collect()
}

/// Index built from every process except `held_out`; `None` when the other
/// processes yield no slice of the configured length.
pub fn fold_index<P: EmbeddingProvider + ?Sized>(
    corpus: &[ProcessGraph],
    held_out: usize,
    config: &EvalConfig,
    provider: &P,
) -> Result<Option<SliceIndex<f64>>, EvalError> {
    match build_index(&others(corpus, held_out), config.slice_length, provider, config.mode) {
        Ok(idx) => Ok(Some(idx)),
        Err(IndexError::EmptyIndex(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Per-state samples of the slicing recommender over all folds, in corpus
/// order. States without a slice of the configured length ending at the
/// target are not scored.
pub fn slicing_samples<P: EmbeddingProvider + ?Sized>(
    corpus: &[ProcessGraph],
    config: &EvalConfig,
    provider: &P,
) -> Result<Vec<MetricSample>, EvalError> {
    config.validate()?;
    check_corpus(corpus)?;
    let folds: Vec<Result<Vec<MetricSample>, EvalError>> = (0..corpus.len())
        .into_par_iter()
        .map(|held_out| {
            let Some(index) = fold_index(corpus, held_out, config, provider)? else {
                return Ok(Vec::new());
            };
            let mut samples = Vec::new();
            for state in states_for(&corpus[held_out], config) {
                let query = RecommendationQuery::new(&state.prefix_graph, &state.target_node)
                    .k(config.k)
                    .filtered(config.filtered)
                    .mode(config.mode);
                let recs = match recommend(&query, &index, provider) {
                    Ok(recs) => recs,
                    Err(RecommendError::NoSliceEndsAtTarget(_)) => continue,
                    Err(e) => return Err(e.into()),
                };
                let elements: Vec<Element> = recs.iter().map(|r| r.element()).collect();
                samples.push(score(&elements, &state.truth, config.k, provider)?);
            }
            Ok(samples)
        })
        .collect();
    let mut all = Vec::new();
    for f in folds {
        all.extend(f?);
    }
    Ok(all)
}

/// Elements of a corpus with their occurrence counts, in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementPool {
    entries: Vec<(Element, usize)>,
}

impl ElementPool {
    pub fn from_corpus(corpus: &[ProcessGraph], mode: Mode, filtered: bool) -> Self {
        let mut counts: HashMap<Element, usize> = HashMap::new();
        let mut order = Vec::new();
        for g in corpus {
            for node in mode.prepare(g).nodes() {
                if filtered && node.element_type.is_filtered_out() {
                    continue;
                }
                let e = node.element();
                let c = counts.entry(e.clone()).or_insert(0);
                if *c == 0 {
                    order.push(e);
                }
                *c += 1;
            }
        }
        ElementPool {
            entries: order
                .into_iter()
                .map(|e| {
                    let c = counts[&e];
                    (e, c)
                })
                .collect(),
        }
    }

    pub fn from_counts(entries: Vec<(Element, usize)>) -> Self {
        ElementPool {
            entries: entries.into_iter().filter(|(_, c)| *c > 0).collect(),
        }
    }

    pub fn entries(&self) -> &[(Element, usize)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `k` distinct elements drawn without replacement, each draw with
    /// probability proportional to occurrence count.
    pub fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<Element> {
        self.entries
            .choose_multiple_weighted(rng, k.min(self.entries.len()), |(_, c)| *c as f64)
            .expect("pool weights are positive and finite")
            .map(|(e, _)| e.clone())
            .collect()
    }
}

/// Samples of the random baseline: every state is scored once per run.
pub fn random_baseline<P: EmbeddingProvider + ?Sized>(
    pool: &ElementPool,
    states: &[QueryState],
    config: &EvalConfig,
    provider: &P,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<MetricSample>, EvalError> {
    config.validate()?;
    if pool.is_empty() {
        return Err(EvalError::EmptyPool);
    }
    let mut samples = Vec::with_capacity(states.len() * config.runs_for_random);
    for _ in 0..config.runs_for_random {
        for state in states {
            let picks = pool.sample(config.k, rng);
            samples.push(score(&picks, &state.truth, config.k, provider)?);
        }
    }
    Ok(samples)
}

/// Random baseline under leave-one-group-out: the pool of each fold comes
/// from the processes not held out. Fold `i` draws from ChaCha stream `i` of
/// `config.seed`.
pub fn random_samples<P: EmbeddingProvider + ?Sized>(
    corpus: &[ProcessGraph],
    config: &EvalConfig,
    provider: &P,
) -> Result<Vec<MetricSample>, EvalError> {
    config.validate()?;
    check_corpus(corpus)?;
    let folds: Vec<Result<Vec<MetricSample>, EvalError>> = (0..corpus.len())
        .into_par_iter()
        .map(|held_out| {
            let pool = ElementPool::from_corpus(&others(corpus, held_out), config.mode, config.filtered);
            let states = states_for(&corpus[held_out], config);
            if states.is_empty() {
                return Ok(Vec::new());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(held_out as u64);
            random_baseline(&pool, &states, config, provider, &mut rng)
        })
        .collect();
    let mut all = Vec::new();
    for f in folds {
        all.extend(f?);
    }
    Ok(all)
}

/// Slicing recommender under leave-one-group-out, aggregated into one row.
pub fn logo_cv<P: EmbeddingProvider + ?Sized>(
    dataset: &str,
    corpus: &[ProcessGraph],
    config: &EvalConfig,
    provider: &P,
) -> Result<ReportRow, EvalError> {
    let samples = slicing_samples(corpus, config, provider)?;
    Ok(ReportRow::from_samples(dataset, Algorithm::Slicing, config.configuration(), &samples))
}

/// Both algorithms for each requested configuration.
pub fn evaluate<P: EmbeddingProvider + ?Sized>(
    dataset: &str,
    corpus: &[ProcessGraph],
    base: &EvalConfig,
    configurations: &[Configuration],
    provider: &P,
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::new();
    for &configuration in configurations {
        let config = EvalConfig {
            filtered: configuration == Configuration::Filtered,
            ..base.clone()
        };
        rows.push(logo_cv(dataset, corpus, &config, provider)?);
        let random = random_samples(corpus, &config, provider)?;
        rows.push(ReportRow::from_samples(dataset, Algorithm::Random, configuration, &random));
    }
    Ok(EvalReport { k: base.k, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub slice_length: usize,
    pub row: ReportRow,
}

impl StudyRow {
    /// No state could be scored at this length.
    pub fn is_empty(&self) -> bool {
        self.row.samples() == 0
    }
}

/// One leave-one-group-out run per slice length.
pub fn slice_length_study<P: EmbeddingProvider + ?Sized>(
    dataset: &str,
    corpus: &[ProcessGraph],
    lengths: &[usize],
    base: &EvalConfig,
    provider: &P,
) -> Result<Vec<StudyRow>, EvalError> {
    lengths
        .iter()
        .map(|&n| {
            let config = EvalConfig {
                slice_length: n,
                ..base.clone()
            };
            Ok(StudyRow {
                slice_length: n,
                row: logo_cv(dataset, corpus, &config, provider)?,
            })
        })
        .collect()
}

/// Mean of one metric over a row, convenience for callers and tests.
pub fn mean_of(row: &ReportRow, metric: Metric) -> f64 {
    row.stat(metric).mean
}
