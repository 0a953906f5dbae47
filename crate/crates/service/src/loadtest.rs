//! Closed-loop load generator for the recommendation endpoint.
//!
//! Each simulated user sends a request, waits for the answer, thinks for a
//! random interval and repeats, until the shared request budget is spent.
//! Every request picks one of the workloads uniformly at random.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use slicematch::{to_bpmn_xml, Mode};
use thiserror::Error;

use crate::api::RecommendRequestBody;
use crate::synth::{query_target, workflow};

#[derive(Debug, Error)]
pub enum LoadTestError {
    #[error("target {url} is unreachable: {reason}")]
    TargetUnreachable { url: String, reason: String },
    #[error("invalid load test configuration: {0}")]
    InvalidConfig(String),
}

impl LoadTestError {
    pub fn code(&self) -> &'static str {
        match self {
            LoadTestError::TargetUnreachable { .. } => "target_unreachable",
            LoadTestError::InvalidConfig(_) => "invalid_config",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThinkTime {
    /// Send the next request as soon as the previous one returns.
    None,
    Uniform { min: Duration, max: Duration },
}

impl ThinkTime {
    pub fn standard() -> Self {
        ThinkTime::Uniform {
            min: Duration::from_secs(1),
            max: Duration::from_secs(5),
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> Option<Duration> {
        match self {
            ThinkTime::None => None,
            ThinkTime::Uniform { min, max } if min >= max => Some(min),
            ThinkTime::Uniform { min, max } => Some(rng.gen_range(min..=max)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadTestConfig {
    /// Base URL of the service, e.g. `http://127.0.0.1:8080`.
    pub target_url: String,
    pub users: usize,
    pub total_requests: usize,
    pub think: ThinkTime,
    pub seed: u64,
    pub request_timeout: Duration,
}

impl LoadTestConfig {
    pub fn new(target_url: impl Into<String>, users: usize, total_requests: usize) -> Self {
        LoadTestConfig {
            target_url: target_url.into(),
            users,
            total_requests,
            think: ThinkTime::standard(),
            seed: 0,
            request_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub name: String,
    pub body: RecommendRequestBody,
}

/// The four request types: a 5- and a 25-element workflow, each asked once
/// with gateways and once over tasks only.
pub fn standard_workloads(slice_length: usize, seed: u64) -> Vec<Workload> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for size in [5, 25] {
        // regenerate until both modes have a target
        let (g, targets) = loop {
            let g = workflow(&format!("load-{size}"), size, 0.4, &mut rng);
            let targets: Option<Vec<String>> = [Mode::WithGateways, Mode::TasksOnly]
                .iter()
                .map(|&m| query_target(&g, slice_length, m))
                .collect();
            if let Some(t) = targets {
                break (g, t);
            }
        };
        let xml = to_bpmn_xml(std::slice::from_ref(&g));
        for (mode, task_id) in [Mode::WithGateways, Mode::TasksOnly].into_iter().zip(targets) {
            out.push(Workload {
                name: format!("{size}-node/{mode}"),
                body: RecommendRequestBody {
                    bpmn_xml: xml.clone(),
                    task_id,
                    user_id: String::new(),
                    k: None,
                    filtered: None,
                    mode: Some(mode),
                },
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    pub p90: f64,
}

impl LatencySummary {
    /// `None` for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let avg = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let min = sorted[0];
        let max = sorted[sorted.len() - 1];
        Some(LatencySummary {
            avg: avg.clamp(min, max),
            min,
            max,
            p90: nearest_rank(&sorted, 0.9),
        })
    }
}

/// Nearest-rank percentile of an ascending sample: the value at rank
/// `ceil(q * n)`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadTestResult {
    pub users: usize,
    pub requests: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub avg_rps: f64,
    pub elapsed_s: f64,
    pub response_ms: LatencySummary,
}

struct Sample {
    latency_ms: f64,
    ok: bool,
}

/// Runs the load test. The target's health endpoint is checked first.
pub async fn load_test(config: &LoadTestConfig, workloads: &[Workload]) -> Result<LoadTestResult, LoadTestError> {
    if config.users == 0 || config.total_requests == 0 {
        return Err(LoadTestError::InvalidConfig("users and total_requests must be positive".into()));
    }
    if workloads.is_empty() {
        return Err(LoadTestError::InvalidConfig("no workloads".into()));
    }
    let base = config.target_url.trim_end_matches('/').to_string();
    let client = reqwest::Client::builder()
        .timeout(config.request_timeout)
        .pool_max_idle_per_host(config.users)
        .build()
        .map_err(|e| LoadTestError::InvalidConfig(e.to_string()))?;

    let unreachable = |reason: String| LoadTestError::TargetUnreachable {
        url: base.clone(),
        reason,
    };
    let health = client
        .get(format!("{base}/v1/health"))
        .send()
        .await
        .map_err(|e| unreachable(e.to_string()))?;
    if !health.status().is_success() {
        return Err(unreachable(format!("health check returned {}", health.status())));
    }

    let endpoint = Arc::new(format!("{base}/v1/recommendations"));
    let bodies: Arc<Vec<RecommendRequestBody>> = Arc::new(workloads.iter().map(|w| w.body.clone()).collect());
    let issued = Arc::new(AtomicUsize::new(0));
    let samples = Arc::new(Mutex::new(Vec::with_capacity(config.total_requests)));
    let started = Instant::now();

    let mut users = Vec::with_capacity(config.users);
    for user in 0..config.users {
        let (client, endpoint, bodies, issued, samples) =
            (client.clone(), endpoint.clone(), bodies.clone(), issued.clone(), samples.clone());
        let (total, think) = (config.total_requests, config.think);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(user as u64);
        users.push(tokio::spawn(async move {
            let user_id = format!("user-{user}");
            while issued.fetch_add(1, Ordering::Relaxed) < total {
                let mut body = bodies[rng.gen_range(0..bodies.len())].clone();
                body.user_id.clone_from(&user_id);
                let t0 = Instant::now();
                let ok = match client.post(endpoint.as_str()).json(&body).send().await {
                    Ok(resp) => {
                        let status = resp.status();
                        // read the body so the latency covers the whole answer
                        resp.bytes().await.is_ok() && status.is_success()
                    }
                    Err(_) => false,
                };
                let latency_ms = t0.elapsed().as_secs_f64() * 1e3;
                samples.lock().unwrap().push(Sample { latency_ms, ok });
                if let Some(pause) = think.draw(&mut rng) {
                    tokio::time::sleep(pause).await;
                }
            }
        }));
    }
    for u in users {
        u.await.map_err(|e| LoadTestError::InvalidConfig(format!("user task failed: {e}")))?;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let samples = std::mem::take(&mut *samples.lock().unwrap());
    let latencies: Vec<f64> = samples.iter().map(|s| s.latency_ms).collect();
    let failures = samples.iter().filter(|s| !s.ok).count();
    let requests = samples.len();
    Ok(LoadTestResult {
        users: config.users,
        requests,
        failures,
        failure_rate: failures as f64 / requests as f64,
        avg_rps: requests as f64 / elapsed.max(f64::EPSILON),
        elapsed_s: elapsed,
        response_ms: LatencySummary::from_samples(&latencies).expect("at least one request was sent"),
    })
}
