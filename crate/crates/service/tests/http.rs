use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use slicematch::{build_index, to_bpmn_xml, ElementType, HashEmbedder, Index, Mode, ProcessGraph};
use slicematch_service::api::{ErrorBody, HealthBody, RequestLogEntry};
use slicematch_service::loadtest::{LatencySummary, ThinkTime};
use slicematch_service::synth;
use slicematch_service::{
    load_test, standard_workloads, start, AppState, LoadTestConfig, LoadTestError, RecommendResponseBody,
    RunningService, ServiceError,
};

fn chain(id: &str, labels: &[&str]) -> ProcessGraph {
    let nodes: Vec<_> = labels.iter().map(|l| (*l, Some(*l), ElementType::Task)).collect();
    let edges: Vec<_> = labels.windows(2).map(|w| (w[0], w[1])).collect();
    ProcessGraph::from_edges(id, &nodes, &edges).unwrap()
}

fn ab_indexes(e: &HashEmbedder) -> Vec<Index> {
    let corpus = [chain("A", &["x", "y", "z", "a"]), chain("B", &["x", "y", "z", "b"])];
    [Mode::WithGateways, Mode::TasksOnly]
        .into_iter()
        .map(|m| build_index(&corpus, 3, e, m).unwrap())
        .collect()
}

async fn ab_service(log: Option<&std::path::Path>) -> RunningService {
    let e = HashEmbedder::default();
    let mut state = AppState::new(ab_indexes(&e), Arc::new(e), 3).unwrap();
    if let Some(p) = log {
        state = state.with_request_log(p).unwrap();
    }
    start(Arc::new(state), "127.0.0.1:0").await.unwrap()
}

fn query_xml() -> String {
    to_bpmn_xml(&[chain("C", &["x", "y", "z"])])
}

async fn post(svc: &RunningService, body: &Value) -> (u16, Value) {
    let resp = reqwest::Client::new()
        .post(format!("{}/v1/recommendations", svc.url()))
        .json(body)
        .send()
        .await
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.json().await.unwrap())
}

#[tokio::test]
async fn ab_request_returns_both_continuations() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("requests.jsonl");
    let svc = ab_service(Some(&log)).await;
    let body = json!({"bpmn_xml": query_xml(), "task_id": "z", "user_id": "u1"});
    let (status, v) = post(&svc, &body).await;
    assert_eq!(status, 200);
    let resp: RecommendResponseBody = serde_json::from_value(v.clone()).unwrap();
    let labels: Vec<_> = resp.recommendations.iter().map(|r| r.label.clone().unwrap()).collect();
    assert_eq!(labels, vec!["a", "b"]);
    assert!(resp.recommendations.windows(2).all(|w| w[0].score >= w[1].score));
    assert_eq!(v["recommendations"][0]["type"], "task");
    assert!(v["recommendations"][0]["explanation"]["matched_slice_text"].is_string());
    assert!(resp.latency_ms >= 0.0);

    // same body, same list
    let (_, again) = post(&svc, &body).await;
    let again: RecommendResponseBody = serde_json::from_value(again).unwrap();
    assert_eq!(again.recommendations, resp.recommendations);
    assert_ne!(again.request_id, resp.request_id);

    svc.stop().await.unwrap();
    let lines: Vec<RequestLogEntry> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].user_id.as_deref(), Some("u1"));
    assert_eq!(lines[0].status, 200);
    assert_eq!(lines[0].request_id, resp.request_id);
}

#[tokio::test]
async fn error_codes_and_statuses() {
    let svc = ab_service(None).await;
    let cases = [
        (json!({"bpmn_xml": "<definitions><process", "task_id": "z", "user_id": "u"}), 400, "malformed_bpmn"),
        (json!({"bpmn_xml": query_xml(), "task_id": "nope", "user_id": "u"}), 404, "task_not_found"),
        (json!({"bpmn_xml": query_xml(), "task_id": "y", "user_id": "u"}), 422, "no_slices"),
        (json!({"bpmn_xml": query_xml(), "task_id": "z", "user_id": "u", "k": 0}), 400, "invalid_request"),
        (json!({"bpmn_xml": "", "task_id": "z", "user_id": "u"}), 400, "invalid_request"),
        (json!({"task_id": "z"}), 400, "invalid_request"),
    ];
    for (body, status, code) in cases {
        let (s, v) = post(&svc, &body).await;
        assert_eq!(s, status, "{body}");
        let err: ErrorBody = serde_json::from_value(v).unwrap();
        assert_eq!(err.error.code, code);
        assert!(!err.error.message.contains("panicked"));
    }
    let resp = reqwest::get(format!("{}/v2/nothing", svc.url())).await.unwrap();
    assert_eq!(resp.status().as_u16(), 404);
    svc.stop().await.unwrap();
}

#[tokio::test]
async fn tasks_only_requests_use_the_matching_index() {
    let svc = ab_service(None).await;
    let body = json!({"bpmn_xml": query_xml(), "task_id": "z", "user_id": "u", "mode": "tasks_only", "k": 1});
    let (status, v) = post(&svc, &body).await;
    assert_eq!(status, 200);
    assert_eq!(v["recommendations"].as_array().unwrap().len(), 1);

    let e = HashEmbedder::default();
    let only_gw = ab_indexes(&e).remove(0);
    let state = AppState::new(vec![only_gw], Arc::new(e), 3).unwrap();
    let svc2 = start(Arc::new(state), "127.0.0.1:0").await.unwrap();
    let (status, v) = post(&svc2, &body).await;
    assert_eq!((status, v["error"]["code"].as_str()), (422, Some("mode_mismatch")));
    svc.stop().await.unwrap();
    svc2.stop().await.unwrap();
}

#[tokio::test]
async fn health_reports_index_meta() {
    let svc = ab_service(None).await;
    let h: HealthBody = reqwest::get(format!("{}/v1/health", svc.url())).await.unwrap().json().await.unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.indexes.len(), 2);
    assert_eq!(h.indexes[0].meta.slice_length, 3);
    assert_eq!(h.indexes[0].meta.embedder.id, "hash-v1");
    svc.stop().await.unwrap();
}

#[test]
fn startup_rejects_mismatched_provider() {
    let e = HashEmbedder::default();
    let err = AppState::new(ab_indexes(&e), Arc::new(HashEmbedder::new(64)), 3).err().unwrap();
    assert!(matches!(err, ServiceError::ProviderMismatch { .. }));
    let mut two = ab_indexes(&e);
    two[1] = two[0].clone();
    assert!(matches!(AppState::new(two, Arc::new(e), 3), Err(ServiceError::DuplicateMode(_))));
}

#[test]
fn startup_rejects_unreadable_index() {
    let config = slicematch_service::ServiceConfig {
        index_paths: vec!["/nonexistent/index.jsonl".into()],
        ..Default::default()
    };
    assert!(matches!(AppState::from_config(&config), Err(ServiceError::Index { .. })));
}

#[tokio::test]
async fn single_request_load_test() {
    let corpus = synth::corpus(20, 5..=25, 0.4, 1);
    let e = HashEmbedder::default();
    let indexes: Vec<Index> = [Mode::WithGateways, Mode::TasksOnly]
        .into_iter()
        .map(|m| build_index(&corpus, 3, &e, m).unwrap())
        .collect();
    let state = AppState::new(indexes, Arc::new(e), 3).unwrap();
    let svc = start(Arc::new(state), "127.0.0.1:0").await.unwrap();
    let workloads = standard_workloads(3, 5);

    let mut config = LoadTestConfig::new(svc.url(), 1, 1);
    config.think = ThinkTime::None;
    let r = load_test(&config, &workloads).await.unwrap();
    assert_eq!((r.requests, r.failures), (1, 0));
    let LatencySummary { avg, min, max, p90 } = r.response_ms;
    assert!(min == max && avg == min && p90 == min);

    let mut config = LoadTestConfig::new(svc.url(), 8, 120);
    config.think = ThinkTime::Uniform {
        min: Duration::from_millis(1),
        max: Duration::from_millis(5),
    };
    let r = load_test(&config, &workloads).await.unwrap();
    assert_eq!(r.requests, 120);
    assert_eq!(r.failure_rate, 0.0);
    let s = r.response_ms;
    assert!(s.min <= s.avg && s.avg <= s.max && s.min <= s.p90 && s.p90 <= s.max);
    svc.stop().await.unwrap();
}

#[tokio::test]
async fn unreachable_target_is_reported() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = LoadTestConfig::new(format!("http://127.0.0.1:{port}"), 1, 1);
    let err = load_test(&config, &standard_workloads(3, 0)).await.unwrap_err();
    assert!(matches!(err, LoadTestError::TargetUnreachable { .. }));
    assert_eq!(err.code(), "target_unreachable");
}
