//! HTTP serving of next-element recommendations, plus a load generator and a
//! synthetic workflow source for exercising it.

pub mod api;
pub mod loadtest;
pub mod server;
pub mod synth;

pub use api::{RecommendRequestBody, RecommendResponseBody};
pub use loadtest::{load_test, standard_workloads, LoadTestConfig, LoadTestError, LoadTestResult, ThinkTime};
pub use server::{router, serve, start, AppState, RunningService, ServiceConfig, ServiceError};
