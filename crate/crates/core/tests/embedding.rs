mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicematch::embedding::{embed_all, embed_one};
use slicematch::{cosine, similarity_matrix, EmbedError, Embedding, EmbeddingProvider, HashEmbedder, RemoteEmbedder};

use common::*;

fn embed(dim: usize, text: &str) -> Embedding {
    embed_one(&HashEmbedder::new(dim), text).unwrap()
}

#[test]
fn golden_sixteen_dimensional_vector() {
    let e = embed(16, "Start Event. Task: Check documents. Task: Evaluate.");
    let t = 1.0 / 3.0;
    let expected = [0.0, 0.0, 0.0, 0.0, -t, -2.0 * t, -t, -t, 0.0, 0.0, t, 0.0, -t, 0.0, 0.0, 0.0];
    for (a, b) in e.values().iter().zip(expected) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
    }
}

#[test]
fn golden_buckets() {
    let h = HashEmbedder::new(8);
    assert_eq!(h.bucket("task"), (4, -1.0));
    assert_eq!(h.bucket("task task"), (1, 1.0));
}

#[test]
fn repeated_token_versus_single() {
    let c = cosine(&embed(8, "task task"), &embed(8, "task")).unwrap();
    assert_abs_diff_eq!(c, 0.8944271909999159, epsilon = 1e-12);
}

#[test]
fn near_paraphrase_similarity() {
    let c = cosine(
        &embed(512, "send letter of acceptance"),
        &embed(512, "send letter of provisional acceptance"),
    )
    .unwrap();
    assert_abs_diff_eq!(c, 0.7559289460184543, epsilon = 1e-12);
}

#[test]
fn disjoint_buckets_are_orthogonal() {
    let c = cosine(&embed(4096, "check documents"), &embed(4096, "invite applicant")).unwrap();
    assert_eq!(c, 0.0);
}

#[test]
fn empty_text_is_zero_vector() {
    let e = embed(32, " .,; ");
    assert!(e.is_zero());
    assert_eq!(cosine(&e, &embed(32, "task")).unwrap(), 0.0);
}

#[test]
fn f32_tracks_f64() {
    let h = HashEmbedder::new(64);
    let a: slicematch::Embedding32 = embed_one(&h, "Task: Review order").unwrap();
    let b = embed_one::<f64>(&h, "Task: Review order").unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert_abs_diff_eq!(*x as f64, *y, epsilon = 1e-6);
    }
}

#[test]
fn similarity_matrix_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let dim = rng.gen_range(1..=512);
        let r = rng.gen_range(1..=8);
        let m = rng.gen_range(1..=64);
        let gen = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            if rng.gen_bool(0.05) {
                vec![0.0; dim]
            } else {
                (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
            }
        };
        let q: Vec<Vec<f64>> = (0..r).map(|_| gen(&mut rng)).collect();
        let d: Vec<Vec<f64>> = (0..m).map(|_| gen(&mut rng)).collect();
        let qe: Vec<Embedding> = q.iter().map(|v| Embedding::from_values(v.clone())).collect();
        let de: Vec<Embedding> = d.iter().map(|v| Embedding::from_values(v.clone())).collect();
        let s = similarity_matrix(&qe, &de).unwrap();
        assert_eq!((s.rows(), s.cols()), (r, m));
        for i in 0..r {
            for j in 0..m {
                assert_abs_diff_eq!(s.get(i, j), loop_cosine(&q[i], &d[j]), epsilon = 1e-9);
            }
        }
        let col = s.column_max();
        for j in 0..m {
            let best = (0..r).map(|i| loop_cosine(&q[i], &d[j])).fold(f64::NEG_INFINITY, f64::max);
            assert_abs_diff_eq!(col[j], best, epsilon = 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_sentence(&mut rng), random_sentence(&mut rng));
        let (x, y) = (embed(128, &a), embed(128, &b));
        let xy = cosine(&x, &y).unwrap();
        prop_assert_eq!(xy, cosine(&y, &x).unwrap());
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&xy));
        if !x.is_zero() {
            prop_assert!((cosine(&x, &x).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_vector_is_sum_of_feature_vectors(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = HashEmbedder::new(64);
        let text = random_sentence(&mut rng);
        let feats = HashEmbedder::features(&text);
        let mut sum = vec![0.0; 64];
        for f in &feats {
            let v = h.accumulate([f.as_str()]);
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        prop_assert_eq!(h.hash_embed(&text), sum);
    }

    #[test]
    fn embedding_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = random_sentence(&mut rng);
        prop_assert_eq!(embed(256, &text), embed(256, &text));
    }
}

/// Minimal HTTP server that answers each request with `respond(n_texts)`.
fn mock_server(respond: impl Fn(usize) -> String + Send + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let n = req["texts"].as_array().unwrap().len();
            let out = respond(n);
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                out.len(),
                out
            );
        }
    });
    format!("http://{addr}/embed")
}

fn vectors(n: usize, dim: usize) -> String {
    let v: Vec<Vec<f64>> = (0..n).map(|i| (0..dim).map(|j| (i + j + 1) as f64).collect()).collect();
    serde_json::json!({ "embeddings": v }).to_string()
}

#[test]
fn remote_provider_normalizes_and_batches() {
    let url = mock_server(|n| vectors(n, 4));
    let p = RemoteEmbedder::new(url, 4).with_batch_size(2);
    let texts = ["a", "b", "c", "d", "e"];
    let got: Vec<Embedding> = embed_all(&p, &texts).unwrap();
    assert_eq!(got.len(), 5);
    for e in &got {
        assert_abs_diff_eq!(e.norm(), 1.0, epsilon = 1e-12);
    }
    assert!(p.descriptor().id.starts_with("remote:"));
}

#[test]
fn remote_provider_rejects_wrong_dimension() {
    let url = mock_server(|n| vectors(n, 3));
    let p = RemoteEmbedder::new(url, 4);
    let err = embed_one::<f64>(&p, "x").unwrap_err();
    assert!(matches!(err, EmbedError::DimensionMismatch { expected: 4, actual: 3 }));
}

#[test]
fn remote_provider_reports_unreachable() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let p = RemoteEmbedder::new(format!("http://127.0.0.1:{port}/embed"), 4).with_timeout(Duration::from_secs(2));
    assert!(matches!(embed_one::<f64>(&p, "x"), Err(EmbedError::ProviderUnavailable(_))));
}
