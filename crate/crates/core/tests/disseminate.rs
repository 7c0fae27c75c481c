mod common;

use std::collections::HashMap;
use std::sync::Arc;

use axum::http::StatusCode;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use seer_core::disseminate::{handle_next, router, MetaResponse, ModelSlot, PredictionResponse};
use seer_core::knowstore::{persist, MarkovModel};
use seer_core::pipeline::{analyze_batch, PipelineConfig};

fn desk_model() -> (MarkovModel, u64) {
    let cfg = PipelineConfig {
        t_gap: 300,
        max_order: 3,
        batch_interval: 1,
    };
    let (model, report) = analyze_batch(&desk_trace(), &cfg).unwrap();
    (model, report.transitions)
}

fn params(uri: &str) -> HashMap<String, String> {
    uri.split_once('?')
        .unwrap()
        .1
        .split('&')
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

#[tokio::test]
async fn rest_matches_in_process_queries() {
    let (model, _) = desk_model();
    let app = router(Arc::new(ModelSlot::with_model(model.clone())));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = Vec::new();
    for k in 1..=3 {
        seen.extend(model.table(k).unwrap().keys().cloned());
    }
    let aps = ["lobby", "desk-1", "desk-4", "desk-8", "attic"];
    for _ in 0..300 {
        let state = if rng.random_bool(0.8) {
            seen.choose(&mut rng).unwrap().clone()
        } else {
            (0..rng.random_range(1..=3))
                .map(|_| aps.choose(&mut rng).unwrap().to_string())
                .collect()
        };
        let raw = rng.random_bool(0.5);
        let uri = next_uri(&state, raw);
        let (status, body) = get(&app, &uri).await;
        assert_eq!(status, StatusCode::OK, "{uri}");
        let rest: PredictionResponse = serde_json::from_slice(&body).unwrap();
        assert_eq!(rest, handle_next(Some(&model), &params(&uri)).unwrap());

        let dist = model.transition_distribution(state.len(), &state).unwrap();
        assert_eq!(rest.state, state);
        assert_eq!(rest.support, dist.support_count);
        let order: Vec<&str> = rest.predictions.iter().map(|p| p.to.as_str()).collect();
        assert_eq!(order, dist.counts.iter().map(|(to, _)| to.as_str()).collect::<Vec<_>>());
        for (p, (_, exact)) in rest.predictions.iter().zip(&dist.entries) {
            assert!((p.probability - exact).abs() <= 1e-6);
        }
        if !rest.predictions.is_empty() {
            let sum: f64 = rest.predictions.iter().map(|p| p.probability).sum();
            assert!((sum - 1.0).abs() <= 1e-9);
        }
        if raw {
            let counts: Vec<(String, u64)> = rest.counts.unwrap().into_iter().map(|c| (c.to, c.count)).collect();
            assert_eq!(counts, dist.counts);
        } else {
            assert!(rest.counts.is_none());
        }
    }
}

#[tokio::test]
async fn meta_reports_the_pipeline_recount() {
    let (model, transitions) = desk_model();
    let app = router(Arc::new(ModelSlot::with_model(model.clone())));
    let (status, body) = get(&app, "/knowledge/meta").await;
    assert_eq!(status, StatusCode::OK);
    let meta: MetaResponse = serde_json::from_slice(&body).unwrap();
    assert!(meta.loaded);
    assert_eq!(meta.total_records, transitions);
    assert_eq!(meta.state_counts, model.state_counts());
    assert_eq!(meta.max_order, 3);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let (model, _) = desk_model();
    let app = router(Arc::new(ModelSlot::with_model(model)));
    for uri in [
        "/knowledge/next",
        "/knowledge/next?ap=lobby&order=4",
        "/knowledge/next?ap=lobby&order=0",
        "/knowledge/next?ap=lobby&history=desk-1,desk-2&order=2",
        "/knowledge/next?ap=lobby&bogus=1",
        "/knowledge/next?ap=lobby&raw=maybe",
    ] {
        assert_eq!(get(&app, uri).await.0, StatusCode::BAD_REQUEST, "{uri}");
    }
    let empty = router(Arc::new(ModelSlot::empty()));
    assert_eq!(
        get(&empty, "/knowledge/next?ap=lobby").await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    assert_eq!(get(&empty, "/healthz").await.0, StatusCode::OK);
}

#[tokio::test]
async fn served_socket_answers_queries() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.snapshot");
    let (model, _) = desk_model();
    persist(&model, &path).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let server = tokio::spawn(seer_core::disseminate::serve(path, addr));

    let resp = tokio::task::spawn_blocking(move || {
        use std::io::{Read, Write};
        for _ in 0..100 {
            if let Ok(mut stream) = std::net::TcpStream::connect(addr) {
                stream
                    .write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
                    .unwrap();
                let mut resp = String::new();
                stream.read_to_string(&mut resp).unwrap();
                return resp;
            }
            std::thread::sleep(std::time::Duration::from_millis(20));
        }
        panic!("server did not start");
    })
    .await
    .unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"degraded\":false"));
    server.abort();
}
