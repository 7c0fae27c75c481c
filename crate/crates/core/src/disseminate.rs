//! Read-only REST service over the current mobility model.
//!
//! Routes:
//! - `GET /knowledge/next?ap=A[&history=X,Y][&order=K][&raw=1]`
//! - `GET /knowledge/meta`
//! - `GET /healthz`
//!
//! The served model lives in a [`ModelSlot`]; each request works on the
//! `Arc` it read at the start, so swapping in a reloaded snapshot never
//! affects requests already in flight.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime};

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::knowstore::{restore, Distribution, MarkovModel, SNAPSHOT_VERSION};
use crate::pipeline::START;

/// Probabilities are reported in millionths.
const PROBABILITY_SCALE: u64 = 1_000_000;

#[derive(Debug, Default)]
pub struct ModelSlot {
    model: RwLock<Option<Arc<MarkovModel>>>,
}

impl ModelSlot {
    pub fn empty() -> Self {
        ModelSlot::default()
    }

    pub fn with_model(model: MarkovModel) -> Self {
        ModelSlot {
            model: RwLock::new(Some(Arc::new(model))),
        }
    }

    pub fn current(&self) -> Option<Arc<MarkovModel>> {
        self.model.read().expect("slot lock poisoned").clone()
    }

    pub fn swap(&self, model: MarkovModel) {
        *self.model.write().expect("slot lock poisoned") = Some(Arc::new(model));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionQuery {
    pub ap: String,
    /// Preceding APs, most recent last.
    pub history: Vec<String>,
    pub order: usize,
    pub raw: bool,
}

impl PredictionQuery {
    /// Validates query parameters against a model of order `max_order`.
    /// The order defaults to `1 + history.len()`; a history shorter than
    /// `order - 1` is START-padded when the state is built.
    pub fn from_params(params: &HashMap<String, String>, max_order: usize) -> Result<Self, String> {
        if let Some(unknown) = params
            .keys()
            .find(|k| !matches!(k.as_str(), "ap" | "history" | "order" | "raw"))
        {
            return Err(format!("unknown parameter {unknown:?}"));
        }
        let ap = params
            .get("ap")
            .filter(|a| !a.is_empty())
            .ok_or("missing parameter \"ap\"")?
            .clone();
        let history: Vec<String> = match params.get("history") {
            Some(h) if !h.is_empty() => h.split(',').map(str::to_string).collect(),
            _ => Vec::new(),
        };
        if history.iter().any(String::is_empty) {
            return Err("empty entry in history".into());
        }
        let order = match params.get("order") {
            Some(o) => o.parse::<usize>().map_err(|_| format!("invalid order {o:?}"))?,
            None => history.len() + 1,
        };
        if order == 0 || order > max_order {
            return Err(format!("order {order} outside 1..={max_order}"));
        }
        if history.len() + 1 > order {
            return Err(format!(
                "state arity {} does not match order {order}",
                history.len() + 1
            ));
        }
        let raw = match params.get("raw").map(String::as_str) {
            None | Some("0") | Some("false") => false,
            Some("1") | Some("true") => true,
            Some(other) => return Err(format!("invalid raw flag {other:?}")),
        };
        Ok(PredictionQuery {
            ap,
            history,
            order,
            raw,
        })
    }

    pub fn state(&self) -> Vec<String> {
        let pad = self.order - 1 - self.history.len();
        let mut state: Vec<String> = std::iter::repeat_n(START.to_string(), pad).collect();
        state.extend(self.history.iter().cloned());
        state.push(self.ap.clone());
        state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub to: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub to: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub order: usize,
    pub state: Vec<String>,
    pub predictions: Vec<PredictionEntry>,
    pub support: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<CountEntry>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub loaded: bool,
    pub max_order: usize,
    pub state_counts: Vec<usize>,
    pub total_records: u64,
    pub snapshot_version: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub degraded: bool,
}

/// Rounds `counts / total` to millionths with the largest-remainder rule,
/// so the rounded values still sum to exactly one. Ties in the remainder
/// go to the earlier (more likely) entry.
pub fn rounded_probabilities(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    let scaled: Vec<(u64, u64)> = counts
        .iter()
        .map(|&c| {
            let num = c as u128 * PROBABILITY_SCALE as u128;
            ((num / total as u128) as u64, (num % total as u128) as u64)
        })
        .collect();
    let mut micros: Vec<u64> = scaled.iter().map(|(q, _)| *q).collect();
    let deficit = PROBABILITY_SCALE - micros.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| scaled[b].1.cmp(&scaled[a].1).then(a.cmp(&b)));
    for &i in order.iter().take(deficit as usize) {
        micros[i] += 1;
    }
    micros.iter().map(|&m| m as f64 / PROBABILITY_SCALE as f64).collect()
}

pub fn prediction_response(query: &PredictionQuery, dist: &Distribution) -> PredictionResponse {
    let counts: Vec<u64> = dist.counts.iter().map(|(_, c)| *c).collect();
    let predictions = dist
        .counts
        .iter()
        .zip(rounded_probabilities(&counts))
        .map(|((to, _), probability)| PredictionEntry {
            to: to.clone(),
            probability,
        })
        .collect();
    PredictionResponse {
        order: query.order,
        state: dist.state.clone(),
        predictions,
        support: dist.support_count,
        counts: query.raw.then(|| {
            dist.counts
                .iter()
                .map(|(to, count)| CountEntry {
                    to: to.clone(),
                    count: *count,
                })
                .collect()
        }),
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

/// Next-AP query against `model`; the framework-independent core of the
/// `/knowledge/next` route.
pub fn handle_next(
    model: Option<&MarkovModel>,
    params: &HashMap<String, String>,
) -> Result<PredictionResponse, (StatusCode, String)> {
    let model = model.ok_or((StatusCode::SERVICE_UNAVAILABLE, "model not loaded".to_string()))?;
    let query = PredictionQuery::from_params(params, model.max_order()).map_err(|e| (StatusCode::BAD_REQUEST, e))?;
    let dist = model
        .transition_distribution(query.order, &query.state())
        .map_err(|e| (StatusCode::BAD_REQUEST, e.to_string()))?;
    Ok(prediction_response(&query, &dist))
}

pub fn handle_meta(model: Option<&MarkovModel>) -> MetaResponse {
    match model {
        Some(m) => MetaResponse {
            loaded: true,
            max_order: m.max_order(),
            state_counts: m.state_counts(),
            total_records: m.total_records(),
            snapshot_version: SNAPSHOT_VERSION,
        },
        None => MetaResponse {
            loaded: false,
            max_order: 0,
            state_counts: Vec::new(),
            total_records: 0,
            snapshot_version: SNAPSHOT_VERSION,
        },
    }
}

pub fn handle_health(model: Option<&MarkovModel>) -> HealthResponse {
    HealthResponse {
        status: "ok".into(),
        degraded: model.is_none(),
    }
}

async fn next_route(
    State(slot): State<Arc<ModelSlot>>,
    params: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Response {
    let Ok(Query(params)) = params else {
        return error(StatusCode::BAD_REQUEST, "malformed query string");
    };
    let model = slot.current();
    match handle_next(model.as_deref(), &params) {
        Ok(resp) => Json(resp).into_response(),
        Err((status, msg)) => error(status, msg),
    }
}

async fn meta_route(State(slot): State<Arc<ModelSlot>>) -> Json<MetaResponse> {
    Json(handle_meta(slot.current().as_deref()))
}

async fn health_route(State(slot): State<Arc<ModelSlot>>) -> Json<HealthResponse> {
    Json(handle_health(slot.current().as_deref()))
}

pub fn router(slot: Arc<ModelSlot>) -> Router {
    Router::new()
        .route("/knowledge/next", get(next_route))
        .route("/knowledge/meta", get(meta_route))
        .route("/healthz", get(health_route))
        .with_state(slot)
}

fn file_stamp(path: &Path) -> Option<(SystemTime, u64)> {
    let meta = std::fs::metadata(path).ok()?;
    Some((meta.modified().ok()?, meta.len()))
}

/// Polls `path` and swaps in the restored model whenever the file's
/// modification time or size changes. Unreadable snapshots are logged and
/// the previous model keeps serving.
pub fn spawn_reloader(slot: Arc<ModelSlot>, path: PathBuf, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut seen = file_stamp(&path);
        let mut ticker = tokio::time::interval(every);
        loop {
            ticker.tick().await;
            let stamp = file_stamp(&path);
            if stamp.is_none() || stamp == seen {
                continue;
            }
            seen = stamp;
            let p = path.clone();
            match tokio::task::spawn_blocking(move || restore(&p)).await {
                Ok(Ok(model)) => {
                    log::info!(
                        "reloaded snapshot {} ({} records)",
                        path.display(),
                        model.total_records()
                    );
                    slot.swap(model);
                }
                Ok(Err(e)) => log::warn!("keeping previous model, reload of {} failed: {e}", path.display()),
                Err(e) => log::warn!("reload task failed: {e}"),
            }
        }
    })
}

/// Loads `snapshot` (starting degraded if that fails), watches it for
/// changes and serves until the process stops.
pub async fn serve(snapshot: PathBuf, addr: SocketAddr) -> std::io::Result<()> {
    let slot = Arc::new(match restore(&snapshot) {
        Ok(model) => ModelSlot::with_model(model),
        Err(e) => {
            log::warn!("starting without a model: {e}");
            ModelSlot::empty()
        }
    });
    let _reloader = spawn_reloader(slot.clone(), snapshot, Duration::from_secs(1));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving knowledge on http://{}", listener.local_addr()?);
    axum::serve(listener, router(slot)).await
}
