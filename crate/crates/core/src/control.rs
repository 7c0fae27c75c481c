//! Knowledge-driven control: next-AP prediction with order backoff, flow
//! pre-allocation on per-AP switches, and replay evaluation of hit rates.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowlet::HandoverEvent;
use crate::knowstore::{MarkovModel, StoreError};
use crate::pipeline::{collapse_trivial, sessionize, Session, START};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("order {order} outside 1..={max_order}")]
    OrderOutOfRange { order: usize, max_order: usize },
    #[error("invalid control configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ranked destinations and the order whose table produced them (0 when no
/// order had seen the state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub order_used: usize,
    pub destinations: Vec<String>,
}

/// The arity-`order` state ending at `current_ap`: the last `order - 1`
/// history entries, START-padded on the left.
pub fn chain_state<S: AsRef<str>>(current_ap: &str, history: &[S], order: usize) -> Vec<String> {
    let want = order - 1;
    let tail = &history[history.len().saturating_sub(want)..];
    let mut state: Vec<String> = std::iter::repeat_n(START.to_string(), want - tail.len()).collect();
    state.extend(tail.iter().map(|s| s.as_ref().to_string()));
    state.push(current_ap.to_string());
    state
}

/// Top-`top_k` next APs, backing off to lower orders while the state is
/// unseen.
pub fn predict_with_backoff<S: AsRef<str>>(
    model: &MarkovModel,
    current_ap: &str,
    history: &[S],
    order: usize,
    top_k: usize,
) -> Result<Prediction, ControlError> {
    if order == 0 || order > model.max_order() {
        return Err(ControlError::OrderOutOfRange {
            order,
            max_order: model.max_order(),
        });
    }
    if top_k == 0 {
        return Err(ControlError::Config("top_k must be at least 1".into()));
    }
    for k in (1..=order).rev() {
        let dist = model.transition_distribution(k, &chain_state(current_ap, history, k))?;
        if !dist.is_empty() {
            return Ok(Prediction {
                order_used: k,
                destinations: dist.entries.into_iter().take(top_k).map(|(to, _)| to).collect(),
            });
        }
    }
    Ok(Prediction {
        order_used: 0,
        destinations: Vec::new(),
    })
}

pub fn predict<S: AsRef<str>>(
    model: &MarkovModel,
    current_ap: &str,
    history: &[S],
    order: usize,
    top_k: usize,
) -> Result<Vec<String>, ControlError> {
    Ok(predict_with_backoff(model, current_ap, history, order, top_k)?.destinations)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FlowEntry {
    device: String,
    installed_at: u64,
    seq: u64,
}

/// Pre-allocated flow entries per AP switch, bounded by `capacity` and
/// aging out after `ttl` seconds.
#[derive(Debug, Clone)]
pub struct SwitchTable {
    capacity: usize,
    ttl: u64,
    switches: HashMap<String, Vec<FlowEntry>>,
    seq: u64,
    evictions: u64,
}

impl SwitchTable {
    pub fn new(capacity: usize, ttl: u64) -> Self {
        SwitchTable {
            capacity: capacity.max(1),
            ttl,
            switches: HashMap::new(),
            seq: 0,
            evictions: 0,
        }
    }

    fn live(&self, e: &FlowEntry, now: u64) -> bool {
        now.saturating_sub(e.installed_at) <= self.ttl
    }

    /// Installs `device` on every predicted AP's switch. Re-installing
    /// refreshes the timestamp; a full switch evicts its oldest entry.
    pub fn preallocate<S: AsRef<str>>(&mut self, predicted_aps: &[S], device: &str, now: u64) {
        for ap in predicted_aps {
            self.seq += 1;
            let seq = self.seq;
            let ttl = self.ttl;
            let entries = self.switches.entry(ap.as_ref().to_string()).or_default();
            entries.retain(|e| now.saturating_sub(e.installed_at) <= ttl);
            if let Some(e) = entries.iter_mut().find(|e| e.device == device) {
                e.installed_at = now;
                e.seq = seq;
                continue;
            }
            if entries.len() >= self.capacity {
                let oldest = entries
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, e)| (e.installed_at, e.seq))
                    .map(|(i, _)| i)
                    .expect("non-empty at capacity");
                entries.remove(oldest);
                self.evictions += 1;
            }
            entries.push(FlowEntry {
                device: device.to_string(),
                installed_at: now,
                seq,
            });
        }
    }

    pub fn contains(&self, ap: &str, device: &str, now: u64) -> bool {
        self.switches
            .get(ap)
            .is_some_and(|es| es.iter().any(|e| e.device == device && self.live(e, now)))
    }

    /// Live devices on one switch, oldest first.
    pub fn devices(&self, ap: &str, now: u64) -> Vec<&str> {
        let mut live: Vec<&FlowEntry> = self
            .switches
            .get(ap)
            .map(|es| es.iter().filter(|e| self.live(e, now)).collect())
            .unwrap_or_default();
        live.sort_by_key(|e| (e.installed_at, e.seq));
        live.into_iter().map(|e| e.device.as_str()).collect()
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }
}

pub fn preallocate<S: AsRef<str>>(
    mut table: SwitchTable,
    ap_predictions: &[S],
    device_id: &str,
    now: u64,
) -> SwitchTable {
    table.preallocate(ap_predictions, device_id, now);
    table
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Orders `1..=max_order` are evaluated.
    pub max_order: usize,
    pub top_k: usize,
    /// Synthetic latency of a pre-allocated handover, ms.
    pub latency_hit_ms: f64,
    /// Synthetic latency of a reactive handover, ms.
    pub latency_miss_ms: f64,
    pub ttl: u64,
    pub capacity: usize,
    /// Sessionization gap applied to the test trace.
    pub t_gap: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            max_order: 3,
            top_k: 1,
            latency_hit_ms: 5.0,
            latency_miss_ms: 50.0,
            ttl: 300,
            capacity: 64,
            t_gap: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub hits: u64,
    pub misses: u64,
    pub colds: u64,
    pub hit_rate: f64,
    pub mean_latency_ms: f64,
    /// Distinct states in this order's table, a proxy for buffering cost.
    pub states: u64,
}

impl EvalMetrics {
    pub fn evaluated(&self) -> u64 {
        self.hits + self.misses + self.colds
    }
}

struct Hop<'a> {
    session: usize,
    index: usize,
    device: &'a str,
    timestamp: u64,
}

/// Replays `test_events` against `model` once per order and scores each
/// modeled handover as hit (destination pre-allocated for the device),
/// miss (prediction existed but did not cover it) or cold (no prediction).
///
/// Predictions for a hop are issued when the device reaches the hop's
/// origin: at the previous hop, or at the hop itself for the first hop of
/// a session.
pub fn evaluate(
    model: &MarkovModel,
    test_events: &[HandoverEvent],
    config: &EvalConfig,
) -> Result<BTreeMap<usize, EvalMetrics>, ControlError> {
    if config.max_order == 0 || config.max_order > model.max_order() {
        return Err(ControlError::Config(format!(
            "orders 1..={} requested, model has {}",
            config.max_order,
            model.max_order()
        )));
    }
    if config.top_k == 0 || config.capacity == 0 || config.t_gap == 0 {
        return Err(ControlError::Config(
            "top_k, capacity and t_gap must be positive".into(),
        ));
    }

    let mut by_device: BTreeMap<&str, Vec<HandoverEvent>> = BTreeMap::new();
    for e in test_events {
        by_device.entry(e.id.as_str()).or_default().push(e.clone());
    }
    let sessions: Vec<Session> = by_device
        .iter()
        .flat_map(|(dev, evs)| sessionize(dev, evs, config.t_gap))
        .map(|s| collapse_trivial(&s))
        .filter(|s| !s.transitions.is_empty())
        .collect();
    let mut hops: Vec<Hop> = sessions
        .iter()
        .enumerate()
        .flat_map(|(si, s)| {
            s.transitions.iter().enumerate().map(move |(j, t)| Hop {
                session: si,
                index: j,
                device: s.device_id.as_str(),
                timestamp: t.timestamp,
            })
        })
        .collect();
    hops.sort_by(|a, b| (a.timestamp, a.device, a.session, a.index).cmp(&(b.timestamp, b.device, b.session, b.index)));

    let state_counts = model.state_counts();
    let mut out = BTreeMap::new();
    for order in 1..=config.max_order {
        let mut table = SwitchTable::new(config.capacity, config.ttl);
        let mut pending: HashMap<usize, bool> = HashMap::new();
        let (mut hits, mut misses, mut colds) = (0u64, 0u64, 0u64);
        for hop in &hops {
            let session = &sessions[hop.session];
            let t = &session.transitions[hop.index];
            let froms: Vec<&str> = session.transitions[..hop.index]
                .iter()
                .map(|x| x.from.as_str())
                .collect();
            let predicted = if hop.index == 0 {
                let p = predict(model, &t.from, &froms, order, config.top_k)?;
                table.preallocate(&p, hop.device, hop.timestamp);
                !p.is_empty()
            } else {
                pending.get(&hop.session).copied().unwrap_or(false)
            };
            if !predicted {
                colds += 1;
            } else if table.contains(&t.to, hop.device, hop.timestamp) {
                hits += 1;
            } else {
                misses += 1;
            }
            let mut history = froms;
            history.push(&t.from);
            let next = predict(model, &t.to, &history, order, config.top_k)?;
            table.preallocate(&next, hop.device, hop.timestamp);
            pending.insert(hop.session, !next.is_empty());
        }
        let evaluated = hits + misses + colds;
        let hit_rate = if hits + misses == 0 {
            0.0
        } else {
            hits as f64 / (hits + misses) as f64
        };
        let mean_latency_ms = if evaluated == 0 {
            0.0
        } else {
            (hits as f64 * config.latency_hit_ms + (misses + colds) as f64 * config.latency_miss_ms) / evaluated as f64
        };
        out.insert(
            order,
            EvalMetrics {
                hits,
                misses,
                colds,
                hit_rate,
                mean_latency_ms,
                states: state_counts[order - 1] as u64,
            },
        );
    }
    Ok(out)
}

/// `{"<order>": {hits, misses, colds, hit_rate, mean_latency_ms, states}}`.
pub fn metrics_to_json(metrics: &BTreeMap<usize, EvalMetrics>) -> String {
    let keyed: BTreeMap<String, &EvalMetrics> = metrics.iter().map(|(k, v)| (k.to_string(), v)).collect();
    let mut s = serde_json::to_string_pretty(&keyed).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn write_metrics(path: &Path, metrics: &BTreeMap<usize, EvalMetrics>) -> Result<(), ControlError> {
    std::fs::write(path, metrics_to_json(metrics))?;
    Ok(())
}
