#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seer_core::citysim::{self, CityGenConfig};
use seer_core::knowlet::{HandoverEvent, NULL_AP};
use seer_core::knowstore::MarkovModel;
use seer_core::pipeline::START;
use seer_core::run::{self, SimParams};

pub const N: &str = NULL_AP;

/// `(order, state, to)` -> count, where `state` ends with the `from` AP.
pub type CountMap = BTreeMap<(usize, Vec<String>, String), u64>;

pub fn ev(id: &str, from: &str, to: &str, ts: u64) -> HandoverEvent {
    HandoverEvent::new(id, from, to, ts)
}

pub fn model_counts(model: &MarkovModel) -> CountMap {
    let mut out = CountMap::new();
    for order in 1..=model.max_order() {
        for (state, succ) in model.table(order).unwrap() {
            for (to, c) in succ {
                out.insert((order, state.clone(), to.clone()), *c);
            }
        }
    }
    out
}

/// Reference counts computed from location paths instead of hop lists.
/// Valid for traces where each event starts where the previous one ended.
pub fn oracle_counts(events: &[HandoverEvent], t_gap: u64, max_order: usize) -> CountMap {
    let mut by_device: BTreeMap<&str, Vec<&HandoverEvent>> = BTreeMap::new();
    for e in events {
        by_device.entry(&e.id).or_default().push(e);
    }
    let mut out = CountMap::new();
    for evs in by_device.values() {
        let mut sessions: Vec<Vec<&HandoverEvent>> = Vec::new();
        for (i, e) in evs.iter().enumerate() {
            if i == 0 || e.ts - evs[i - 1].ts >= t_gap {
                sessions.push(Vec::new());
            }
            sessions.last_mut().unwrap().push(e);
        }
        for s in sessions {
            let mut path: Vec<&str> = Vec::new();
            for e in &s {
                for ap in [e.from.as_str(), e.to.as_str()] {
                    if ap != N && path.last() != Some(&ap) {
                        path.push(ap);
                    }
                }
            }
            for i in 1..path.len() {
                for k in 1..=max_order {
                    let mut state: Vec<String> = Vec::with_capacity(k);
                    for j in (0..k).rev() {
                        let idx = (i - 1) as isize - j as isize;
                        state.push(if idx < 0 {
                            START.to_string()
                        } else {
                            path[idx as usize].to_string()
                        });
                    }
                    *out.entry((k, state, path[i].to_string())).or_default() += 1;
                }
            }
        }
    }
    out
}

/// Small office: a lobby and eight desks, twelve people over five days,
/// with short leave/re-join blips and a lunch break per day.
pub fn desk_trace() -> Vec<HandoverEvent> {
    let aps: Vec<String> = std::iter::once("lobby".to_string())
        .chain((1..=8).map(|i| format!("desk-{i}")))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut events = Vec::new();
    for person in 0..12 {
        let id = format!("{person:032x}");
        for day in 0..5u64 {
            let mut t = day * 86_400 + 8 * 3600 + rng.random_range(0..3600);
            for _half in 0..2 {
                let mut at = aps[0].clone();
                events.push(ev(&id, N, &at, t));
                for _ in 0..rng.random_range(4..14) {
                    t += rng.random_range(20..240);
                    if rng.random_bool(0.15) {
                        events.push(ev(&id, &at, N, t));
                        t += rng.random_range(5..60);
                        let back = if rng.random_bool(0.5) {
                            at.clone()
                        } else {
                            aps.choose(&mut rng).unwrap().clone()
                        };
                        events.push(ev(&id, N, &back, t));
                        at = back;
                        continue;
                    }
                    let next = loop {
                        let c = aps.choose(&mut rng).unwrap();
                        if *c != at {
                            break c.clone();
                        }
                    };
                    events.push(ev(&id, &at, &next, t));
                    at = next;
                }
                t += rng.random_range(10..60);
                events.push(ev(&id, &at, N, t));
                t += 3600;
            }
        }
    }
    events.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.id.cmp(&b.id)));
    events
}

/// Sessions walking a ring of `nodes` APs: clockwise ones start at node 0,
/// counter-clockwise ones at node `nodes / 2`. The next AP depends only on
/// the direction, which one previous AP reveals.
pub fn ring_trace(nodes: usize, sessions: usize, laps: usize) -> Vec<HandoverEvent> {
    let ap = |i: usize| format!("ring-{:02}", i % nodes);
    let mut events = Vec::new();
    let mut t = 0u64;
    for s in 0..sessions {
        let id = format!("{s:032x}");
        let clockwise = s % 2 == 0;
        let start = if clockwise { 0 } else { nodes / 2 };
        let mut pos = start;
        for _ in 0..laps * nodes {
            let next = if clockwise { pos + 1 } else { pos + nodes - 1 } % nodes;
            events.push(ev(&id, &ap(pos), &ap(next), t));
            pos = next;
            t += 10;
        }
        t += 1000;
    }
    events
}

/// A->B->C and D->B->E sessions, alternating.
pub fn fork_trace(pairs: usize) -> Vec<HandoverEvent> {
    let mut events = Vec::new();
    let mut t = 0;
    for s in 0..2 * pairs {
        let id = format!("{s:032x}");
        let (a, c) = if s % 2 == 0 { ("A", "C") } else { ("D", "E") };
        events.push(ev(&id, a, "B", t));
        events.push(ev(&id, "B", c, t + 10));
        t += 1000;
    }
    events
}

/// Anonymized trace of a generated city.
pub fn city_trace(citizens: usize, days: u64, seed: u64) -> Vec<HandoverEvent> {
    let dir = tempfile::tempdir().unwrap();
    let (pois, aps) = run::gen_city(&CityGenConfig::default(), dir.path()).unwrap();
    let params = SimParams {
        citizens,
        days,
        seed,
        bandwidth: citysim::DEFAULT_BANDWIDTH,
        speed: (1.0, 2.0),
    };
    let raw = run::simulate_city(&pois, &aps, &params).unwrap();
    run::anonymize_events(&raw, &run::default_master_key(seed)).unwrap().0
}

/// One device's stream with gaps clustered around `t_gap`, including gaps
/// of exactly `t_gap - 1`, `t_gap` and zero.
pub fn random_device_stream<R: Rng>(rng: &mut R, id: &str, t_gap: u64) -> Vec<HandoverEvent> {
    let aps = ["a", "b", "c", "d", N];
    let len = rng.random_range(1..40);
    let mut t = rng.random_range(0..100_000);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        if i > 0 {
            t += match rng.random_range(0..6) {
                0 => 0,
                1 => t_gap - 1,
                2 => t_gap,
                3 => rng.random_range(0..t_gap),
                _ => rng.random_range(0..3 * t_gap),
            };
        }
        let from = aps.choose(rng).unwrap();
        let to = loop {
            let c = aps.choose(rng).unwrap();
            if c != from {
                break c;
            }
        };
        out.push(ev(id, from, to, t));
    }
    out
}

/// Query string for `/knowledge/next` addressing `state` at its own order.
pub fn next_uri(state: &[String], raw: bool) -> String {
    let (ap, history) = state.split_last().unwrap();
    let history: Vec<&str> = history.iter().map(String::as_str).filter(|s| *s != START).collect();
    let mut uri = format!("/knowledge/next?ap={ap}&order={}", state.len());
    if !history.is_empty() {
        uri.push_str(&format!("&history={}", history.join(",")));
    }
    if raw {
        uri.push_str("&raw=1");
    }
    uri
}

pub async fn get(router: &axum::Router, uri: &str) -> (axum::http::StatusCode, Vec<u8>) {
    use tower::ServiceExt;
    let req = axum::http::Request::get(uri).body(axum::body::Body::empty()).unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, body.to_vec())
}

/// Replays each device's location path on its own with a plain map of
/// pre-allocated APs, ranking successors straight from raw counts.
pub fn brute_force(
    train_counts: &CountMap,
    test: &[HandoverEvent],
    order: usize,
    top_k: usize,
    ttl: u64,
) -> (u64, u64, u64) {
    let rank = |state: &[String]| -> Vec<String> {
        let mut succ: Vec<(&String, u64)> = train_counts
            .iter()
            .filter(|((k, s, _), _)| *k == state.len() && s.as_slice() == state)
            .map(|((_, _, to), c)| (to, *c))
            .collect();
        succ.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        succ.into_iter().take(top_k).map(|(to, _)| to.clone()).collect()
    };
    let predict = |path: &[&str]| -> Vec<String> {
        for k in (1..=order).rev() {
            let state: Vec<String> = (0..k)
                .rev()
                .map(|j| {
                    let idx = path.len() as isize - 1 - j as isize;
                    if idx < 0 {
                        START.to_string()
                    } else {
                        path[idx as usize].to_string()
                    }
                })
                .collect();
            let r = rank(&state);
            if !r.is_empty() {
                return r;
            }
        }
        Vec::new()
    };

    let mut by_device: BTreeMap<&str, Vec<&HandoverEvent>> = BTreeMap::new();
    for e in test {
        by_device.entry(&e.id).or_default().push(e);
    }
    let (mut hits, mut misses, mut colds) = (0, 0, 0);
    for evs in by_device.values() {
        let mut installed: HashMap<String, u64> = HashMap::new();
        let mut i = 0;
        while i < evs.len() {
            let mut j = i + 1;
            while j < evs.len() && evs[j].ts - evs[j - 1].ts < 300 {
                j += 1;
            }
            let mut steps: Vec<(&str, u64)> = Vec::new();
            for e in &evs[i..j] {
                for ap in [e.from.as_str(), e.to.as_str()] {
                    if ap != N && steps.last().map(|s| s.0) != Some(ap) {
                        steps.push((ap, e.ts));
                    }
                }
            }
            if steps.len() > 1 {
                let mut path = vec![steps[0].0];
                let mut predicted = predict(&path);
                for p in &predicted {
                    installed.insert(p.clone(), steps[1].1);
                }
                for &(to, ts) in &steps[1..] {
                    if predicted.is_empty() {
                        colds += 1;
                    } else if installed.get(to).is_some_and(|t| ts - t <= ttl) {
                        hits += 1;
                    } else {
                        misses += 1;
                    }
                    path.push(to);
                    predicted = predict(&path);
                    for p in &predicted {
                        installed.insert(p.clone(), ts);
                    }
                }
            }
            i = j;
        }
    }
    (hits, misses, colds)
}
