use crate::knowlet::{HandoverEvent, NULL_AP};

/// One hop of a session, `from`/`to` may be [`NULL_AP`] before collapsing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub timestamp: u64,
}

impl Transition {
    pub fn new(from: impl Into<String>, to: impl Into<String>, timestamp: u64) -> Self {
        Transition {
            from: from.into(),
            to: to.into(),
            timestamp,
        }
    }

    fn touches_null(&self) -> bool {
        self.from == NULL_AP || self.to == NULL_AP
    }
}

impl From<&HandoverEvent> for Transition {
    fn from(e: &HandoverEvent) -> Self {
        Transition::new(e.from.clone(), e.to.clone(), e.ts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub device_id: String,
    pub transitions: Vec<Transition>,
    pub closed: bool,
}

/// A session with the device id removed, ready for order expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonymousSession {
    pub transitions: Vec<Transition>,
}

/// Splits one device's time-ordered events wherever the gap to the previous
/// event reaches `t_gap`.
pub fn sessionize(device_id: &str, events: &[HandoverEvent], t_gap: u64) -> Vec<Session> {
    let mut sessions: Vec<Session> = Vec::new();
    let mut last_ts: Option<u64> = None;
    for e in events {
        let split = match last_ts {
            None => true,
            Some(prev) => e.ts.saturating_sub(prev) >= t_gap,
        };
        if split {
            sessions.push(Session {
                device_id: device_id.to_string(),
                transitions: Vec::new(),
                closed: true,
            });
        }
        sessions.last_mut().expect("pushed above").transitions.push(e.into());
        last_ts = Some(e.ts);
    }
    sessions
}

/// Merges leave/re-join pairs into a direct hop (or drops them when the
/// device came back to the same AP), then strips the remaining null hops,
/// i.e. the session's opening join and closing leave.
pub fn collapse_trivial(session: &Session) -> Session {
    let mut stack: Vec<Transition> = Vec::with_capacity(session.transitions.len());
    for t in &session.transitions {
        let pairs = matches!(stack.last(), Some(top) if top.to == NULL_AP && top.from != NULL_AP)
            && t.from == NULL_AP
            && t.to != NULL_AP;
        if pairs {
            let left = stack.pop().expect("checked");
            if left.from != t.to {
                stack.push(Transition::new(left.from, t.to.clone(), t.timestamp));
            }
        } else {
            stack.push(t.clone());
        }
    }
    stack.retain(|t| !t.touches_null());
    Session {
        device_id: session.device_id.clone(),
        transitions: stack,
        closed: session.closed,
    }
}

/// Drops sessions with nothing left to model and forgets device ids.
pub fn filter_transient(sessions: Vec<Session>) -> Vec<AnonymousSession> {
    sessions
        .into_iter()
        .filter(|s| !s.transitions.is_empty())
        .map(|s| AnonymousSession {
            transitions: s.transitions,
        })
        .collect()
}
