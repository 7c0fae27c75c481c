//! Anonymized handover events (D1 knowlets), daily re-salting and the
//! line-oriented wire format used between extraction and analytics.

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::citysim::RawEvent;

/// Literal used on the wire for a missing access point (join/leave).
pub const NULL_AP: &str = "null";

/// Seconds per simulation day; salts rotate on these boundaries.
pub const SECONDS_PER_DAY: u64 = 86_400;

/// Hex characters kept from the keyed hash (128 bits).
pub const ID_HEX_LEN: usize = 32;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KnowletError {
    #[error("master key must not be empty")]
    EmptyKey,
    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: usize, message: String },
}

/// One anonymized handover: `(id, from, to, ts)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandoverEvent {
    pub id: String,
    pub from: String,
    pub to: String,
    pub ts: u64,
}

impl HandoverEvent {
    pub fn new(id: impl Into<String>, from: impl Into<String>, to: impl Into<String>, ts: u64) -> Self {
        HandoverEvent {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            ts,
        }
    }

    pub fn is_join(&self) -> bool {
        self.from == NULL_AP
    }

    pub fn is_leave(&self) -> bool {
        self.to == NULL_AP
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.id.is_empty() {
            return Err("empty id");
        }
        if self.from == self.to {
            return Err("from equals to");
        }
        if self.from.is_empty() || self.to.is_empty() {
            return Err("empty access point");
        }
        Ok(())
    }
}

/// Per-day key material derived from the master key.
#[derive(Clone, PartialEq, Eq)]
pub struct Salt {
    pub day_index: u64,
    pub key_material: [u8; 32],
}

impl std::fmt::Debug for Salt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Salt")
            .field("day_index", &self.day_index)
            .finish_non_exhaustive()
    }
}

/// The keyed hash used everywhere in this module: HMAC-SHA256.
fn keyed_hash(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

pub fn salt_for_day(master_key: &[u8], day_index: u64) -> Result<Salt, KnowletError> {
    if master_key.is_empty() {
        return Err(KnowletError::EmptyKey);
    }
    Ok(Salt {
        day_index,
        key_material: keyed_hash(master_key, &day_index.to_be_bytes()),
    })
}

pub fn anonymize(mac: &str, salt: &Salt) -> String {
    let digest = keyed_hash(&salt.key_material, mac.as_bytes());
    let mut id = hex::encode(digest);
    id.truncate(ID_HEX_LEN);
    id
}

pub fn day_index(timestamp: u64) -> u64 {
    timestamp / SECONDS_PER_DAY
}

/// Output of [`anonymize_stream`]: the published events plus the number of
/// raw events rejected as malformed.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct AnonymizedStream {
    pub events: Vec<HandoverEvent>,
    pub dropped: u64,
}

/// Streaming anonymizer that caches the salt of the current day.
pub struct Anonymizer {
    master_key: Vec<u8>,
    current: Option<Salt>,
    dropped: u64,
}

impl Anonymizer {
    pub fn new(master_key: &[u8]) -> Result<Self, KnowletError> {
        if master_key.is_empty() {
            return Err(KnowletError::EmptyKey);
        }
        Ok(Anonymizer {
            master_key: master_key.to_vec(),
            current: None,
            dropped: 0,
        })
    }

    /// Anonymizes one event; malformed events yield `None` and bump the
    /// drop counter.
    pub fn process(&mut self, raw: &RawEvent) -> Option<HandoverEvent> {
        let malformed = raw.mac.is_empty()
            || raw.from == raw.to
            || raw.from.as_deref() == Some(NULL_AP)
            || raw.to.as_deref() == Some(NULL_AP);
        if malformed {
            self.dropped += 1;
            return None;
        }
        let day = day_index(raw.timestamp);
        let salt = match &self.current {
            Some(s) if s.day_index == day => s,
            _ => {
                let salt = salt_for_day(&self.master_key, day).expect("key checked at construction");
                self.current.insert(salt)
            }
        };
        Some(HandoverEvent {
            id: anonymize(&raw.mac, salt),
            from: raw.from.clone().unwrap_or_else(|| NULL_AP.to_string()),
            to: raw.to.clone().unwrap_or_else(|| NULL_AP.to_string()),
            ts: raw.timestamp,
        })
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

pub fn anonymize_stream<'a, I>(raw: I, master_key: &[u8]) -> Result<AnonymizedStream, KnowletError>
where
    I: IntoIterator<Item = &'a RawEvent>,
{
    let mut anonymizer = Anonymizer::new(master_key)?;
    let events = raw.into_iter().filter_map(|e| anonymizer.process(e)).collect();
    Ok(AnonymizedStream {
        events,
        dropped: anonymizer.dropped(),
    })
}

/// Encodes one event as `{"id":..,"from":..,"to":..,"ts":..}` plus LF.
pub fn encode_event(e: &HandoverEvent) -> Vec<u8> {
    let mut line = serde_json::to_vec(e).expect("plain struct serializes");
    line.push(b'\n');
    line
}

/// Decodes one wire line; a trailing LF (or CRLF) is accepted.
pub fn decode_event(line: &[u8]) -> Result<HandoverEvent, KnowletError> {
    let body = line
        .strip_suffix(b"\n")
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .unwrap_or(line);
    let event: HandoverEvent = serde_json::from_slice(body).map_err(|err| KnowletError::Decode {
        // serde_json columns are 1-based byte positions within the line
        offset: err.column().saturating_sub(1),
        message: err.to_string(),
    })?;
    event.validate().map_err(|msg| KnowletError::Decode {
        offset: 0,
        message: msg.to_string(),
    })?;
    Ok(event)
}
