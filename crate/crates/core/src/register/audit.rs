//! Hash-chained, append-only audit log.
//!
//! ```text
//! hash_n = SHA-256(prev_hash ‖ envelope_n ‖ seq_n (u64 BE) ‖ timestamp_n (i64 BE))
//! envelope_n = {"actor":…,"data":<payload>,"kind":…}   (canonical JSON)
//! prev_hash_0 = 32 zero bytes
//! ```
//!
//! On disk each event is a big-endian `u32` length followed by its
//! canonical JSON record.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical::{from_canonical, to_canonical, to_canonical_string};
use crate::time::Timestamp;

pub const HASH_LEN: usize = 32;
pub const GENESIS: [u8; HASH_LEN] = [0; HASH_LEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Measurement,
    RuleEval,
    Exclusion,
    Gate,
    Approval,
    Escalation,
    Edit,
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditKind::Measurement => "measurement",
            AuditKind::RuleEval => "rule_eval",
            AuditKind::Exclusion => "exclusion",
            AuditKind::Gate => "gate",
            AuditKind::Approval => "approval",
            AuditKind::Escalation => "escalation",
            AuditKind::Edit => "edit",
        })
    }
}

/// The chain failed verification at `seq` (the position in the log).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("audit chain broken at seq {seq}: {reason}")]
pub struct ChainBroken {
    pub seq: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEvent {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub actor: String,
    pub kind: AuditKind,
    /// Canonical JSON bytes.
    pub payload: Vec<u8>,
    pub prev_hash: [u8; HASH_LEN],
    pub hash: [u8; HASH_LEN],
}

/// Serialized form: payload as a JSON string, hashes as lower-case hex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub actor: String,
    pub kind: AuditKind,
    pub payload: String,
    pub prev_hash: String,
    pub hash: String,
}

fn envelope(actor: &str, kind: AuditKind, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + actor.len() + 40);
    out.extend_from_slice(b"{\"actor\":");
    out.extend_from_slice(to_canonical_string(actor).as_bytes());
    out.extend_from_slice(b",\"data\":");
    out.extend_from_slice(payload);
    out.extend_from_slice(b",\"kind\":");
    out.extend_from_slice(to_canonical_string(&kind).as_bytes());
    out.push(b'}');
    out
}

pub fn event_hash(
    prev: &[u8; HASH_LEN],
    actor: &str,
    kind: AuditKind,
    payload: &[u8],
    seq: u64,
    timestamp: Timestamp,
) -> [u8; HASH_LEN] {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(envelope(actor, kind, payload));
    h.update(seq.to_be_bytes());
    h.update(timestamp.to_be_bytes());
    h.finalize().into()
}

impl AuditEvent {
    pub fn expected_hash(&self) -> [u8; HASH_LEN] {
        event_hash(
            &self.prev_hash,
            &self.actor,
            self.kind,
            &self.payload,
            self.seq,
            self.timestamp,
        )
    }

    pub fn payload_str(&self) -> &str {
        std::str::from_utf8(&self.payload).unwrap_or("")
    }

    pub fn to_record(&self) -> AuditRecord {
        AuditRecord {
            seq: self.seq,
            timestamp: self.timestamp,
            actor: self.actor.clone(),
            kind: self.kind,
            payload: String::from_utf8_lossy(&self.payload).into_owned(),
            prev_hash: hex::encode(self.prev_hash),
            hash: hex::encode(self.hash),
        }
    }

    pub fn from_record(r: AuditRecord) -> Result<Self, String> {
        let decode = |s: &str| -> Result<[u8; HASH_LEN], String> {
            if s.bytes().any(|b| b.is_ascii_uppercase()) {
                return Err("hash is not lower-case hex".to_string());
            }
            let bytes = hex::decode(s).map_err(|e| e.to_string())?;
            bytes
                .try_into()
                .map_err(|_| "hash is not 32 bytes".to_string())
        };
        Ok(AuditEvent {
            seq: r.seq,
            timestamp: r.timestamp,
            actor: r.actor,
            kind: r.kind,
            payload: r.payload.into_bytes(),
            prev_hash: decode(&r.prev_hash)?,
            hash: decode(&r.hash)?,
        })
    }

    /// Length-prefixed canonical record.
    pub fn encode(&self) -> Vec<u8> {
        let body = to_canonical(&self.to_record());
        let mut out = Vec::with_capacity(body.len() + 4);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }
}

/// Checks seq numbering, hash links and stored hashes in order.
pub fn verify_chain(events: &[AuditEvent]) -> Result<(), ChainBroken> {
    let mut prev = GENESIS;
    for (i, e) in events.iter().enumerate() {
        let seq = i as u64;
        let broken = |reason: &str| ChainBroken {
            seq,
            reason: reason.to_string(),
        };
        if e.seq != seq {
            return Err(broken(&format!("expected seq {seq}, found {}", e.seq)));
        }
        if e.prev_hash != prev {
            return Err(broken("prev_hash does not match the preceding event"));
        }
        if from_canonical::<serde_json::Value>(&e.payload).is_err() {
            return Err(broken("payload is not a JSON document"));
        }
        if e.expected_hash() != e.hash {
            return Err(broken("hash mismatch"));
        }
        prev = e.hash;
    }
    Ok(())
}

/// Splits a log file into events. Framing or decoding problems are
/// reported at the position of the offending record, together with the
/// events decoded before it and the byte offset where that record starts.
pub fn decode_log(bytes: &[u8]) -> (Vec<AuditEvent>, Option<(ChainBroken, usize)>) {
    let mut events = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let seq = events.len() as u64;
        let fail = |reason: String| Some((ChainBroken { seq, reason }, pos));
        let Some(len_bytes) = bytes.get(pos..pos + 4) else {
            return (events, fail("truncated length prefix".into()));
        };
        let len = u32::from_be_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
        let Some(body) = bytes.get(pos + 4..pos + 4 + len) else {
            return (events, fail("record extends past end of log".into()));
        };
        let record: AuditRecord = match from_canonical(body) {
            Ok(r) => r,
            Err(e) => return (events, fail(e.to_string())),
        };
        if to_canonical(&record) != body {
            return (events, fail("record is not in canonical form".into()));
        }
        match AuditEvent::from_record(record) {
            Ok(e) => events.push(e),
            Err(reason) => return (events, fail(reason)),
        }
        pos += 4 + len;
    }
    (events, None)
}

/// Verifies a serialized log; returns the number of events.
pub fn verify_bytes(bytes: &[u8]) -> Result<u64, ChainBroken> {
    let (events, err) = decode_log(bytes);
    verify_chain(&events)?;
    match err {
        Some((e, _)) => Err(e),
        None => Ok(events.len() as u64),
    }
}

/// Count and last hash of a log, recorded with every committed register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditHead {
    pub count: u64,
    pub hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditLog {
    events: Vec<AuditEvent>,
}

impl AuditLog {
    pub fn new() -> Self {
        AuditLog::default()
    }

    /// Wraps events after verifying them.
    pub fn from_events(events: Vec<AuditEvent>) -> Result<Self, ChainBroken> {
        verify_chain(&events)?;
        Ok(AuditLog { events })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ChainBroken> {
        let (events, err) = decode_log(bytes);
        verify_chain(&events)?;
        if let Some((e, _)) = err {
            return Err(e);
        }
        Ok(AuditLog { events })
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_hash(&self) -> [u8; HASH_LEN] {
        self.events.last().map_or(GENESIS, |e| e.hash)
    }

    pub fn head(&self) -> AuditHead {
        AuditHead {
            count: self.events.len() as u64,
            hash: hex::encode(self.last_hash()),
        }
    }

    /// Appends an event with a canonical payload.
    pub fn append<T: Serialize + ?Sized>(
        &mut self,
        actor: &str,
        kind: AuditKind,
        payload: &T,
        timestamp: Timestamp,
    ) -> &AuditEvent {
        let payload = to_canonical(payload);
        let seq = self.events.len() as u64;
        let prev_hash = self.last_hash();
        let hash = event_hash(&prev_hash, actor, kind, &payload, seq, timestamp);
        self.events.push(AuditEvent {
            seq,
            timestamp,
            actor: actor.to_string(),
            kind,
            payload,
            prev_hash,
            hash,
        });
        self.events.last().expect("just pushed")
    }

    pub fn verify(&self) -> Result<(), ChainBroken> {
        verify_chain(&self.events)
    }

    pub fn encode(&self) -> Vec<u8> {
        self.events.iter().flat_map(AuditEvent::encode).collect()
    }

    /// Encoded events from position `from` on.
    pub fn encode_from(&self, from: usize) -> Vec<u8> {
        self.events[from.min(self.events.len())..]
            .iter()
            .flat_map(AuditEvent::encode)
            .collect()
    }

    pub fn truncate(&mut self, len: usize) {
        self.events.truncate(len);
    }
}
