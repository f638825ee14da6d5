//! JSONL trace events built from a [`TapLog`].
//!
//! Each line is one hop of one trial. Sealed bodies are rendered as opaque hex;
//! plaintext fields (party ids, nonces) are decoded. A trial that aborted
//! before anything was sent gets a single `hop: 0` event carrying the abort.

use serde::{Deserialize, Serialize};

use crate::auth::{parse_msg1, Msg2, Msg3, Msg4};
use crate::channel::{TapEntry, TapLog};
use crate::encoding::{deframe, QubitFrame};
use crate::parties::{Abort, Role};
use crate::rng::stream;

pub const SCHEMA_VERSION: &str = "tristage-trace/1";

/// Seed of the decoder rng. Fixed so trace bytes depend only on frame contents.
const DECODE_SEED: u64 = 0x7ace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub schema: String,
    pub trial: u64,
    pub hop: u8,
    pub label: String,
    pub sender: Role,
    pub receiver: Role,
    pub sent_at_ms: u64,
    pub delivered_at_ms: u64,
    pub auth: AuthView,
    pub payload: PayloadView,
    pub abort: Option<Abort>,
}

/// Decoded view of the auth segment as delivered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuthView {
    /// Authentication disabled or nothing to show.
    Empty,
    Msg1 { id_a: String, n_a: String },
    Msg2 { id_b: String, n_b: String, ticket_req: String },
    Msg3 { package_a: String, ticket_b: String, n_b: String },
    Msg4 { ticket_b: String, confirm: String },
    /// The segment decoded but did not parse as the message expected on this hop.
    Unparsed { hex: String },
    /// The frame header itself was unreadable.
    Undecodable { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadView {
    pub qubits: usize,
    /// `[re(alpha), im(alpha), re(beta), im(beta)]` per qubit.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub amplitudes: Option<Vec<[f64; 4]>>,
}

pub fn hop_label(hop: u8) -> &'static str {
    match hop {
        1 => "A → B",
        2 => "B → KDC",
        3 => "KDC → A",
        4 => "A → B",
        _ => "pre-flight",
    }
}

fn decode_auth(hop: u8, f: &QubitFrame) -> AuthView {
    let mut rng = stream(DECODE_SEED, hop as u64);
    let bits = match deframe(f, &mut rng) {
        Ok((bits, _)) => bits,
        Err(e) => return AuthView::Undecodable { error: e.to_string() },
    };
    if bits.is_empty() {
        return AuthView::Empty;
    }
    let parsed = match hop {
        1 => parse_msg1(&bits).ok().map(|(id_a, n_a)| AuthView::Msg1 {
            id_a: id_a.to_string(),
            n_a: hex::encode(n_a.as_bytes()),
        }),
        2 => Msg2::from_bits(&bits).ok().map(|m| AuthView::Msg2 {
            id_b: m.id_b.to_string(),
            n_b: hex::encode(m.n_b.as_bytes()),
            ticket_req: hex::encode(m.ticket_req.to_bytes()),
        }),
        3 => Msg3::from_bits(&bits).ok().map(|m| AuthView::Msg3 {
            package_a: hex::encode(m.package_a.to_bytes()),
            ticket_b: hex::encode(m.ticket_b.to_bytes()),
            n_b: hex::encode(m.n_b.as_bytes()),
        }),
        4 => Msg4::from_bits(&bits).ok().map(|m| AuthView::Msg4 {
            ticket_b: hex::encode(m.ticket_b.to_bytes()),
            confirm: hex::encode(m.confirm.to_bytes()),
        }),
        _ => None,
    };
    parsed.unwrap_or_else(|| AuthView::Unparsed { hex: hex::encode(bits.to_bytes()) })
}

fn payload_view(f: &QubitFrame, dump_amplitudes: bool) -> PayloadView {
    PayloadView {
        qubits: f.payload_qubits.len(),
        amplitudes: dump_amplitudes.then(|| {
            f.payload_qubits
                .iter()
                .map(|q| [q.alpha().re, q.alpha().im, q.beta().re, q.beta().im])
                .collect()
        }),
    }
}

pub fn event_for(trial: u64, e: &TapEntry, dump_amplitudes: bool) -> TraceEvent {
    TraceEvent {
        schema: SCHEMA_VERSION.to_string(),
        trial,
        hop: e.hop,
        label: hop_label(e.hop).to_string(),
        sender: e.from,
        receiver: e.to,
        sent_at_ms: e.sent_at.0,
        delivered_at_ms: e.delivered_at.0,
        auth: decode_auth(e.hop, &e.delivered),
        payload: payload_view(&e.delivered, dump_amplitudes),
        abort: e.abort,
    }
}

/// Events for one trial in chronological order.
pub fn events_for(trial: u64, tap: &TapLog, dump_amplitudes: bool) -> Vec<TraceEvent> {
    if tap.entries.is_empty() {
        return tap
            .preflight_abort
            .map(|a| TraceEvent {
                schema: SCHEMA_VERSION.to_string(),
                trial,
                hop: 0,
                label: hop_label(0).to_string(),
                sender: Role::Alice,
                receiver: Role::Bob,
                sent_at_ms: 0,
                delivered_at_ms: 0,
                auth: AuthView::Empty,
                payload: PayloadView { qubits: 0, amplitudes: None },
                abort: Some(a),
            })
            .into_iter()
            .collect();
    }
    let mut entries: Vec<&TapEntry> = tap.entries.iter().collect();
    entries.sort_by_key(|e| e.sent_at);
    entries.into_iter().map(|e| event_for(trial, e, dump_amplitudes)).collect()
}

/// Serialize one event as a single JSON line, without the trailing newline.
pub fn to_line(ev: &TraceEvent) -> String {
    serde_json::to_string(ev).expect("trace events always serialize")
}
