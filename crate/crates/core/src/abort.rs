use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a protocol run stopped. Closed set; every abort maps to exactly one.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AbortReason {
    #[error("frame could not be decoded")]
    BadFrame,
    #[error("party not registered with the KDC")]
    UnknownParty,
    #[error("ticket request failed integrity check")]
    BadTicketReq,
    #[error("KDC package failed integrity check")]
    BadPackage,
    #[error("package names a different peer")]
    PeerMismatch,
    #[error("package carries a nonce from another session")]
    ReplayOrForgery,
    #[error("ticket failed integrity check")]
    BadTicket,
    #[error("confirmation failed integrity check")]
    BadConfirm,
    #[error("confirmation nonce is stale or already consumed")]
    Replay,
    #[error("ticket timestamp outside freshness window")]
    StaleTimestamp,
    #[error("secret transforms do not commute")]
    NonCommutingKeys,
    #[error("message arrived out of phase")]
    PhaseViolation,
}

impl AbortReason {
    pub const ALL: [AbortReason; 12] = [
        AbortReason::BadFrame,
        AbortReason::UnknownParty,
        AbortReason::BadTicketReq,
        AbortReason::BadPackage,
        AbortReason::PeerMismatch,
        AbortReason::ReplayOrForgery,
        AbortReason::BadTicket,
        AbortReason::BadConfirm,
        AbortReason::Replay,
        AbortReason::StaleTimestamp,
        AbortReason::NonCommutingKeys,
        AbortReason::PhaseViolation,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AbortReason::BadFrame => "BadFrame",
            AbortReason::UnknownParty => "UnknownParty",
            AbortReason::BadTicketReq => "BadTicketReq",
            AbortReason::BadPackage => "BadPackage",
            AbortReason::PeerMismatch => "PeerMismatch",
            AbortReason::ReplayOrForgery => "ReplayOrForgery",
            AbortReason::BadTicket => "BadTicket",
            AbortReason::BadConfirm => "BadConfirm",
            AbortReason::Replay => "Replay",
            AbortReason::StaleTimestamp => "StaleTimestamp",
            AbortReason::NonCommutingKeys => "NonCommutingKeys",
            AbortReason::PhaseViolation => "PhaseViolation",
        }
    }
}
