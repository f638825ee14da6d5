//! Simulator for the three-stage quantum protocol with KDC-backed classical
//! authentication.
//!
//! Alice and Bob each hold a secret separable transform (a tensor product of
//! 2×2 rotations). Alice sends `U_A(X)`, Bob returns `U_B U_A(X)` via the KDC,
//! Alice strips `U_A` and Bob strips `U_B`. Alongside the qubits, a ticket
//! exchange through the KDC authenticates both ends with nonces, Bob's
//! timestamp and a fresh session key.

pub mod abort;
pub mod attacks;
pub mod auth;
pub mod channel;
pub mod cli;
pub mod encoding;
pub mod parties;
pub mod quantum;
pub mod rng;
pub mod session;
pub mod trace;
pub mod transforms;

pub use abort::AbortReason;
pub use channel::{Adversary, Channel, ChannelConfig, QberReport};
pub use encoding::{BitString, QubitFrame, RedundancyFactor};
pub use session::{run_session, Network, Outcome, SessionConfig, SessionResult};
pub use transforms::{KeyPolicy, SeparableTransform, SlotFactor};
