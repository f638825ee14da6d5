//! Classical authentication layer: identities, nonces, keys, sealed records
//! and the four protocol messages.

mod cipher;
mod messages;
mod record;

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cipher::{open, seal, Cipher, OpenError, SealedRecord, ToyCipher, TAG_LEN};
pub use messages::{
    alice_process_msg3, bob_process_msg4, build_msg1, build_msg2, kdc_process_msg2,
    parse_msg1, Msg2, Msg3, Msg3Accepted, Msg4,
};
pub use record::{AuthRecord, RecordError};

/// Default freshness window on Bob's clock, in milliseconds.
pub const DEFAULT_WINDOW_MS: u64 = 5_000;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId([u8; 8]);

impl PartyId {
    pub const LEN: usize = 8;

    /// Returns `None` for the all-zero id.
    pub fn new(bytes: [u8; 8]) -> Option<Self> {
        (bytes != [0; 8]).then_some(Self(bytes))
    }

    pub fn from_u64(v: u64) -> Option<Self> {
        Self::new(v.to_be_bytes())
    }

    pub fn as_bytes(&self) -> &[u8; 8] {
        &self.0
    }
}

impl fmt::Debug for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartyId({})", hex::encode(self.0))
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Nonce([u8; 16]);

impl Nonce {
    pub const LEN: usize = 16;

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(rng.random())
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", hex::encode(self.0))
    }
}

/// Issues nonces that a party has never emitted before.
#[derive(Debug, Default, Clone)]
pub struct NonceSource {
    issued: HashSet<Nonce>,
}

impl NonceSource {
    pub fn fresh<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Nonce {
        loop {
            let n = Nonce::random(rng);
            if self.issued.insert(n) {
                return n;
            }
        }
    }

    pub fn issued(&self) -> usize {
        self.issued.len()
    }
}

/// Milliseconds on one party's local clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn abs_diff(self, other: Timestamp) -> u64 {
        self.0.abs_diff(other.0)
    }
}

/// 32 bytes of symmetric key material. Bytes never leave the crate.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct KeyMaterial([u8; 32]);

impl KeyMaterial {
    pub(crate) fn bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("KeyMaterial(..)")
    }
}

/// Anything usable as a sealing key.
pub trait SealingKey {
    fn material(&self) -> &KeyMaterial;
}

/// Long-term key shared between one principal and the KDC.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterKey(KeyMaterial);

impl MasterKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(KeyMaterial(bytes))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_bytes(rng.random())
    }
}

impl SealingKey for MasterKey {
    fn material(&self) -> &KeyMaterial {
        &self.0
    }
}

/// Per-session key. Only the KDC mints these.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionKey(KeyMaterial);

impl SessionKey {
    pub(crate) fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(KeyMaterial(rng.random()))
    }

    pub(crate) fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(KeyMaterial(bytes))
    }
}

impl SealingKey for SessionKey {
    fn material(&self) -> &KeyMaterial {
        &self.0
    }
}

/// KDC's view: every registered principal's master key.
#[derive(Debug, Clone, Default)]
pub struct KeyTable {
    keys: HashMap<PartyId, MasterKey>,
}

impl KeyTable {
    pub fn register(&mut self, id: PartyId, key: MasterKey) {
        self.keys.insert(id, key);
    }

    pub fn get(&self, id: &PartyId) -> Option<&MasterKey> {
        self.keys.get(id)
    }
}

/// Bob's record of consumed confirmation nonces, kept for the whole run.
#[derive(Debug, Default, Clone)]
pub struct ReplayCache {
    consumed: HashMap<Nonce, SessionKey>,
}

impl ReplayCache {
    pub fn is_consumed(&self, n: &Nonce) -> bool {
        self.consumed.contains_key(n)
    }

    pub(crate) fn consume(&mut self, n: Nonce, k: SessionKey) {
        self.consumed.insert(n, k);
    }

    pub fn len(&self) -> usize {
        self.consumed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumed.is_empty()
    }
}

/// What Bob remembers about his half of a session while waiting for msg4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BobPending {
    pub id_a: PartyId,
    pub n_b: Nonce,
    pub t_b: Timestamp,
}
