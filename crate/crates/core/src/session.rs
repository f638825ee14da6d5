//! Session orchestration: principals, configuration and the four-hop run.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abort::AbortReason;
use crate::auth::{self, KeyTable, MasterKey, NonceSource, PartyId, ReplayCache};
use crate::channel::{estimate_qber, Adversary, Channel, QberReport, TapLog};
use crate::encoding::{BitString, QubitFrame, RedundancyFactor};
use crate::parties::{
    Abort, AliceState, BobState, KdcState, PartyClock, ProtocolParams, Role, SimTime,
};
use crate::rng::{labels, stream, SimRng};
use crate::transforms::{generate_key, validate_commuting, KeyPolicy, SeparableTransform};

pub const ALICE_ID: u64 = 0x0000_0000_00A1_1CE0;
pub const BOB_ID: u64 = 0x0000_0000_0000_0B0B;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("payload must contain at least one bit")]
    EmptyPayload,
    #[error("{which} key has {actual} slots, session needs {expected}")]
    KeyLength {
        which: &'static str,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    /// The message X.
    pub payload: BitString,
    pub payload_redundancy: RedundancyFactor,
    pub auth_redundancy: RedundancyFactor,
    pub key_policy: KeyPolicy,
    pub window_ms: u64,
    pub auth_enabled: bool,
    pub seed: u64,
    /// Fixed transforms instead of generated ones.
    pub alice_key: Option<SeparableTransform>,
    pub bob_key: Option<SeparableTransform>,
}

impl SessionConfig {
    pub fn new(payload: BitString, seed: u64) -> Self {
        let defaults = ProtocolParams::default();
        Self {
            payload,
            payload_redundancy: defaults.payload_redundancy,
            auth_redundancy: defaults.auth_redundancy,
            key_policy: KeyPolicy::RotationsOnly,
            window_ms: defaults.window_ms,
            auth_enabled: true,
            seed,
            alice_key: None,
            bob_key: None,
        }
    }

    /// Payload qubits on the wire: `r · len(X)`.
    pub fn qubit_count(&self) -> usize {
        self.payload.len() * self.payload_redundancy.get()
    }

    pub fn params(&self) -> ProtocolParams {
        ProtocolParams {
            auth_enabled: self.auth_enabled,
            auth_redundancy: self.auth_redundancy,
            payload_redundancy: self.payload_redundancy,
            window_ms: self.window_ms,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.payload.is_empty() {
            return Err(ConfigError::EmptyPayload);
        }
        let n = self.qubit_count();
        for (which, key) in [("alice", &self.alice_key), ("bob", &self.bob_key)] {
            if let Some(k) = key {
                if k.len() != n {
                    return Err(ConfigError::KeyLength {
                        which,
                        expected: n,
                        actual: k.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Recovered { bits: BitString, bit_errors: usize },
    Aborted { reason: AbortReason, step: u8 },
}

impl Outcome {
    pub fn is_recovered(&self) -> bool {
        matches!(self, Outcome::Recovered { .. })
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        match self {
            Outcome::Aborted { reason, .. } => Some(*reason),
            Outcome::Recovered { .. } => None,
        }
    }
}

impl From<Abort> for Outcome {
    fn from(a: Abort) -> Self {
        Outcome::Aborted {
            reason: a.reason,
            step: a.step,
        }
    }
}

/// Bob's end of one run, plus what crossed the channel.
#[derive(Debug, Clone)]
pub struct SessionResult {
    pub outcome: Outcome,
    /// Payload bit error rate when Bob decoded something.
    pub qber: Option<QberReport>,
    /// The adversary's best guess at X, if it produced one.
    pub eve_guess: Option<BitString>,
    /// Every abort raised by an honest party, in order.
    pub honest_aborts: Vec<Abort>,
    pub tap: TapLog,
    /// The message Alice sent, for comparison.
    pub sent: BitString,
}

impl SessionResult {
    pub fn eve_recovered(&self) -> bool {
        self.eve_guess.as_ref() == Some(&self.sent)
    }

    pub(crate) fn finish(
        sent: BitString,
        outcome: Outcome,
        honest_aborts: Vec<Abort>,
        eve_guess: Option<BitString>,
        tap: TapLog,
    ) -> Self {
        let qber = match &outcome {
            Outcome::Recovered { bits, .. } => estimate_qber(&sent, bits).ok(),
            Outcome::Aborted { .. } => None,
        };
        Self {
            outcome,
            qber,
            eve_guess,
            honest_aborts,
            tap,
            sent,
        }
    }
}

/// Clock skews for the three honest principals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClockSkews {
    pub alice_ms: i64,
    pub bob_ms: i64,
    pub kdc_ms: i64,
}

pub(crate) struct Principal {
    pub(crate) id: PartyId,
    pub(crate) master: MasterKey,
    pub(crate) clock: PartyClock,
    pub(crate) nonces: NonceSource,
}

/// The long-lived world a run happens in: registered principals, the KDC's
/// key table, Bob's replay cache and simulated time.
pub struct Network {
    pub(crate) alice: Principal,
    pub(crate) bob: Principal,
    pub(crate) kdc_table: KeyTable,
    pub(crate) kdc_clock: PartyClock,
    pub(crate) bob_cache: ReplayCache,
    pub(crate) now: SimTime,
}

impl Network {
    pub fn new(seed: u64) -> Self {
        Self::with_skews(seed, ClockSkews::default())
    }

    pub fn with_skews(seed: u64, skews: ClockSkews) -> Self {
        let mut rng = stream(seed, labels::MASTER_KEYS);
        let alice = Principal {
            id: PartyId::from_u64(ALICE_ID).expect("nonzero"),
            master: MasterKey::random(&mut rng),
            clock: PartyClock { skew_ms: skews.alice_ms },
            nonces: NonceSource::default(),
        };
        let bob = Principal {
            id: PartyId::from_u64(BOB_ID).expect("nonzero"),
            master: MasterKey::random(&mut rng),
            clock: PartyClock { skew_ms: skews.bob_ms },
            nonces: NonceSource::default(),
        };
        let mut kdc_table = KeyTable::default();
        kdc_table.register(alice.id, alice.master.clone());
        kdc_table.register(bob.id, bob.master.clone());
        Self {
            alice,
            bob,
            kdc_table,
            kdc_clock: PartyClock { skew_ms: skews.kdc_ms },
            bob_cache: ReplayCache::default(),
            now: SimTime::EPOCH,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Lets simulated time pass between sessions.
    pub fn advance(&mut self, ms: u64) {
        self.now = self.now.plus(ms);
    }

    pub fn alice_id(&self) -> PartyId {
        self.alice.id
    }

    pub fn bob_id(&self) -> PartyId {
        self.bob.id
    }

    /// Local clock readings of (Alice, Bob, KDC) right now.
    pub fn clock_readings(&self) -> [auth::Timestamp; 3] {
        [
            self.alice.clock.read(self.now),
            self.bob.clock.read(self.now),
            self.kdc_clock.read(self.now),
        ]
    }

    pub(crate) fn session_keys(
        &self,
        cfg: &SessionConfig,
    ) -> (SeparableTransform, SeparableTransform) {
        let n = cfg.qubit_count();
        let ua = cfg.alice_key.clone().unwrap_or_else(|| {
            generate_key(n, cfg.key_policy, &mut stream(cfg.seed, labels::ALICE_KEY))
                .expect("validated non-empty")
        });
        let ub = cfg.bob_key.clone().unwrap_or_else(|| {
            generate_key(n, cfg.key_policy, &mut stream(cfg.seed, labels::BOB_KEY))
                .expect("validated non-empty")
        });
        (ua, ub)
    }

    pub(crate) fn alice_machine(&self, cfg: &SessionConfig, ua: SeparableTransform) -> AliceState {
        AliceState::new(
            self.alice.id,
            self.bob.id,
            self.alice.master.clone(),
            ua,
            cfg.params(),
            stream(cfg.seed, labels::ALICE),
        )
    }

    pub(crate) fn bob_machine(&self, cfg: &SessionConfig, ub: SeparableTransform) -> BobState {
        BobState::new(
            self.bob.id,
            self.bob.master.clone(),
            ub,
            self.bob.clock,
            cfg.params(),
            stream(cfg.seed, labels::BOB),
        )
    }

    pub(crate) fn kdc_machine(&self, cfg: &SessionConfig) -> KdcState {
        KdcState::new(self.kdc_table.clone(), cfg.params(), stream(cfg.seed, labels::KDC))
    }

    /// Runs one session over `channel`. Man-in-the-middle channels are handed
    /// to [`crate::attacks::mitm_attack`].
    pub fn run_session(&mut self, cfg: &SessionConfig, channel: &mut Channel) -> Result<SessionResult, ConfigError> {
        cfg.validate()?;
        if let Adversary::Mitm { passive } = channel.config().adversary {
            let eve = crate::attacks::EveKeys::generate(cfg.qubit_count(), cfg.seed);
            let outcome = crate::attacks::mitm_attack(self, cfg, &eve, passive, channel);
            return Ok(outcome.into_session_result(cfg.payload.clone(), channel.tap().clone()));
        }

        let (ua, ub) = self.session_keys(cfg);
        let sent = cfg.payload.clone();
        if !validate_commuting(&ua, &ub).unwrap_or(false) {
            let abort = Abort::at(1, AbortReason::NonCommutingKeys);
            channel.mark_abort(abort);
            return Ok(SessionResult::finish(sent, abort.into(), vec![abort], None, channel.tap().clone()));
        }

        let mut alice = self.alice_machine(cfg, ua);
        let mut bob = self.bob_machine(cfg, ub);
        let mut kdc = self.kdc_machine(cfg);

        let result = self.drive(cfg, &mut alice, &mut bob, &mut kdc, channel);
        let (outcome, aborts) = match result {
            Ok(bits) => {
                let bit_errors = estimate_qber(&sent, &bits).map(|q| q.mismatches).unwrap_or(bits.len());
                (Outcome::Recovered { bits, bit_errors }, vec![])
            }
            Err(a) => {
                channel.mark_abort(a);
                (a.into(), vec![a])
            }
        };
        let eve_guess = eve_guess_from(channel.eve_observations(), cfg.payload_redundancy);
        Ok(SessionResult::finish(sent, outcome, aborts, eve_guess, channel.tap().clone()))
    }

    pub(crate) fn drive(
        &mut self,
        cfg: &SessionConfig,
        alice: &mut AliceState,
        bob: &mut BobState,
        kdc: &mut KdcState,
        channel: &mut Channel,
    ) -> Result<BitString, Abort> {
        let f1 = alice.start(&cfg.payload, &mut self.alice.nonces)?;
        let d1 = self.hop(channel, f1, 1, Role::Alice, Role::Bob);
        let f2 = bob.on_msg1(&d1, self.now, &mut self.bob.nonces)?;
        let d2 = self.hop(channel, f2, 2, Role::Bob, Role::Kdc);
        let f3 = kdc.on_msg2(&d2)?;
        let d3 = self.hop(channel, f3, 3, Role::Kdc, Role::Alice);
        let f4 = alice.on_msg3(&d3)?;
        let d4 = self.hop(channel, f4, 4, Role::Alice, Role::Bob);
        bob.on_msg4(&d4, self.now, &mut self.bob_cache)
    }

    pub(crate) fn hop(&mut self, channel: &mut Channel, f: QubitFrame, hop: u8, from: Role, to: Role) -> QubitFrame {
        let d = channel.transmit(f, hop, from, to, self.now);
        self.now = d.at;
        d.frame
    }
}

/// Majority-decodes raw measurement bits into a guess at X.
pub(crate) fn eve_guess_from(raw: &[bool], r: RedundancyFactor) -> Option<BitString> {
    if raw.is_empty() {
        return None;
    }
    if !raw.len().is_multiple_of(r.get()) {
        return None;
    }
    Some(BitString::new(
        raw.chunks(r.get())
            .map(|g| g.iter().filter(|&&b| b).count() * 2 > r.get())
            .collect(),
    ))
}

/// Runs one session in a fresh [`Network`] seeded from `cfg.seed`.
pub fn run_session(cfg: &SessionConfig, channel: &mut Channel) -> Result<SessionResult, ConfigError> {
    Network::new(cfg.seed).run_session(cfg, channel)
}

/// Random payload of `len` bits drawn from `seed`.
pub fn random_payload(len: usize, seed: u64) -> BitString {
    let mut rng: SimRng = stream(seed, labels::PAYLOAD);
    BitString::new((0..len).map(|_| rng.random()).collect())
}
