//! Alice, Bob and KDC state machines.
//!
//! Each machine consumes a [`QubitFrame`] and either produces the next frame
//! or aborts. Payload qubits move through the machines untouched except for
//! the owner's own transform; only Bob measures them, and only at the end.

use serde::{Deserialize, Serialize};

use crate::abort::AbortReason;
use crate::auth::{
    self, BobPending, KeyTable, MasterKey, Nonce, NonceSource, PartyId, ReplayCache, Timestamp,
};
use crate::encoding::{self, decode_q, encode_q, BitString, QubitFrame, RedundancyFactor};
use crate::quantum::QubitState;
use crate::rng::SimRng;
use crate::transforms::{apply_separable, apply_separable_dagger, SeparableTransform};

/// Simulated global time in milliseconds. Parties never read it directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    /// Far enough from zero that large negative clock skews stay representable.
    pub const EPOCH: SimTime = SimTime(1_000_000_000_000);

    pub fn plus(self, ms: u64) -> SimTime {
        SimTime(self.0 + ms)
    }
}

/// A party's local clock: global time plus a fixed skew.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartyClock {
    pub skew_ms: i64,
}

impl PartyClock {
    pub fn read(&self, now: SimTime) -> Timestamp {
        Timestamp(now.0.saturating_add_signed(self.skew_ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
    Kdc,
    Eve,
}

impl Role {
    pub fn short(self) -> &'static str {
        match self {
            Role::Alice => "A",
            Role::Bob => "B",
            Role::Kdc => "KDC",
            Role::Eve => "E",
        }
    }
}

/// An abort with the protocol step (1–4) at which it happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub reason: AbortReason,
    pub step: u8,
}

impl Abort {
    pub fn at(step: u8, reason: AbortReason) -> Self {
        Self { reason, step }
    }
}

/// Parameters every machine in a session agrees on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolParams {
    pub auth_enabled: bool,
    pub auth_redundancy: RedundancyFactor,
    pub payload_redundancy: RedundancyFactor,
    pub window_ms: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            auth_enabled: true,
            auth_redundancy: RedundancyFactor::THREE,
            payload_redundancy: RedundancyFactor::ONE,
            window_ms: auth::DEFAULT_WINDOW_MS,
        }
    }
}

fn deframe_at(step: u8, f: &QubitFrame, rng: &mut SimRng) -> Result<(BitString, Vec<QubitState>), Abort> {
    encoding::deframe(f, rng).map_err(|_| Abort::at(step, AbortReason::BadFrame))
}

fn reframe(
    step: u8,
    auth_bits: &BitString,
    payload: Vec<QubitState>,
    params: &ProtocolParams,
) -> Result<QubitFrame, Abort> {
    encoding::frame(auth_bits, payload, params.auth_redundancy)
        .map_err(|_| Abort::at(step, AbortReason::BadFrame))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlicePhase {
    Ready,
    AwaitingMsg3,
    Done,
    Aborted,
}

pub struct AliceState {
    phase: AlicePhase,
    id: PartyId,
    peer: PartyId,
    master: MasterKey,
    transform: SeparableTransform,
    params: ProtocolParams,
    n_a: Option<Nonce>,
    rng: SimRng,
}

impl AliceState {
    pub fn new(
        id: PartyId,
        peer: PartyId,
        master: MasterKey,
        transform: SeparableTransform,
        params: ProtocolParams,
        rng: SimRng,
    ) -> Self {
        Self {
            phase: AlicePhase::Ready,
            id,
            peer,
            master,
            transform,
            params,
            n_a: None,
            rng,
        }
    }

    pub fn phase(&self) -> AlicePhase {
        self.phase
    }

    fn fail(&mut self, a: Abort) -> Abort {
        self.phase = AlicePhase::Aborted;
        a
    }

    /// Step 1: `Q(ID_A ∥ N_a) ∥ U_A(X)`.
    pub fn start(&mut self, message: &BitString, nonces: &mut NonceSource) -> Result<QubitFrame, Abort> {
        if self.phase != AlicePhase::Ready {
            return Err(self.fail(Abort::at(1, AbortReason::PhaseViolation)));
        }
        let encoded = encode_q(message, self.params.payload_redundancy);
        let payload = apply_separable(&self.transform, &encoded)
            .map_err(|_| Abort::at(1, AbortReason::BadFrame))
            .map_err(|a| self.fail(a))?;
        let auth_bits = if self.params.auth_enabled {
            let n_a = nonces.fresh(&mut self.rng);
            self.n_a = Some(n_a);
            auth::build_msg1(self.id, n_a)
        } else {
            BitString::default()
        };
        let f = reframe(1, &auth_bits, payload, &self.params).map_err(|a| self.fail(a))?;
        self.phase = AlicePhase::AwaitingMsg3;
        Ok(f)
    }

    /// Step 3 → 4: validate the KDC package, strip `U_A`, emit ticket and confirmation.
    pub fn on_msg3(&mut self, frame: &QubitFrame) -> Result<QubitFrame, Abort> {
        if self.phase != AlicePhase::AwaitingMsg3 {
            return Err(self.fail(Abort::at(3, AbortReason::PhaseViolation)));
        }
        let (auth_bits, payload) = deframe_at(3, frame, &mut self.rng).map_err(|a| self.fail(a))?;
        let msg4_bits = if self.params.auth_enabled {
            let n_a = self.n_a.expect("nonce set in start");
            auth::alice_process_msg3(&auth_bits, &self.master, n_a, self.peer, &mut self.rng)
                .map_err(|r| self.fail(Abort::at(3, r)))?
                .msg4
        } else {
            BitString::default()
        };
        let payload = apply_separable_dagger(&self.transform, &payload)
            .map_err(|_| self.fail(Abort::at(3, AbortReason::BadFrame)))?;
        let f = reframe(4, &msg4_bits, payload, &self.params).map_err(|a| self.fail(a))?;
        self.phase = AlicePhase::Done;
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobPhase {
    AwaitingMsg1,
    AwaitingMsg4,
    Done,
    Aborted,
}

pub struct BobState {
    phase: BobPhase,
    id: PartyId,
    master: MasterKey,
    transform: SeparableTransform,
    clock: PartyClock,
    params: ProtocolParams,
    pending: Option<BobPending>,
    rng: SimRng,
}

impl BobState {
    pub fn new(
        id: PartyId,
        master: MasterKey,
        transform: SeparableTransform,
        clock: PartyClock,
        params: ProtocolParams,
        rng: SimRng,
    ) -> Self {
        Self {
            phase: BobPhase::AwaitingMsg1,
            id,
            master,
            transform,
            clock,
            params,
            pending: None,
            rng,
        }
    }

    pub fn phase(&self) -> BobPhase {
        self.phase
    }

    /// `T_b` recorded at step 2, if any.
    pub fn recorded_timestamp(&self) -> Option<Timestamp> {
        self.pending.as_ref().map(|p| p.t_b)
    }

    fn fail(&mut self, a: Abort) -> Abort {
        self.phase = BobPhase::Aborted;
        a
    }

    /// Step 2: apply `U_B` and ask the KDC for a session key.
    pub fn on_msg1(
        &mut self,
        frame: &QubitFrame,
        now: SimTime,
        nonces: &mut NonceSource,
    ) -> Result<QubitFrame, Abort> {
        if self.phase != BobPhase::AwaitingMsg1 {
            return Err(self.fail(Abort::at(2, AbortReason::PhaseViolation)));
        }
        let (auth_bits, payload) = deframe_at(2, frame, &mut self.rng).map_err(|a| self.fail(a))?;
        let payload = apply_separable(&self.transform, &payload)
            .map_err(|_| self.fail(Abort::at(2, AbortReason::BadFrame)))?;
        let msg2 = if self.params.auth_enabled {
            let (id_a, n_a) = auth::parse_msg1(&auth_bits).map_err(|r| self.fail(Abort::at(2, r)))?;
            let n_b = nonces.fresh(&mut self.rng);
            let t_b = self.clock.read(now);
            self.pending = Some(BobPending { id_a, n_b, t_b });
            auth::build_msg2(self.id, n_b, &self.master, id_a, n_a, t_b, &mut self.rng)
        } else {
            BitString::default()
        };
        let f = reframe(2, &msg2, payload, &self.params).map_err(|a| self.fail(a))?;
        self.phase = BobPhase::AwaitingMsg4;
        Ok(f)
    }

    /// Step 4: validate ticket and confirmation on Bob's clock, strip `U_B`, decode X.
    pub fn on_msg4(
        &mut self,
        frame: &QubitFrame,
        now: SimTime,
        cache: &mut ReplayCache,
    ) -> Result<BitString, Abort> {
        if self.phase != BobPhase::AwaitingMsg4 {
            return Err(self.fail(Abort::at(4, AbortReason::PhaseViolation)));
        }
        let (auth_bits, payload) = deframe_at(4, frame, &mut self.rng).map_err(|a| self.fail(a))?;
        if self.params.auth_enabled {
            let pending = self.pending.clone().expect("pending set in on_msg1");
            let now_b = self.clock.read(now);
            auth::bob_process_msg4(&auth_bits, &self.master, now_b, self.params.window_ms, &pending, cache)
                .map_err(|r| self.fail(Abort::at(4, r)))?;
        }
        let payload = apply_separable_dagger(&self.transform, &payload)
            .map_err(|_| self.fail(Abort::at(4, AbortReason::BadFrame)))?;
        let bits = decode_q(&payload, self.params.payload_redundancy, &mut self.rng)
            .map_err(|_| self.fail(Abort::at(4, AbortReason::BadFrame)))?;
        self.phase = BobPhase::Done;
        Ok(bits)
    }
}

/// The KDC. Stateless between messages apart from its key table.
pub struct KdcState {
    table: KeyTable,
    params: ProtocolParams,
    rng: SimRng,
}

impl KdcState {
    pub fn new(table: KeyTable, params: ProtocolParams, rng: SimRng) -> Self {
        Self { table, params, rng }
    }

    /// Step 3: mint `K_s`, seal the two packages and forward the payload as-is.
    pub fn on_msg2(&mut self, frame: &QubitFrame) -> Result<QubitFrame, Abort> {
        let (auth_bits, payload) = deframe_at(3, frame, &mut self.rng)?;
        let msg3 = if self.params.auth_enabled {
            auth::kdc_process_msg2(&auth_bits, &self.table, &mut self.rng)
                .map_err(|r| Abort::at(3, r))?
                .0
        } else {
            BitString::default()
        };
        reframe(3, &msg3, payload, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::transforms::{dense, generate_key, product_amplitudes, KeyPolicy};

    struct Parties {
        alice: AliceState,
        bob: BobState,
        kdc: KdcState,
        nonces_a: NonceSource,
        nonces_b: NonceSource,
        cache: ReplayCache,
        ua: SeparableTransform,
        ub: SeparableTransform,
    }

    fn parties(n: usize, seed: u64) -> Parties {
        let params = ProtocolParams::default();
        let mut krng = stream(seed, 0);
        let id_a = PartyId::from_u64(0xA).unwrap();
        let id_b = PartyId::from_u64(0xB).unwrap();
        let (k_a, k_b) = (MasterKey::random(&mut krng), MasterKey::random(&mut krng));
        let mut table = KeyTable::default();
        table.register(id_a, k_a.clone());
        table.register(id_b, k_b.clone());
        let ua = generate_key(n, KeyPolicy::RotationsOnly, &mut krng).unwrap();
        let ub = generate_key(n, KeyPolicy::RotationsOnly, &mut krng).unwrap();
        Parties {
            alice: AliceState::new(id_a, id_b, k_a, ua.clone(), params, stream(seed, 1)),
            bob: BobState::new(id_b, k_b, ub.clone(), PartyClock::default(), params, stream(seed, 2)),
            kdc: KdcState::new(table, params, stream(seed, 3)),
            nonces_a: NonceSource::default(),
            nonces_b: NonceSource::default(),
            cache: ReplayCache::default(),
            ua,
            ub,
        }
    }

    fn close(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() < 1e-9)
    }

    #[test]
    fn full_exchange_matches_dense_oracle_at_each_stage() {
        let x: BitString = "1011".parse().unwrap();
        let mut p = parties(4, 1);
        let t0 = SimTime::EPOCH;
        let encoded = product_amplitudes(&encode_q(&x, RedundancyFactor::ONE)).unwrap();
        let (da, db) = (dense(&p.ua).unwrap(), dense(&p.ub).unwrap());

        let f1 = p.alice.start(&x, &mut p.nonces_a).unwrap();
        assert!(f1.payload_qubits.iter().all(|q| q.prob_zero() > 1e-6 && q.prob_zero() < 1.0 - 1e-6));
        let (auth1, _) = encoding::deframe(&f1, &mut stream(9, 9)).unwrap();
        assert!(auth::parse_msg1(&auth1).is_ok());

        let f2 = p.bob.on_msg1(&f1, t0.plus(5), &mut p.nonces_b).unwrap();
        assert_eq!(p.bob.recorded_timestamp(), Some(Timestamp(t0.0 + 5)));
        let expect2 = db.mul(&da).apply(&encoded);
        assert!(close(&product_amplitudes(&f2.payload_qubits).unwrap(), &expect2));

        let f3 = p.kdc.on_msg2(&f2).unwrap();
        assert_eq!(f3.payload_qubits, f2.payload_qubits);

        let f4 = p.alice.on_msg3(&f3).unwrap();
        let expect4 = db.apply(&encoded);
        assert!(close(&product_amplitudes(&f4.payload_qubits).unwrap(), &expect4));

        let got = p.bob.on_msg4(&f4, t0.plus(20), &mut p.cache).unwrap();
        assert_eq!(got, x);
        assert_eq!(p.bob.phase(), BobPhase::Done);
        assert_eq!(p.alice.phase(), AlicePhase::Done);
    }

    #[test]
    fn out_of_phase_messages_abort() {
        let x: BitString = "01".parse().unwrap();
        let mut p = parties(2, 2);
        p.alice.start(&x, &mut p.nonces_a).unwrap();
        // Alice cannot start twice
        assert_eq!(p.alice.start(&x, &mut p.nonces_a).unwrap_err().reason, AbortReason::PhaseViolation);

        let mut p = parties(2, 3);
        let f1b = p.alice.start(&x, &mut p.nonces_a).unwrap();
        // msg1 delivered straight to Bob's step-4 handler
        assert_eq!(
            p.bob.on_msg4(&f1b, SimTime::EPOCH, &mut p.cache).unwrap_err().reason,
            AbortReason::PhaseViolation
        );
        assert_eq!(p.bob.phase(), BobPhase::Aborted);
    }

    #[test]
    fn wrong_message_to_right_phase_is_bad_frame() {
        let x: BitString = "110".parse().unwrap();
        let mut p = parties(3, 4);
        let f1 = p.alice.start(&x, &mut p.nonces_a).unwrap();
        // msg1 handed to Alice as if it were msg3
        assert_eq!(p.alice.on_msg3(&f1).unwrap_err(), Abort::at(3, AbortReason::BadFrame));
        // msg1 handed to the KDC as msg2
        assert_eq!(p.kdc.on_msg2(&f1).unwrap_err(), Abort::at(3, AbortReason::BadFrame));
    }

    #[test]
    fn done_bob_rejects_second_msg4() {
        let x: BitString = "1".parse().unwrap();
        let mut p = parties(1, 5);
        let t = SimTime::EPOCH;
        let f1 = p.alice.start(&x, &mut p.nonces_a).unwrap();
        let f2 = p.bob.on_msg1(&f1, t, &mut p.nonces_b).unwrap();
        let f3 = p.kdc.on_msg2(&f2).unwrap();
        let f4 = p.alice.on_msg3(&f3).unwrap();
        p.bob.on_msg4(&f4, t.plus(10), &mut p.cache).unwrap();
        assert_eq!(
            p.bob.on_msg4(&f4, t.plus(11), &mut p.cache).unwrap_err(),
            Abort::at(4, AbortReason::PhaseViolation)
        );
    }

    #[test]
    fn payload_length_mismatch_is_bad_frame() {
        let mut p = parties(3, 6);
        let f1 = encoding::frame(
            &auth::build_msg1(PartyId::from_u64(0xA).unwrap(), Nonce::from_bytes([1; 16])),
            vec![QubitState::ZERO; 5],
            RedundancyFactor::THREE,
        )
        .unwrap();
        assert_eq!(
            p.bob.on_msg1(&f1, SimTime::EPOCH, &mut p.nonces_b).unwrap_err(),
            Abort::at(2, AbortReason::BadFrame)
        );
    }

    #[test]
    fn clock_skew_applies() {
        let c = PartyClock { skew_ms: -1_000_000 };
        assert_eq!(c.read(SimTime::EPOCH), Timestamp(SimTime::EPOCH.0 - 1_000_000));
    }
}
