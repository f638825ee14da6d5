//! Active attack harnesses: man-in-the-middle and replay.
//!
//! Eve controls the channel completely but holds no master key. Everything
//! she sends is built from frames she observed plus material she generated
//! herself.

use rand::Rng;

use crate::abort::AbortReason;
use crate::auth::{self, seal, AuthRecord, MasterKey, Msg3, Msg4, NonceSource, PartyId, SessionKey, Timestamp};
use crate::channel::{Adversary, Channel, ChannelConfig, ReplayTarget, TapLog};
use crate::encoding::{decode_q, deframe, encode_q, frame, BitString, QubitFrame};
use crate::parties::{Abort, Role};
use crate::rng::{labels, stream, trial_seed, SimRng};
use crate::session::{random_payload, ConfigError, Network, Outcome, SessionConfig, SessionResult};
use crate::transforms::{apply_separable, apply_separable_dagger, generate_key, KeyPolicy, SeparableTransform};

/// Eve's own secrets: one transform per impersonated leg and a key she can
/// seal forgeries with.
#[derive(Debug, Clone)]
pub struct EveKeys {
    pub toward_alice: SeparableTransform,
    pub toward_bob: SeparableTransform,
    forge_key: MasterKey,
    seed: u64,
}

impl EveKeys {
    pub fn generate(n: usize, seed: u64) -> Self {
        let mut rng = stream(seed, labels::EVE);
        Self {
            toward_alice: generate_key(n.max(1), KeyPolicy::RotationsOnly, &mut rng).expect("n ≥ 1"),
            toward_bob: generate_key(n.max(1), KeyPolicy::RotationsOnly, &mut rng).expect("n ≥ 1"),
            forge_key: MasterKey::random(&mut rng),
            seed,
        }
    }
}

/// How Eve tries to get Alice's leg past authentication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AliceLegForgery {
    /// Pose as Bob to the KDC with a ticket request sealed under a guessed key.
    TicketRequest,
    /// Skip the KDC and hand Alice a fabricated package.
    Package,
}

/// How Eve tries to finish Bob's leg without the session key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobLegForgery {
    /// Forward the genuine ticket with a confirmation sealed under a guessed key.
    Confirm,
    /// Fabricate both ticket and confirmation.
    Ticket,
}

#[derive(Debug, Clone)]
pub struct MitmOutcome {
    /// Eve's decode of what she believes is X.
    pub eve_guess: Option<BitString>,
    pub eve_recovered: bool,
    /// `Ok` when Alice finished her leg without aborting.
    pub alice_leg: Result<(), Abort>,
    /// What Bob ended up with.
    pub bob_leg: Result<BitString, Abort>,
    pub honest_aborts: Vec<Abort>,
}

impl MitmOutcome {
    pub fn honest_aborted(&self) -> bool {
        self.alice_leg.is_err() && self.bob_leg.is_err()
    }

    pub fn into_session_result(self, sent: BitString, tap: TapLog) -> SessionResult {
        let outcome = match self.bob_leg {
            Ok(bits) => {
                let bit_errors = bits.bits().iter().zip(sent.bits()).filter(|(a, b)| a != b).count();
                Outcome::Recovered { bits, bit_errors }
            }
            Err(a) => a.into(),
        };
        SessionResult::finish(sent, outcome, self.honest_aborts, self.eve_guess, tap)
    }
}

/// The adversary. Her methods take and return frames only.
struct Eve {
    keys: EveKeys,
    rng: SimRng,
    nonces: NonceSource,
}

impl Eve {
    fn forged_session_key(&mut self) -> SessionKey {
        SessionKey::from_bytes(self.rng.random())
    }

    fn clock(&self, now: crate::parties::SimTime) -> Timestamp {
        Timestamp(now.0)
    }

    /// Applies `U_E` to Alice's step-1 payload and returns (ID_A, N_a) if visible.
    fn absorb_msg1(&mut self, f: &QubitFrame, cfg: &SessionConfig) -> (Option<(PartyId, auth::Nonce)>, Vec<crate::quantum::QubitState>) {
        let (auth_bits, payload) = match deframe(f, &mut self.rng) {
            Ok(x) => x,
            Err(_) => (BitString::default(), f.payload_qubits.clone()),
        };
        let ids = cfg.auth_enabled.then(|| auth::parse_msg1(&auth_bits).ok()).flatten();
        let payload = apply_separable(&self.keys.toward_alice, &payload).unwrap_or(payload);
        (ids, payload)
    }

    fn forged_msg2(&mut self, bob_id: PartyId, id_a: PartyId, n_a: auth::Nonce, t: Timestamp) -> BitString {
        let n_e = self.nonces.fresh(&mut self.rng);
        auth::build_msg2(bob_id, n_e, &self.keys.forge_key, id_a, n_a, t, &mut self.rng)
    }

    fn forged_msg3(&mut self, bob_id: PartyId, id_a: PartyId, n_a: auth::Nonce, t: Timestamp) -> BitString {
        let k = self.forged_session_key();
        let package_a = seal(
            &self.keys.forge_key,
            &AuthRecord::PackageA { id_b: bob_id, n_a, k_s: k.clone(), t_b: t },
            &mut self.rng,
        );
        let ticket_b = seal(&self.keys.forge_key, &AuthRecord::TicketB { id_a, k_s: k, t_b: t }, &mut self.rng);
        let n_b = self.nonces.fresh(&mut self.rng);
        Msg3 { package_a, ticket_b, n_b }.to_bits()
    }

    fn forged_msg4(&mut self, genuine_msg3: &BitString, how: BobLegForgery, id_a: PartyId, t: Timestamp) -> BitString {
        let k = self.forged_session_key();
        let (ticket_b, n_b) = match Msg3::from_bits(genuine_msg3) {
            Ok(m3) => (m3.ticket_b, m3.n_b),
            Err(_) => (
                seal(&self.keys.forge_key, &AuthRecord::TicketB { id_a, k_s: k.clone(), t_b: t }, &mut self.rng),
                self.nonces.fresh(&mut self.rng),
            ),
        };
        let ticket_b = match how {
            BobLegForgery::Confirm => ticket_b,
            BobLegForgery::Ticket => {
                seal(&self.keys.forge_key, &AuthRecord::TicketB { id_a, k_s: k.clone(), t_b: t }, &mut self.rng)
            }
        };
        let confirm = seal(&k, &AuthRecord::Confirm { n_b }, &mut self.rng);
        Msg4 { ticket_b, confirm }.to_bits()
    }

    fn decode_returned(&mut self, f: &QubitFrame, cfg: &SessionConfig) -> Option<BitString> {
        let (_, payload) = deframe(f, &mut self.rng).ok()?;
        let stripped = apply_separable_dagger(&self.keys.toward_alice, &payload).ok()?;
        decode_q(&stripped, cfg.payload_redundancy, &mut self.rng).ok()
    }
}

/// Eve sits between Alice and Bob and runs the protocol as "Bob" toward
/// Alice and as "Alice" toward Bob. With `passive` she forwards everything.
pub fn mitm_attack(
    net: &mut Network,
    cfg: &SessionConfig,
    eve_keys: &EveKeys,
    passive: bool,
    channel: &mut Channel,
) -> MitmOutcome {
    let (ua, ub) = net.session_keys(cfg);
    if passive {
        let mut alice = net.alice_machine(cfg, ua);
        let mut bob = net.bob_machine(cfg, ub);
        let mut kdc = net.kdc_machine(cfg);
        let bob_leg = net.drive(cfg, &mut alice, &mut bob, &mut kdc, channel);
        if let Err(a) = bob_leg {
            channel.mark_abort(a);
        }
        let honest_aborts = bob_leg.as_ref().err().copied().into_iter().collect();
        return MitmOutcome {
            eve_guess: None,
            eve_recovered: false,
            alice_leg: bob_leg.as_ref().map(|_| ()).map_err(|a| *a),
            bob_leg,
            honest_aborts,
        };
    }

    let mut eve = Eve {
        keys: eve_keys.clone(),
        rng: stream(eve_keys.seed, labels::EVE + 1),
        nonces: NonceSource::default(),
    };
    let alice_forgery = if eve.rng.random() { AliceLegForgery::TicketRequest } else { AliceLegForgery::Package };
    let bob_forgery = if eve.rng.random() { BobLegForgery::Confirm } else { BobLegForgery::Ticket };
    let (alice_id, bob_id) = (net.alice_id(), net.bob_id());
    let mut kdc = net.kdc_machine(cfg);
    let mut honest_aborts = Vec::new();
    let mut eve_guess = None;

    // Leg A: Alice ↔ Eve posing as Bob.
    let mut alice = net.alice_machine(cfg, ua);
    let alice_leg = (|| -> Result<(), Abort> {
        let f1 = alice.start(&cfg.payload, &mut net.alice.nonces)?;
        let d1 = net.hop(channel, f1, 1, Role::Alice, Role::Eve);
        let (ids, payload) = eve.absorb_msg1(&d1, cfg);
        let t = eve.clock(net.now);
        let (id_a, n_a) = ids.unwrap_or((alice_id, auth::Nonce::from_bytes(eve.rng.random())));

        let msg3_frame = if cfg.auth_enabled && alice_forgery == AliceLegForgery::TicketRequest {
            let m2 = eve.forged_msg2(bob_id, id_a, n_a, t);
            let f2 = frame(&m2, payload, cfg.auth_redundancy).expect("fits");
            let d2 = net.hop(channel, f2, 2, Role::Eve, Role::Kdc);
            let f3 = kdc.on_msg2(&d2)?;
            net.hop(channel, f3, 3, Role::Kdc, Role::Alice)
        } else {
            let m3 = if cfg.auth_enabled { eve.forged_msg3(bob_id, id_a, n_a, t) } else { BitString::default() };
            let f3 = frame(&m3, payload, cfg.auth_redundancy).expect("fits");
            net.hop(channel, f3, 3, Role::Eve, Role::Alice)
        };
        let f4 = alice.on_msg3(&msg3_frame)?;
        let d4 = net.hop(channel, f4, 4, Role::Alice, Role::Eve);
        eve_guess = eve.decode_returned(&d4, cfg);
        Ok(())
    })();
    if let Err(a) = alice_leg {
        channel.mark_abort(a);
        honest_aborts.push(a);
    }

    // Leg B: Eve posing as Alice ↔ Bob.
    let mut bob = net.bob_machine(cfg, ub);
    let bob_leg = (|| -> Result<BitString, Abort> {
        let fake = random_payload(cfg.payload.len(), eve.rng.random());
        let encoded = encode_q(&fake, cfg.payload_redundancy);
        let payload = apply_separable(&eve.keys.toward_bob, &encoded).expect("same length");
        let m1 = if cfg.auth_enabled {
            auth::build_msg1(alice_id, eve.nonces.fresh(&mut eve.rng))
        } else {
            BitString::default()
        };
        let f1 = frame(&m1, payload, cfg.auth_redundancy).expect("fits");
        let d1 = net.hop(channel, f1, 1, Role::Eve, Role::Bob);
        let f2 = bob.on_msg1(&d1, net.now, &mut net.bob.nonces)?;
        let d2 = net.hop(channel, f2, 2, Role::Bob, Role::Kdc);
        let f3 = kdc.on_msg2(&d2)?;
        let d3 = net.hop(channel, f3, 3, Role::Kdc, Role::Eve);

        let (m3, payload) = deframe(&d3, &mut eve.rng).map_err(|_| Abort::at(3, AbortReason::BadFrame))?;
        let payload = apply_separable_dagger(&eve.keys.toward_bob, &payload).expect("same length");
        let m4 = if cfg.auth_enabled {
            let t = eve.clock(net.now);
            eve.forged_msg4(&m3, bob_forgery, alice_id, t)
        } else {
            BitString::default()
        };
        let f4 = frame(&m4, payload, cfg.auth_redundancy).expect("fits");
        let d4 = net.hop(channel, f4, 4, Role::Eve, Role::Bob);
        bob.on_msg4(&d4, net.now, &mut net.bob_cache)
    })();
    if let Err(a) = &bob_leg {
        channel.mark_abort(*a);
        honest_aborts.push(*a);
    }

    let eve_recovered = eve_guess.as_ref() == Some(&cfg.payload);
    MitmOutcome {
        eve_guess,
        eve_recovered,
        alice_leg,
        bob_leg,
        honest_aborts,
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    /// Fresh session with the recorded msg3 re-injected toward Alice.
    pub msg3: SessionResult,
    /// Fresh session with the recorded msg4 re-injected toward Bob.
    pub msg4: SessionResult,
}

/// Re-injects recorded frames into two fresh sessions on the same network.
pub fn replay_attack(
    net: &mut Network,
    recorded: &TapLog,
    cfg: &SessionConfig,
) -> Result<ReplayOutcome, ConfigError> {
    let run = |net: &mut Network, target: ReplayTarget, label: u64| {
        let mut c = cfg.clone();
        c.seed = trial_seed(cfg.seed, label);
        let ch_cfg = ChannelConfig {
            adversary: Adversary::Replay(target),
            flip_noise_p: 0.0,
            seed: c.seed,
        };
        net.run_session(&c, &mut Channel::with_recording(ch_cfg, recorded.clone()))
    };
    Ok(ReplayOutcome {
        msg3: run(net, ReplayTarget::Msg3, 3)?,
        msg4: run(net, ReplayTarget::Msg4, 4)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64, auth: bool) -> SessionConfig {
        let mut c = SessionConfig::new(random_payload(24, seed), seed);
        c.auth_enabled = auth;
        c
    }

    fn mitm(seed: u64, auth: bool, passive: bool) -> MitmOutcome {
        let c = cfg(seed, auth);
        let mut net = Network::new(seed);
        let eve = EveKeys::generate(c.qubit_count(), seed ^ 0xE5E);
        let mut ch = Channel::new(ChannelConfig::new(Adversary::Mitm { passive }, 0.0, seed).unwrap());
        mitm_attack(&mut net, &c, &eve, passive, &mut ch)
    }

    #[test]
    fn bare_mode_mitm_succeeds() {
        for seed in 0..20 {
            let o = mitm(seed, false, false);
            assert!(o.eve_recovered, "seed {seed}");
            assert!(o.honest_aborts.is_empty());
        }
    }

    #[test]
    fn authenticated_mitm_fails() {
        let allowed = [
            AbortReason::BadTicketReq,
            AbortReason::BadPackage,
            AbortReason::BadTicket,
            AbortReason::BadConfirm,
            AbortReason::ReplayOrForgery,
        ];
        for seed in 0..20 {
            let o = mitm(seed, true, false);
            assert!(!o.eve_recovered);
            assert!(o.honest_aborted());
            assert!(o.honest_aborts.iter().all(|a| allowed.contains(&a.reason)), "{:?}", o.honest_aborts);
        }
    }

    #[test]
    fn passive_mitm_is_transparent() {
        let o = mitm(3, true, true);
        assert!(o.alice_leg.is_ok());
        assert_eq!(o.bob_leg.unwrap(), cfg(3, true).payload);
        assert!(o.eve_guess.is_none());
    }

    #[test]
    fn replays_are_rejected() {
        let c = cfg(11, true);
        let mut net = Network::new(11);
        let honest = net
            .run_session(&c, &mut Channel::new(ChannelConfig::honest(11)))
            .unwrap();
        assert!(honest.outcome.is_recovered());
        let out = replay_attack(&mut net, &honest.tap, &c).unwrap();
        assert_eq!(out.msg3.outcome.abort_reason(), Some(AbortReason::ReplayOrForgery));
        assert_eq!(out.msg4.outcome.abort_reason(), Some(AbortReason::Replay));
    }
}
