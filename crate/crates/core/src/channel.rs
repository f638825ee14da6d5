//! The transmission medium: flip noise, pluggable adversaries, tap log and QBER.
//!
//! Adversaries here only ever see [`QubitFrame`]s and the [`TapLog`]. No key
//! material or party transform reaches this module.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{BitString, QubitFrame};
use crate::parties::{Abort, Role, SimTime};
use crate::quantum::{self, measure, Unitary2};
use crate::rng::SimRng;

/// One-way delivery latency of every hop.
pub const HOP_LATENCY_MS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayTarget {
    /// Re-inject the recorded KDC → A frame toward Alice.
    Msg3,
    /// Re-inject the recorded final A → B frame toward Bob.
    Msg4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    #[default]
    None,
    /// Eve measures every payload qubit on hop 1 and forwards the collapsed states.
    InterceptResend,
    /// Eve impersonates each endpoint to the other. Driven by
    /// [`crate::attacks::mitm_attack`]; `passive` forwards everything.
    Mitm { passive: bool },
    /// Eve substitutes a frame recorded from an earlier session.
    Replay(ReplayTarget),
    /// Eve withholds msg4 for `delay_ms` of simulated time before delivering it.
    SuppressReplay { delay_ms: u64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("flip probability must lie in [0, 1], got {0}")]
    InvalidNoise(f64),
    #[error("sent and received strings differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub adversary: Adversary,
    pub flip_noise_p: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(adversary: Adversary, flip_noise_p: f64, seed: u64) -> Result<Self, ChannelError> {
        if !(0.0..=1.0).contains(&flip_noise_p) {
            return Err(ChannelError::InvalidNoise(flip_noise_p));
        }
        Ok(Self {
            adversary,
            flip_noise_p,
            seed,
        })
    }

    pub fn honest(seed: u64) -> Self {
        Self {
            adversary: Adversary::None,
            flip_noise_p: 0.0,
            seed,
        }
    }
}

/// What crossed the channel on one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct TapEntry {
    /// Protocol line 1–4.
    pub hop: u8,
    pub from: Role,
    pub to: Role,
    pub sent_at: SimTime,
    pub delivered_at: SimTime,
    /// Amplitude snapshot of what the sender emitted.
    pub sent: QubitFrame,
    /// Amplitude snapshot of what the receiver got.
    pub delivered: QubitFrame,
    /// Set when the receiver aborted on this frame.
    pub abort: Option<Abort>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TapLog {
    pub entries: Vec<TapEntry>,
    /// Abort raised before any frame was sent.
    pub preflight_abort: Option<Abort>,
}

impl TapLog {
    pub fn hop(&self, hop: u8) -> Option<&TapEntry> {
        self.entries.iter().find(|e| e.hop == hop)
    }
}

#[derive(Debug, Clone)]
pub struct Delivery {
    pub frame: QubitFrame,
    pub at: SimTime,
}

pub struct Channel {
    cfg: ChannelConfig,
    rng: SimRng,
    recorded: Option<TapLog>,
    tap: TapLog,
    eve_observations: Vec<bool>,
}

impl Channel {
    pub fn new(cfg: ChannelConfig) -> Self {
        Self {
            rng: crate::rng::stream(cfg.seed, crate::rng::labels::CHANNEL),
            cfg,
            recorded: None,
            tap: TapLog::default(),
            eve_observations: Vec::new(),
        }
    }

    /// A channel whose adversary can replay frames from `recorded`.
    pub fn with_recording(cfg: ChannelConfig, recorded: TapLog) -> Self {
        let mut ch = Self::new(cfg);
        ch.recorded = Some(recorded);
        ch
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn tap(&self) -> &TapLog {
        &self.tap
    }

    pub fn into_tap(self) -> TapLog {
        self.tap
    }

    /// Raw payload bits an intercept-resend Eve measured, in order.
    pub fn eve_observations(&self) -> &[bool] {
        &self.eve_observations
    }

    /// Attributes `abort` to the most recent hop, or to a pre-flight marker
    /// when nothing has been sent yet.
    pub fn mark_abort(&mut self, abort: Abort) {
        match self.tap.entries.last_mut() {
            Some(e) => e.abort = Some(abort),
            None => self.tap.preflight_abort = Some(abort),
        }
    }

    /// Noise first, then the adversary. Always yields exactly one delivery.
    pub fn transmit(&mut self, frame: QubitFrame, hop: u8, from: Role, to: Role, now: SimTime) -> Delivery {
        let sent = frame.clone();
        let mut delivered = frame;
        apply_flip_noise(&mut delivered, self.cfg.flip_noise_p, &mut self.rng);
        let mut at = now.plus(HOP_LATENCY_MS);

        match self.cfg.adversary {
            Adversary::InterceptResend if hop == 1 => {
                let (f, bits) = intercept_resend(&delivered, &mut self.rng);
                delivered = f;
                self.eve_observations.extend(bits);
            }
            Adversary::Replay(target) => {
                let wanted = match target {
                    ReplayTarget::Msg3 => 3,
                    ReplayTarget::Msg4 => 4,
                };
                if hop == wanted {
                    if let Some(old) = self.recorded.as_ref().and_then(|log| log.hop(hop)) {
                        delivered = old.sent.clone();
                    }
                }
            }
            Adversary::SuppressReplay { delay_ms } if hop == 4 => {
                at = at.plus(delay_ms);
            }
            _ => {}
        }

        self.tap.entries.push(TapEntry {
            hop,
            from,
            to,
            sent_at: now,
            delivered_at: at,
            sent,
            delivered: delivered.clone(),
            abort: None,
        });
        Delivery { frame: delivered, at }
    }
}

/// Independent Pauli-X on every qubit of every segment with probability `p`.
pub fn apply_flip_noise<R: Rng + ?Sized>(frame: &mut QubitFrame, p: f64, rng: &mut R) {
    if p == 0.0 {
        return;
    }
    let x = Unitary2::pauli_x();
    for q in frame.qubits_mut() {
        if rng.random::<f64>() < p {
            *q = quantum::apply(&x, q);
        }
    }
}

/// Measure every payload qubit in the computational basis and resend the
/// collapsed states. Header and auth segment pass through untouched.
pub fn intercept_resend<R: Rng + ?Sized>(frame: &QubitFrame, rng: &mut R) -> (QubitFrame, Vec<bool>) {
    let mut out = frame.clone();
    let mut bits = Vec::with_capacity(out.payload_qubits.len());
    for q in &mut out.payload_qubits {
        let m = measure(q, rng);
        bits.push(m.bit);
        *q = m.collapsed;
    }
    (out, bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberReport {
    pub compared: usize,
    pub mismatches: usize,
    pub rate: f64,
}

impl QberReport {
    /// Pools several reports into one.
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a QberReport>) -> QberReport {
        let (compared, mismatches) = reports
            .into_iter()
            .fold((0, 0), |(c, m), r| (c + r.compared, m + r.mismatches));
        QberReport {
            compared,
            mismatches,
            rate: if compared == 0 { 0.0 } else { mismatches as f64 / compared as f64 },
        }
    }
}

pub fn estimate_qber(sent: &BitString, received: &BitString) -> Result<QberReport, ChannelError> {
    if sent.len() != received.len() {
        return Err(ChannelError::LengthMismatch(sent.len(), received.len()));
    }
    let mismatches = sent
        .bits()
        .iter()
        .zip(received.bits())
        .filter(|(a, b)| a != b)
        .count();
    let compared = sent.len();
    Ok(QberReport {
        compared,
        mismatches,
        rate: if compared == 0 { 0.0 } else { mismatches as f64 / compared as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{deframe, frame, RedundancyFactor};
    use crate::quantum::QubitState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_frame() -> QubitFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let payload = (0..8).map(|_| quantum::random_state(&mut rng)).collect();
        frame(&"10110010".parse().unwrap(), payload, RedundancyFactor::THREE).unwrap()
    }

    #[test]
    fn honest_channel_is_identity() {
        let mut ch = Channel::new(ChannelConfig::honest(3));
        let f = sample_frame();
        let d = ch.transmit(f.clone(), 1, Role::Alice, Role::Bob, SimTime::EPOCH);
        assert_eq!(d.frame, f);
        assert_eq!(d.at, SimTime::EPOCH.plus(HOP_LATENCY_MS));
        assert_eq!(ch.tap().entries.len(), 1);
        assert_eq!(ch.tap().entries[0].delivered, f);
    }

    #[test]
    fn full_flip_noise_complements_auth() {
        let auth: BitString = "10110010".parse().unwrap();
        let mut f = frame(&auth, vec![], RedundancyFactor::THREE).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // flip only the auth segment so the header stays readable
        let mut auth_only = QubitFrame {
            header_qubits: vec![],
            auth_qubits: f.auth_qubits.clone(),
            payload_qubits: vec![],
        };
        apply_flip_noise(&mut auth_only, 1.0, &mut rng);
        f.auth_qubits = auth_only.auth_qubits;
        assert_eq!(deframe(&f, &mut rng).unwrap().0, auth.complement());
    }

    #[test]
    fn noise_config_validated() {
        assert!(ChannelConfig::new(Adversary::None, 1.5, 0).is_err());
        assert!(ChannelConfig::new(Adversary::None, -0.1, 0).is_err());
        assert!(ChannelConfig::new(Adversary::None, 1.0, 0).is_ok());
    }

    #[test]
    fn suppress_replay_delays_hop_four_only() {
        let cfg = ChannelConfig::new(Adversary::SuppressReplay { delay_ms: 9_000 }, 0.0, 4).unwrap();
        let mut ch = Channel::new(cfg);
        let d3 = ch.transmit(sample_frame(), 3, Role::Kdc, Role::Alice, SimTime::EPOCH);
        assert_eq!(d3.at, SimTime::EPOCH.plus(HOP_LATENCY_MS));
        let d4 = ch.transmit(sample_frame(), 4, Role::Alice, Role::Bob, SimTime::EPOCH);
        assert_eq!(d4.at, SimTime::EPOCH.plus(HOP_LATENCY_MS + 9_000));
    }

    #[test]
    fn intercept_on_basis_payload_is_invisible() {
        let payload = vec![QubitState::ONE, QubitState::ZERO, QubitState::ONE];
        let f = frame(&BitString::default(), payload, RedundancyFactor::THREE).unwrap();
        let (out, bits) = intercept_resend(&f, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(out, f);
        assert_eq!(bits, vec![true, false, true]);
    }

    #[test]
    fn intercept_collapses_payload_but_not_auth() {
        let f = sample_frame();
        let (out, bits) = intercept_resend(&f, &mut ChaCha8Rng::seed_from_u64(6));
        assert_eq!(out.auth_qubits, f.auth_qubits);
        assert_eq!(out.header_qubits, f.header_qubits);
        for (q, b) in out.payload_qubits.iter().zip(bits) {
            assert_eq!(*q, QubitState::basis(b));
        }
    }

    #[test]
    fn qber_examples() {
        let a: BitString = "101100111000".parse().unwrap();
        assert_eq!(estimate_qber(&a, &a).unwrap().rate, 0.0);
        assert_eq!(estimate_qber(&a, &a.complement()).unwrap().rate, 1.0);
        // hand-counted: positions 0, 5 and 11 differ
        let b: BitString = "001101111001".parse().unwrap();
        let r = estimate_qber(&a, &b).unwrap();
        assert_eq!((r.compared, r.mismatches), (12, 3));
        assert_eq!(r.rate, 0.25);
        assert_eq!(
            estimate_qber(&a, &"1".parse().unwrap()),
            Err(ChannelError::LengthMismatch(12, 1))
        );
    }
}
