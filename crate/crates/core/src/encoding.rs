//! Classical bits ⇄ qubits, photon redundancy and frame layout.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::{measure, QubitState};

/// Redundancy used for the frame header, independent of the frame's own `r`.
pub const HEADER_REDUNDANCY: usize = 3;
/// 32-bit auth length + 32-bit payload length + 8-bit redundancy.
pub const HEADER_BITS: usize = 72;
pub const HEADER_QUBITS: usize = HEADER_BITS * HEADER_REDUNDANCY;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("redundancy must be a positive odd number, got {0}")]
    InvalidRedundancy(usize),
    #[error("{count} qubits cannot be split into groups of {r}")]
    Framing { count: usize, r: usize },
    #[error("segment too long for a 32-bit length field ({0})")]
    LengthOverflow(usize),
    #[error("malformed frame header: {0}")]
    MalformedHeader(&'static str),
    #[error("{segment} segment has {actual} qubits, header says {expected}")]
    SegmentLength {
        segment: &'static str,
        expected: usize,
        actual: usize,
    },
}

/// Ordered classical bits. Byte conversions are MSB-first.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(
            bytes
                .iter()
                .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
                .collect(),
        )
    }

    /// Packs into bytes; a trailing partial byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
            })
            .collect()
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random()).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for BitString {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("invalid bit character {other:?}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString)
    }
}

/// Photons per classical bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct RedundancyFactor(usize);

impl RedundancyFactor {
    pub const ONE: RedundancyFactor = RedundancyFactor(1);
    pub const THREE: RedundancyFactor = RedundancyFactor(3);

    pub fn new(r: usize) -> Result<Self, EncodingError> {
        if r == 0 || r.is_multiple_of(2) {
            return Err(EncodingError::InvalidRedundancy(r));
        }
        Ok(Self(r))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for RedundancyFactor {
    type Error = EncodingError;

    fn try_from(r: usize) -> Result<Self, Self::Error> {
        Self::new(r)
    }
}

impl From<RedundancyFactor> for usize {
    fn from(r: RedundancyFactor) -> usize {
        r.0
    }
}

/// Q(·): every bit becomes `r` copies of its basis state.
pub fn encode_q(bits: &BitString, r: RedundancyFactor) -> Vec<QubitState> {
    bits.bits()
        .iter()
        .flat_map(|&b| std::iter::repeat_n(QubitState::basis(b), r.get()))
        .collect()
}

/// Q⁻¹(·): measure each group of `r` qubits and take the majority.
pub fn decode_q<R: Rng + ?Sized>(
    qubits: &[QubitState],
    r: RedundancyFactor,
    rng: &mut R,
) -> Result<BitString, EncodingError> {
    let r = r.get();
    if !qubits.len().is_multiple_of(r) {
        return Err(EncodingError::Framing {
            count: qubits.len(),
            r,
        });
    }
    Ok(BitString(
        qubits
            .chunks(r)
            .map(|group| {
                let ones = group.iter().filter(|q| measure(q, rng).bit).count();
                ones * 2 > r
            })
            .collect(),
    ))
}

/// One on-channel message: self-describing header, auth segment, payload segment.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitFrame {
    pub header_qubits: Vec<QubitState>,
    pub auth_qubits: Vec<QubitState>,
    pub payload_qubits: Vec<QubitState>,
}

impl QubitFrame {
    pub fn qubit_count(&self) -> usize {
        self.header_qubits.len() + self.auth_qubits.len() + self.payload_qubits.len()
    }

    /// Mutable access to every qubit, header first.
    pub fn qubits_mut(&mut self) -> impl Iterator<Item = &mut QubitState> {
        self.header_qubits
            .iter_mut()
            .chain(self.auth_qubits.iter_mut())
            .chain(self.payload_qubits.iter_mut())
    }
}

fn push_be(bits: &mut Vec<bool>, value: u64, width: usize) {
    bits.extend((0..width).rev().map(|i| (value >> i) & 1 == 1));
}

fn read_be(bits: &[bool]) -> u64 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
}

pub fn frame(
    auth_bits: &BitString,
    payload_qubits: Vec<QubitState>,
    r: RedundancyFactor,
) -> Result<QubitFrame, EncodingError> {
    let auth_len = u32::try_from(auth_bits.len())
        .map_err(|_| EncodingError::LengthOverflow(auth_bits.len()))?;
    let payload_len = u32::try_from(payload_qubits.len())
        .map_err(|_| EncodingError::LengthOverflow(payload_qubits.len()))?;
    let r_byte = u8::try_from(r.get()).map_err(|_| EncodingError::InvalidRedundancy(r.get()))?;

    let mut header = Vec::with_capacity(HEADER_BITS);
    push_be(&mut header, auth_len as u64, 32);
    push_be(&mut header, payload_len as u64, 32);
    push_be(&mut header, r_byte as u64, 8);

    Ok(QubitFrame {
        header_qubits: encode_q(
            &BitString(header),
            RedundancyFactor(HEADER_REDUNDANCY),
        ),
        auth_qubits: encode_q(auth_bits, r),
        payload_qubits,
    })
}

/// Decodes header and auth segment. Payload qubits are returned unmeasured.
pub fn deframe<R: Rng + ?Sized>(
    f: &QubitFrame,
    rng: &mut R,
) -> Result<(BitString, Vec<QubitState>), EncodingError> {
    if f.header_qubits.len() != HEADER_QUBITS {
        return Err(EncodingError::MalformedHeader("wrong header length"));
    }
    let header = decode_q(&f.header_qubits, RedundancyFactor(HEADER_REDUNDANCY), rng)?;
    let h = header.bits();
    let auth_len = read_be(&h[0..32]) as usize;
    let payload_len = read_be(&h[32..64]) as usize;
    let r = RedundancyFactor::new(read_be(&h[64..72]) as usize)
        .map_err(|_| EncodingError::MalformedHeader("invalid redundancy"))?;

    let expected_auth = auth_len
        .checked_mul(r.get())
        .ok_or(EncodingError::MalformedHeader("auth length overflow"))?;
    if f.auth_qubits.len() != expected_auth {
        return Err(EncodingError::SegmentLength {
            segment: "auth",
            expected: expected_auth,
            actual: f.auth_qubits.len(),
        });
    }
    if f.payload_qubits.len() != payload_len {
        return Err(EncodingError::SegmentLength {
            segment: "payload",
            expected: payload_len,
            actual: f.payload_qubits.len(),
        });
    }
    let auth = decode_q(&f.auth_qubits, r, rng)?;
    Ok((auth, f.payload_qubits.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{apply, Unitary2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0xF00D)
    }

    fn bits(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn encode_01101() {
        let q = encode_q(&bits("01101"), RedundancyFactor::ONE);
        let expected: Vec<_> = [false, true, true, false, true]
            .into_iter()
            .map(QubitState::basis)
            .collect();
        assert_eq!(q, expected);
    }

    #[test]
    fn encode_edge_cases() {
        assert!(encode_q(&BitString::default(), RedundancyFactor::THREE).is_empty());
        assert_eq!(encode_q(&bits("1"), RedundancyFactor::THREE), vec![QubitState::ONE; 3]);
    }

    #[test]
    fn redundancy_must_be_odd() {
        assert_eq!(RedundancyFactor::new(0), Err(EncodingError::InvalidRedundancy(0)));
        assert_eq!(RedundancyFactor::new(4), Err(EncodingError::InvalidRedundancy(4)));
        assert!(RedundancyFactor::new(5).is_ok());
    }

    #[test]
    fn decode_round_trip_any_odd_r() {
        let mut rng = rng();
        for r in [1, 3, 5, 7] {
            let r = RedundancyFactor::new(r).unwrap();
            let decoded = decode_q(&encode_q(&bits("01101"), r), r, &mut rng).unwrap();
            assert_eq!(decoded, bits("01101"));
        }
    }

    #[test]
    fn majority_vote() {
        let group = [QubitState::ONE, QubitState::ONE, QubitState::ZERO];
        assert_eq!(decode_q(&group, RedundancyFactor::THREE, &mut rng()).unwrap(), bits("1"));
    }

    #[test]
    fn majority_corrects_one_flip_per_group() {
        let mut rng = rng();
        let original = BitString::random(200, &mut rng);
        let mut q = encode_q(&original, RedundancyFactor::THREE);
        for (g, chunk) in q.chunks_mut(3).enumerate() {
            let i = g % 3;
            chunk[i] = apply(&Unitary2::pauli_x(), &chunk[i]);
        }
        assert_eq!(decode_q(&q, RedundancyFactor::THREE, &mut rng).unwrap(), original);
    }

    #[test]
    fn decode_rejects_partial_group() {
        let q = vec![QubitState::ZERO; 4];
        assert_eq!(
            decode_q(&q, RedundancyFactor::THREE, &mut rng()),
            Err(EncodingError::Framing { count: 4, r: 3 })
        );
    }

    #[test]
    fn header_only_frame() {
        let f = frame(&BitString::default(), vec![], RedundancyFactor::THREE).unwrap();
        assert_eq!(f.header_qubits.len(), HEADER_QUBITS);
        assert!(f.auth_qubits.is_empty() && f.payload_qubits.is_empty());
        let (auth, payload) = deframe(&f, &mut rng()).unwrap();
        assert!(auth.is_empty() && payload.is_empty());
    }

    #[test]
    fn tampered_header_is_rejected() {
        let f0 = frame(&bits("1011"), vec![QubitState::ZERO; 2], RedundancyFactor::THREE).unwrap();
        // flip all three copies of the auth-length LSB (header bit 31)
        let mut f = f0.clone();
        for q in &mut f.header_qubits[31 * 3..32 * 3] {
            *q = apply(&Unitary2::pauli_x(), q);
        }
        assert!(matches!(
            deframe(&f, &mut rng()),
            Err(EncodingError::SegmentLength { segment: "auth", .. })
        ));
        // a single copy flip is absorbed by the majority vote
        let mut g = f0.clone();
        g.header_qubits[31 * 3] = apply(&Unitary2::pauli_x(), &g.header_qubits[31 * 3]);
        assert!(deframe(&g, &mut rng()).is_ok());
        // truncated header
        let mut h = f0;
        h.header_qubits.pop();
        assert_eq!(
            deframe(&h, &mut rng()),
            Err(EncodingError::MalformedHeader("wrong header length"))
        );
    }

    #[test]
    fn flipped_auth_segment_decodes_to_complement() {
        let auth = bits("110100111");
        let mut f = frame(&auth, vec![], RedundancyFactor::THREE).unwrap();
        for q in &mut f.auth_qubits {
            *q = apply(&Unitary2::pauli_x(), q);
        }
        assert_eq!(deframe(&f, &mut rng()).unwrap().0, auth.complement());
    }

    #[test]
    fn deframe_preserves_payload_and_is_deterministic() {
        let mut r = rng();
        let payload: Vec<_> = (0..16).map(|_| crate::quantum::random_state(&mut r)).collect();
        let f = frame(&bits("0110"), payload.clone(), RedundancyFactor::THREE).unwrap();
        let a = deframe(&f, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = deframe(&f, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1, payload);
        assert_eq!(a.0, bits("0110"));
    }

    #[test]
    fn byte_conversion() {
        let b = BitString::from_bytes(&[0b1010_0001, 0xFF]);
        assert_eq!(b.to_string(), "1010000111111111");
        assert_eq!(b.to_bytes(), vec![0b1010_0001, 0xFF]);
        assert_eq!(bits("101").to_bytes(), vec![0b1010_0000]);
        assert!("10x".parse::<BitString>().is_err());
    }
}
