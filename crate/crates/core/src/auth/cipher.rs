//! E_K[·]: authenticated symmetric sealing of [`AuthRecord`]s.
//!
//! [`ToyCipher`] is a keyed-sponge keystream XOR with an encrypt-then-MAC tag.
//! It is deterministic under a seeded rng and has no cryptographic strength
//! claims; swap in a real AEAD behind [`Cipher`] for anything but simulation.

use rand::RngCore;
use thiserror::Error;

use super::record::{AuthRecord, Reader, RecordError};
use super::{KeyMaterial, SealingKey};

pub const IV_LEN: usize = 16;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpenError {
    #[error("integrity tag mismatch")]
    Integrity,
    #[error("sealed body decrypted to a malformed record: {0}")]
    Malformed(#[from] RecordError),
}

/// Ciphertext with its IV and integrity tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedRecord {
    pub iv: [u8; IV_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl SealedRecord {
    /// `iv ∥ len:u16 ∥ ciphertext ∥ tag`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IV_LEN + 2 + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.iv);
        out.extend_from_slice(&(self.ciphertext.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, RecordError> {
        let iv = r.take::<IV_LEN>()?;
        let len = u16::from_be_bytes(r.take::<2>()?) as usize;
        let ciphertext = r.take_slice(len)?.to_vec();
        let tag = r.take::<TAG_LEN>()?;
        Ok(Self { iv, ciphertext, tag })
    }
}

pub trait Cipher {
    fn seal_bytes(&self, key: &KeyMaterial, plaintext: &[u8], rng: &mut dyn RngCore) -> SealedRecord;
    fn open_bytes(&self, key: &KeyMaterial, sealed: &SealedRecord) -> Result<Vec<u8>, OpenError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ToyCipher;

const DOMAIN_STREAM: u64 = 0x6b65_7973_7472_6561;
const DOMAIN_TAG: u64 = 0x696e_7465_6772_6974;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Four-lane keyed sponge over [`mix64`].
struct Sponge([u64; 4]);

impl Sponge {
    fn keyed(key: &KeyMaterial, domain: u64) -> Self {
        let k = key.bytes();
        let mut s = [0u64; 4];
        for (i, lane) in s.iter_mut().enumerate() {
            let word = u64::from_le_bytes(k[8 * i..8 * i + 8].try_into().unwrap());
            *lane = word ^ mix64(domain.wrapping_add(i as u64));
        }
        let mut sp = Sponge(s);
        sp.permute();
        sp
    }

    fn permute(&mut self) {
        for round in 0..4u64 {
            for i in 0..4 {
                let next = self.0[(i + 1) % 4].rotate_left(17 + 8 * i as u32);
                self.0[i] = mix64(self.0[i] ^ next ^ round.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            }
        }
    }

    fn absorb(&mut self, data: &[u8]) {
        for chunk in data.chunks(16) {
            let mut block = [0u8; 16];
            block[..chunk.len()].copy_from_slice(chunk);
            self.0[0] ^= u64::from_le_bytes(block[..8].try_into().unwrap());
            self.0[1] ^= u64::from_le_bytes(block[8..].try_into().unwrap());
            self.permute();
        }
        self.0[2] ^= data.len() as u64;
        self.permute();
    }

    fn squeeze(&mut self, out: &mut [u8]) {
        for chunk in out.chunks_mut(16) {
            let mut block = [0u8; 16];
            block[..8].copy_from_slice(&self.0[0].to_le_bytes());
            block[8..].copy_from_slice(&self.0[1].to_le_bytes());
            chunk.copy_from_slice(&block[..chunk.len()]);
            self.permute();
        }
    }
}

impl ToyCipher {
    fn keystream(key: &KeyMaterial, iv: &[u8; IV_LEN], len: usize) -> Vec<u8> {
        let mut sp = Sponge::keyed(key, DOMAIN_STREAM);
        sp.absorb(iv);
        let mut out = vec![0u8; len];
        sp.squeeze(&mut out);
        out
    }

    fn tag(key: &KeyMaterial, iv: &[u8; IV_LEN], ciphertext: &[u8]) -> [u8; TAG_LEN] {
        let mut sp = Sponge::keyed(key, DOMAIN_TAG);
        sp.absorb(iv);
        sp.absorb(ciphertext);
        let mut out = [0u8; TAG_LEN];
        sp.squeeze(&mut out);
        out
    }
}

impl Cipher for ToyCipher {
    fn seal_bytes(&self, key: &KeyMaterial, plaintext: &[u8], rng: &mut dyn RngCore) -> SealedRecord {
        let mut iv = [0u8; IV_LEN];
        rng.fill_bytes(&mut iv);
        let ciphertext: Vec<u8> = plaintext
            .iter()
            .zip(Self::keystream(key, &iv, plaintext.len()))
            .map(|(p, k)| p ^ k)
            .collect();
        let tag = Self::tag(key, &iv, &ciphertext);
        SealedRecord { iv, ciphertext, tag }
    }

    fn open_bytes(&self, key: &KeyMaterial, sealed: &SealedRecord) -> Result<Vec<u8>, OpenError> {
        let expected = Self::tag(key, &sealed.iv, &sealed.ciphertext);
        let diff = expected
            .iter()
            .zip(&sealed.tag)
            .fold(0u8, |acc, (a, b)| acc | (a ^ b));
        if diff != 0 {
            return Err(OpenError::Integrity);
        }
        Ok(sealed
            .ciphertext
            .iter()
            .zip(Self::keystream(key, &sealed.iv, sealed.ciphertext.len()))
            .map(|(c, k)| c ^ k)
            .collect())
    }
}

pub fn seal<K: SealingKey + ?Sized, R: RngCore>(key: &K, rec: &AuthRecord, rng: &mut R) -> SealedRecord {
    ToyCipher.seal_bytes(key.material(), &rec.serialize(), rng)
}

pub fn open<K: SealingKey + ?Sized>(key: &K, sealed: &SealedRecord) -> Result<AuthRecord, OpenError> {
    let plain = ToyCipher.open_bytes(key.material(), sealed)?;
    Ok(AuthRecord::parse(&plain)?)
}
