//! Builders and validators for the classical part of messages 1–4.
//!
//! ```text
//! 1. A → B    ID_A ∥ N_a
//! 2. B → KDC  ID_B ∥ N_b ∥ E_Kb[ID_A ∥ N_a ∥ T_b]
//! 3. KDC → A  E_Ka[ID_B ∥ N_a ∥ K_s ∥ T_b] ∥ E_Kb[ID_A ∥ K_s ∥ T_b] ∥ N_b
//! 4. A → B    E_Kb[ID_A ∥ K_s ∥ T_b] ∥ E_Ks[N_b]
//! ```

use rand::RngCore;

use super::cipher::{open, seal, SealedRecord};
use super::record::{AuthRecord, Reader, RecordError};
use super::{
    BobPending, KeyTable, MasterKey, Nonce, PartyId, ReplayCache, SessionKey, Timestamp,
};
use crate::abort::AbortReason;
use crate::encoding::BitString;

fn bits_to_bytes(bits: &BitString) -> Result<Vec<u8>, AbortReason> {
    if !bits.len().is_multiple_of(8) {
        return Err(AbortReason::BadFrame);
    }
    Ok(bits.to_bytes())
}

fn finish(r: Reader<'_>) -> Result<(), RecordError> {
    if r.0.is_empty() {
        Ok(())
    } else {
        Err(RecordError::TrailingBytes(r.0.len()))
    }
}

pub fn build_msg1(id_a: PartyId, n_a: Nonce) -> BitString {
    BitString::from_bytes(&AuthRecord::Msg1 { id_a, n_a }.serialize())
}

pub fn parse_msg1(bits: &BitString) -> Result<(PartyId, Nonce), AbortReason> {
    match AuthRecord::parse(&bits_to_bytes(bits)?) {
        Ok(AuthRecord::Msg1 { id_a, n_a }) => Ok((id_a, n_a)),
        _ => Err(AbortReason::BadFrame),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg2 {
    pub id_b: PartyId,
    pub n_b: Nonce,
    pub ticket_req: SealedRecord,
}

impl Msg2 {
    pub fn to_bits(&self) -> BitString {
        let mut out = self.id_b.as_bytes().to_vec();
        out.extend_from_slice(self.n_b.as_bytes());
        out.extend(self.ticket_req.to_bytes());
        BitString::from_bytes(&out)
    }

    pub fn from_bits(bits: &BitString) -> Result<Self, AbortReason> {
        let bytes = bits_to_bytes(bits)?;
        let parse = || -> Result<Self, RecordError> {
            let mut r = Reader(&bytes);
            let m = Msg2 {
                id_b: r.party()?,
                n_b: r.nonce()?,
                ticket_req: SealedRecord::read(&mut r)?,
            };
            finish(r)?;
            Ok(m)
        };
        parse().map_err(|_| AbortReason::BadFrame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg3 {
    pub package_a: SealedRecord,
    pub ticket_b: SealedRecord,
    pub n_b: Nonce,
}

impl Msg3 {
    pub fn to_bits(&self) -> BitString {
        let mut out = self.package_a.to_bytes();
        out.extend(self.ticket_b.to_bytes());
        out.extend_from_slice(self.n_b.as_bytes());
        BitString::from_bytes(&out)
    }

    pub fn from_bits(bits: &BitString) -> Result<Self, AbortReason> {
        let bytes = bits_to_bytes(bits)?;
        let parse = || -> Result<Self, RecordError> {
            let mut r = Reader(&bytes);
            let m = Msg3 {
                package_a: SealedRecord::read(&mut r)?,
                ticket_b: SealedRecord::read(&mut r)?,
                n_b: r.nonce()?,
            };
            finish(r)?;
            Ok(m)
        };
        parse().map_err(|_| AbortReason::BadFrame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg4 {
    pub ticket_b: SealedRecord,
    pub confirm: SealedRecord,
}

impl Msg4 {
    pub fn to_bits(&self) -> BitString {
        let mut out = self.ticket_b.to_bytes();
        out.extend(self.confirm.to_bytes());
        BitString::from_bytes(&out)
    }

    pub fn from_bits(bits: &BitString) -> Result<Self, AbortReason> {
        let bytes = bits_to_bytes(bits)?;
        let parse = || -> Result<Self, RecordError> {
            let mut r = Reader(&bytes);
            let m = Msg4 {
                ticket_b: SealedRecord::read(&mut r)?,
                confirm: SealedRecord::read(&mut r)?,
            };
            finish(r)?;
            Ok(m)
        };
        parse().map_err(|_| AbortReason::BadFrame)
    }
}

/// `t_b` is Bob's clock reading at build time.
#[allow(clippy::too_many_arguments)]
pub fn build_msg2<R: RngCore>(
    id_b: PartyId,
    n_b: Nonce,
    k_b: &MasterKey,
    id_a: PartyId,
    n_a: Nonce,
    t_b: Timestamp,
    rng: &mut R,
) -> BitString {
    let ticket_req = seal(k_b, &AuthRecord::TicketReq { id_a, n_a, t_b }, rng);
    Msg2 { id_b, n_b, ticket_req }.to_bits()
}

/// Opens the ticket request, mints a session key and builds msg3's auth part.
pub fn kdc_process_msg2<R: RngCore>(
    msg2_bits: &BitString,
    key_table: &KeyTable,
    rng: &mut R,
) -> Result<(BitString, SessionKey), AbortReason> {
    let msg2 = Msg2::from_bits(msg2_bits)?;
    let k_b = key_table.get(&msg2.id_b).ok_or(AbortReason::UnknownParty)?;
    let (id_a, n_a, t_b) = match open(k_b, &msg2.ticket_req) {
        Ok(AuthRecord::TicketReq { id_a, n_a, t_b }) => (id_a, n_a, t_b),
        _ => return Err(AbortReason::BadTicketReq),
    };
    let k_a = key_table.get(&id_a).ok_or(AbortReason::UnknownParty)?;

    let k_s = SessionKey::generate(rng);
    let package_a = seal(
        k_a,
        &AuthRecord::PackageA {
            id_b: msg2.id_b,
            n_a,
            k_s: k_s.clone(),
            t_b,
        },
        rng,
    );
    let ticket_b = seal(
        k_b,
        &AuthRecord::TicketB {
            id_a,
            k_s: k_s.clone(),
            t_b,
        },
        rng,
    );
    let msg3 = Msg3 {
        package_a,
        ticket_b,
        n_b: msg2.n_b,
    };
    Ok((msg3.to_bits(), k_s))
}

#[derive(Debug, Clone)]
pub struct Msg3Accepted {
    /// Auth part of msg4: the forwarded ticket plus `E_Ks[N_b]`.
    pub msg4: BitString,
    pub session_key: SessionKey,
    pub n_b: Nonce,
}

pub fn alice_process_msg3<R: RngCore>(
    msg3_bits: &BitString,
    k_a: &MasterKey,
    expected_n_a: Nonce,
    expected_peer: PartyId,
    rng: &mut R,
) -> Result<Msg3Accepted, AbortReason> {
    let msg3 = Msg3::from_bits(msg3_bits)?;
    let (id_b, n_a, k_s) = match open(k_a, &msg3.package_a) {
        Ok(AuthRecord::PackageA { id_b, n_a, k_s, .. }) => (id_b, n_a, k_s),
        _ => return Err(AbortReason::BadPackage),
    };
    if n_a != expected_n_a {
        return Err(AbortReason::ReplayOrForgery);
    }
    if id_b != expected_peer {
        return Err(AbortReason::PeerMismatch);
    }
    let confirm = seal(&k_s, &AuthRecord::Confirm { n_b: msg3.n_b }, rng);
    let msg4 = Msg4 {
        ticket_b: msg3.ticket_b,
        confirm,
    };
    Ok(Msg3Accepted {
        msg4: msg4.to_bits(),
        session_key: k_s,
        n_b: msg3.n_b,
    })
}

/// Validates msg4 against Bob's own clock reading `now_b` only.
pub fn bob_process_msg4(
    msg4_bits: &BitString,
    k_b: &MasterKey,
    now_b: Timestamp,
    window_ms: u64,
    pending: &BobPending,
    seen_nonces: &mut ReplayCache,
) -> Result<SessionKey, AbortReason> {
    let msg4 = Msg4::from_bits(msg4_bits)?;
    let (id_a, k_s, t_b) = match open(k_b, &msg4.ticket_b) {
        Ok(AuthRecord::TicketB { id_a, k_s, t_b }) => (id_a, k_s, t_b),
        _ => return Err(AbortReason::BadTicket),
    };
    if id_a != pending.id_a {
        return Err(AbortReason::BadTicket);
    }
    if now_b.abs_diff(t_b) > window_ms {
        return Err(AbortReason::StaleTimestamp);
    }
    let n_b = match open(&k_s, &msg4.confirm) {
        Ok(AuthRecord::Confirm { n_b }) => n_b,
        _ => return Err(AbortReason::BadConfirm),
    };
    if n_b != pending.n_b || seen_nonces.is_consumed(&n_b) || t_b != pending.t_b {
        return Err(AbortReason::Replay);
    }
    seen_nonces.consume(n_b, k_s.clone());
    Ok(k_s)
}
