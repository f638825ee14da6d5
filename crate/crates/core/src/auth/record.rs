use thiserror::Error;

use super::{Nonce, PartyId, SessionKey, Timestamp};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("record truncated")]
    Truncated,
    #[error("unknown record tag {0:#04x}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes after record")]
    TrailingBytes(usize),
    #[error("zero party id")]
    ZeroPartyId,
}

/// The classical field groups carried by the protocol messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthRecord {
    Msg1 {
        id_a: PartyId,
        n_a: Nonce,
    },
    TicketReq {
        id_a: PartyId,
        n_a: Nonce,
        t_b: Timestamp,
    },
    PackageA {
        id_b: PartyId,
        n_a: Nonce,
        k_s: SessionKey,
        t_b: Timestamp,
    },
    TicketB {
        id_a: PartyId,
        k_s: SessionKey,
        t_b: Timestamp,
    },
    Confirm {
        n_b: Nonce,
    },
}

const TAG_MSG1: u8 = 0x01;
const TAG_TICKET_REQ: u8 = 0x02;
const TAG_PACKAGE_A: u8 = 0x03;
const TAG_TICKET_B: u8 = 0x04;
const TAG_CONFIRM: u8 = 0x05;

impl AuthRecord {
    /// Tag byte, then fields in declared order at fixed widths.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 8 + 16 + 32 + 8);
        match self {
            AuthRecord::Msg1 { id_a, n_a } => {
                out.push(TAG_MSG1);
                out.extend_from_slice(id_a.as_bytes());
                out.extend_from_slice(n_a.as_bytes());
            }
            AuthRecord::TicketReq { id_a, n_a, t_b } => {
                out.push(TAG_TICKET_REQ);
                out.extend_from_slice(id_a.as_bytes());
                out.extend_from_slice(n_a.as_bytes());
                out.extend_from_slice(&t_b.0.to_be_bytes());
            }
            AuthRecord::PackageA { id_b, n_a, k_s, t_b } => {
                out.push(TAG_PACKAGE_A);
                out.extend_from_slice(id_b.as_bytes());
                out.extend_from_slice(n_a.as_bytes());
                out.extend_from_slice(k_s.0.bytes());
                out.extend_from_slice(&t_b.0.to_be_bytes());
            }
            AuthRecord::TicketB { id_a, k_s, t_b } => {
                out.push(TAG_TICKET_B);
                out.extend_from_slice(id_a.as_bytes());
                out.extend_from_slice(k_s.0.bytes());
                out.extend_from_slice(&t_b.0.to_be_bytes());
            }
            AuthRecord::Confirm { n_b } => {
                out.push(TAG_CONFIRM);
                out.extend_from_slice(n_b.as_bytes());
            }
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, RecordError> {
        let mut r = Reader(bytes);
        let rec = match r.take::<1>()?[0] {
            TAG_MSG1 => AuthRecord::Msg1 {
                id_a: r.party()?,
                n_a: r.nonce()?,
            },
            TAG_TICKET_REQ => AuthRecord::TicketReq {
                id_a: r.party()?,
                n_a: r.nonce()?,
                t_b: r.timestamp()?,
            },
            TAG_PACKAGE_A => AuthRecord::PackageA {
                id_b: r.party()?,
                n_a: r.nonce()?,
                k_s: r.session_key()?,
                t_b: r.timestamp()?,
            },
            TAG_TICKET_B => AuthRecord::TicketB {
                id_a: r.party()?,
                k_s: r.session_key()?,
                t_b: r.timestamp()?,
            },
            TAG_CONFIRM => AuthRecord::Confirm { n_b: r.nonce()? },
            tag => return Err(RecordError::UnknownTag(tag)),
        };
        if !r.0.is_empty() {
            return Err(RecordError::TrailingBytes(r.0.len()));
        }
        Ok(rec)
    }
}

/// Cursor over a byte slice; also used by the message parsers.
pub(crate) struct Reader<'a>(pub(crate) &'a [u8]);

impl Reader<'_> {
    pub(crate) fn take<const N: usize>(&mut self) -> Result<[u8; N], RecordError> {
        if self.0.len() < N {
            return Err(RecordError::Truncated);
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("length checked"))
    }

    pub(crate) fn take_slice(&mut self, n: usize) -> Result<&[u8], RecordError> {
        if self.0.len() < n {
            return Err(RecordError::Truncated);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    pub(crate) fn party(&mut self) -> Result<PartyId, RecordError> {
        PartyId::new(self.take()?).ok_or(RecordError::ZeroPartyId)
    }

    pub(crate) fn nonce(&mut self) -> Result<Nonce, RecordError> {
        Ok(Nonce::from_bytes(self.take()?))
    }

    fn timestamp(&mut self) -> Result<Timestamp, RecordError> {
        Ok(Timestamp(u64::from_be_bytes(self.take()?)))
    }

    fn session_key(&mut self) -> Result<SessionKey, RecordError> {
        Ok(SessionKey::from_bytes(self.take()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    pub(crate) fn random_record<R: Rng>(rng: &mut R) -> AuthRecord {
        let id = PartyId::from_u64(rng.random_range(1..u64::MAX)).unwrap();
        let n = Nonce::random(rng);
        let t = Timestamp(rng.random());
        let k = SessionKey::from_bytes(rng.random());
        match rng.random_range(0..5) {
            0 => AuthRecord::Msg1 { id_a: id, n_a: n },
            1 => AuthRecord::TicketReq { id_a: id, n_a: n, t_b: t },
            2 => AuthRecord::PackageA { id_b: id, n_a: n, k_s: k, t_b: t },
            3 => AuthRecord::TicketB { id_a: id, k_s: k, t_b: t },
            _ => AuthRecord::Confirm { n_b: n },
        }
    }

    #[test]
    fn msg1_width() {
        let rec = AuthRecord::Msg1 {
            id_a: PartyId::from_u64(1).unwrap(),
            n_a: Nonce::from_bytes([7; 16]),
        };
        let bytes = rec.serialize();
        assert_eq!(bytes.len(), 25);
        assert_eq!(bytes[0], TAG_MSG1);
        assert_eq!(&bytes[1..9], &[0, 0, 0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn widths_of_other_records() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let rec = random_record(&mut rng);
            let expected = match rec {
                AuthRecord::Msg1 { .. } => 25,
                AuthRecord::TicketReq { .. } => 33,
                AuthRecord::PackageA { .. } => 65,
                AuthRecord::TicketB { .. } => 49,
                AuthRecord::Confirm { .. } => 17,
            };
            assert_eq!(rec.serialize().len(), expected);
        }
    }

    #[test]
    fn truncated_and_malformed() {
        let rec = AuthRecord::Confirm { n_b: Nonce::from_bytes([1; 16]) };
        let bytes = rec.serialize();
        assert_eq!(AuthRecord::parse(&bytes[..10]), Err(RecordError::Truncated));
        assert_eq!(AuthRecord::parse(&[]), Err(RecordError::Truncated));
        assert_eq!(AuthRecord::parse(&[0x09]), Err(RecordError::UnknownTag(9)));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(AuthRecord::parse(&long), Err(RecordError::TrailingBytes(1)));
        let zero_id = [vec![TAG_MSG1], vec![0; 24]].concat();
        assert_eq!(AuthRecord::parse(&zero_id), Err(RecordError::ZeroPartyId));
    }

    #[test]
    fn serialization_is_injective() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // 10⁴ random records are pairwise distinct with overwhelming
        // probability, so every encoding must land in its own bucket
        let seen: HashSet<Vec<u8>> = (0..10_000)
            .map(|_| random_record(&mut rng).serialize())
            .collect();
        assert_eq!(seen.len(), 10_000);
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(seed in any::<u64>()) {
            let rec = random_record(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(AuthRecord::parse(&rec.serialize()).unwrap(), rec);
        }
    }
}
