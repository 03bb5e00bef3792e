//! Collision-resistant digests over canonical encodings. Digests bind sealed
//! metadata to the exact schedule it was produced for.

use std::fmt;

use sha2::{Digest as _, Sha256};

use crate::codec::{CodecError, Decoder, Encoder};
use crate::model::schedule::PulseSchedule;

pub const DIGEST_LEN: usize = 32;

/// SHA-256 digest of a canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.put_raw(&self.0)
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let raw = d.raw(DIGEST_LEN)?;
        Ok(Self(raw.try_into().unwrap()))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({self})")
    }
}

const SCHEDULE_DOMAIN: &[u8] = b"qtee.schedule.v1";
const CIRCUIT_DOMAIN: &[u8] = b"qtee.circuit.v1";

/// Digest of a pulse schedule's canonical encoding, domain-separated so
/// schedule digests can never collide with other hashed encodings.
pub fn schedule_digest(schedule: &PulseSchedule) -> Digest {
    let mut h = Sha256::new();
    h.update(SCHEDULE_DOMAIN);
    h.update(schedule.to_bytes());
    Digest(h.finalize().into())
}

/// Digest of a circuit's canonical encoding; clients keep it in their secret
/// records to identify which program a recovery belongs to.
pub fn circuit_digest(circuit: &crate::model::Circuit) -> Digest {
    let mut h = Sha256::new();
    h.update(CIRCUIT_DOMAIN);
    h.update(circuit.to_bytes());
    Digest(h.finalize().into())
}
