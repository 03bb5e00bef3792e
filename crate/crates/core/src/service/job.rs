//! Job records: the unit the scheduling service stores, queues, and
//! dispatches. A job binds an obfuscated schedule to its sealed metadata and
//! to the one backend it may execute on.

use std::fmt;

use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::envelope::SealedBlob;
use crate::model::{BitString, PulseSchedule};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(String);

impl JobId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lifecycle states. The only legal walk is
/// Received → Queued → Running → (Done | Failed); failures are terminal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JobState {
    Received,
    Queued,
    Running,
    Done,
    Failed(String),
}

impl JobState {
    pub fn label(&self) -> &'static str {
        match self {
            JobState::Received => "received",
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed(_) => "failed",
        }
    }

    pub fn can_transition_to(&self, next: &JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Received, JobState::Queued)
                | (JobState::Queued, JobState::Running)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed(_))
        )
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        match self {
            JobState::Received => e.put_u8(0),
            JobState::Queued => e.put_u8(1),
            JobState::Running => e.put_u8(2),
            JobState::Done => e.put_u8(3),
            JobState::Failed(reason) => {
                e.put_u8(4);
                e.put_str(reason);
            }
        }
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let at = d.pos();
        match d.u8()? {
            0 => Ok(JobState::Received),
            1 => Ok(JobState::Queued),
            2 => Ok(JobState::Running),
            3 => Ok(JobState::Done),
            4 => Ok(JobState::Failed(d.str()?)),
            tag => Err(CodecError::InvalidTag {
                what: "job state",
                tag,
                at,
            }),
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JobState::Failed(reason) => write!(f, "failed: {reason}"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("illegal job state transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: String,
    pub to: String,
}

/// Flipped shot outputs together with the sealed flip masks. Stored and
/// returned only as a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobResults {
    pub bitstrings: Vec<BitString>,
    pub sealed_output_metadata: SealedBlob,
}

impl JobResults {
    fn encode_into(&self, e: &mut Encoder) {
        e.put_u32(self.bitstrings.len() as u32);
        for b in &self.bitstrings {
            b.encode_into(e);
        }
        self.sealed_output_metadata.encode_into(e);
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let n = d.u32()? as usize;
        let mut bitstrings = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            bitstrings.push(BitString::decode_from(d)?);
        }
        Ok(Self {
            bitstrings,
            sealed_output_metadata: SealedBlob::decode_from(d)?,
        })
    }
}

/// One stored job. The schedule/metadata pair is a single record by
/// construction — no API ever surfaces one half without the other.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub job_id: JobId,
    pub client_id: String,
    pub backend_id: String,
    pub idempotency_token: String,
    pub obf_schedule: PulseSchedule,
    pub sealed_metadata: SealedBlob,
    pub client_ephemeral_public: Vec<u8>,
    pub shots: u32,
    pub state: JobState,
    pub submitted_at: u64,
    pub results: Option<JobResults>,
}

impl Job {
    /// Applies a state transition, enforcing the lifecycle walk.
    pub fn transition(&mut self, next: JobState) -> Result<(), IllegalTransition> {
        if !self.state.can_transition_to(&next) {
            return Err(IllegalTransition {
                from: self.state.to_string(),
                to: next.to_string(),
            });
        }
        self.state = next;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode_into(&mut e);
        e.into_bytes()
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.put_str(self.job_id.as_str());
        e.put_str(&self.client_id);
        e.put_str(&self.backend_id);
        e.put_str(&self.idempotency_token);
        self.obf_schedule.encode_into(e);
        self.sealed_metadata.encode_into(e);
        e.put_bytes(&self.client_ephemeral_public);
        e.put_u32(self.shots);
        self.state.encode_into(e);
        e.put_u64(self.submitted_at);
        match &self.results {
            None => e.put_u8(0),
            Some(r) => {
                e.put_u8(1);
                r.encode_into(e);
            }
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let job = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(job)
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let job_id = JobId::new(d.str()?);
        let client_id = d.str()?;
        let backend_id = d.str()?;
        let idempotency_token = d.str()?;
        let obf_schedule = PulseSchedule::decode_from(d)?;
        let sealed_metadata = SealedBlob::decode_from(d)?;
        let client_ephemeral_public = d.byte_vec()?;
        let shots = d.u32()?;
        let state = JobState::decode_from(d)?;
        let submitted_at = d.u64()?;
        let at = d.pos();
        let results = match d.u8()? {
            0 => None,
            1 => Some(JobResults::decode_from(d)?),
            _ => {
                return Err(CodecError::InvalidValue {
                    what: "results flag",
                    at,
                })
            }
        };
        Ok(Self {
            job_id,
            client_id,
            backend_id,
            idempotency_token,
            obf_schedule,
            sealed_metadata,
            client_ephemeral_public,
            shots,
            state,
            submitted_at,
            results,
        })
    }
}
