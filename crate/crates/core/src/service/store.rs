//! Durable job store: an append-only record log with periodic full-state
//! snapshots.
//!
//! Each record is `[u32 length][u8 type tag][body][u32 crc32]`, length
//! covering tag plus body, checksum over the same. Appends are single
//! writes followed by a data sync, so a crash can only tear the final
//! record. Recovery replays committed records, truncates a torn tail, and
//! demotes Running jobs back to Queued with an explicit requeue record
//! (re-execution is safe: execution is idempotent from the stored pair).

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::envelope::SealedBlob;
use crate::model::{BitString, PulseSchedule};
use crate::service::job::{IllegalTransition, Job, JobId, JobResults, JobState};

/// A full-state snapshot is appended after this many records.
pub const SNAPSHOT_INTERVAL: u64 = 256;

/// Idempotency tokens are remembered for this many submissions.
pub const IDEMPOTENCY_RETENTION: usize = 10_000;

const RECORD_JOB_SUBMITTED: u8 = 1;
const RECORD_STATE_CHANGED: u8 = 2;
const RECORD_RESULTS: u8 = 3;
const RECORD_SNAPSHOT: u8 = 4;
const RECORD_REQUEUED: u8 = 5;

const MAX_RECORD_LEN: u32 = 1 << 26;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupted committed record at offset {offset}: {reason}")]
    CorruptRecord { offset: u64, reason: String },
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error(transparent)]
    IllegalTransition(#[from] IllegalTransition),
}

/// Fields of a new submission; the store assigns identity, sequence, and
/// state.
#[derive(Debug, Clone)]
pub struct NewJob {
    pub client_id: String,
    pub backend_id: String,
    pub idempotency_token: String,
    pub obf_schedule: PulseSchedule,
    pub sealed_metadata: SealedBlob,
    pub client_ephemeral_public: Vec<u8>,
    pub shots: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitOutcome {
    /// Fresh job, durably queued.
    Accepted(JobId),
    /// The idempotency token was seen before; this is the original job.
    Duplicate(JobId),
}

impl SubmitOutcome {
    pub fn job_id(&self) -> &JobId {
        match self {
            SubmitOutcome::Accepted(id) | SubmitOutcome::Duplicate(id) => id,
        }
    }
}

enum LogRecord {
    JobSubmitted(Job),
    StateChanged { job_id: JobId, state: JobState },
    Results { job_id: JobId, results: JobResults },
    Requeued { job_id: JobId },
    Snapshot(Snapshot),
}

impl LogRecord {
    fn tag(&self) -> u8 {
        match self {
            LogRecord::JobSubmitted(_) => RECORD_JOB_SUBMITTED,
            LogRecord::StateChanged { .. } => RECORD_STATE_CHANGED,
            LogRecord::Results { .. } => RECORD_RESULTS,
            LogRecord::Requeued { .. } => RECORD_REQUEUED,
            LogRecord::Snapshot(_) => RECORD_SNAPSHOT,
        }
    }

    fn encode_body(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        match self {
            LogRecord::JobSubmitted(job) => job.encode_into(&mut e),
            LogRecord::StateChanged { job_id, state } => {
                e.put_str(job_id.as_str());
                state.encode_into(&mut e);
            }
            LogRecord::Results { job_id, results } => {
                e.put_str(job_id.as_str());
                e.put_u32(results.bitstrings.len() as u32);
                for b in &results.bitstrings {
                    b.encode_into(&mut e);
                }
                results.sealed_output_metadata.encode_into(&mut e);
            }
            LogRecord::Requeued { job_id } => {
                e.put_str(job_id.as_str());
            }
            LogRecord::Snapshot(snapshot) => snapshot.encode_into(&mut e),
        }
        e.into_bytes()
    }
}

struct Snapshot {
    next_seq: u64,
    jobs: Vec<Job>,
    idempotency: Vec<(String, JobId)>,
}

impl Snapshot {
    fn encode_into(&self, e: &mut Encoder) {
        e.put_u64(self.next_seq);
        e.put_u32(self.jobs.len() as u32);
        for job in &self.jobs {
            job.encode_into(e);
        }
        e.put_u32(self.idempotency.len() as u32);
        for (token, job_id) in &self.idempotency {
            e.put_str(token);
            e.put_str(job_id.as_str());
        }
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let next_seq = d.u64()?;
        let n = d.u32()? as usize;
        let mut jobs = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            jobs.push(Job::decode_from(d)?);
        }
        let m = d.u32()? as usize;
        let mut idempotency = Vec::with_capacity(m.min(1 << 16));
        for _ in 0..m {
            let token = d.str()?;
            let job_id = JobId::new(d.str()?);
            idempotency.push((token, job_id));
        }
        Ok(Self {
            next_seq,
            jobs,
            idempotency,
        })
    }
}

#[derive(Debug, Default)]
struct IdempotencyWindow {
    order: VecDeque<String>,
    by_token: HashMap<String, JobId>,
}

impl IdempotencyWindow {
    fn lookup(&self, token: &str) -> Option<&JobId> {
        self.by_token.get(token)
    }

    fn remember(&mut self, token: String, job_id: JobId) {
        if self.by_token.insert(token.clone(), job_id).is_some() {
            return;
        }
        self.order.push_back(token);
        while self.order.len() > IDEMPOTENCY_RETENTION {
            if let Some(evicted) = self.order.pop_front() {
                self.by_token.remove(&evicted);
            }
        }
    }

    fn entries(&self) -> Vec<(String, JobId)> {
        self.order
            .iter()
            .filter_map(|t| self.by_token.get(t).map(|id| (t.clone(), id.clone())))
            .collect()
    }
}

/// Durable map of jobs plus one FIFO queue per backend, ordered by
/// submission sequence.
#[derive(Debug)]
pub struct JobStore {
    file: File,
    path: PathBuf,
    jobs: BTreeMap<JobId, Job>,
    queues: BTreeMap<String, VecDeque<JobId>>,
    next_seq: u64,
    idempotency: IdempotencyWindow,
    records_since_snapshot: u64,
}

impl JobStore {
    /// Opens a store, creating the log if absent and recovering committed
    /// state if present. A torn final record is discarded and the file is
    /// truncated back to the last committed boundary; any job recorded as
    /// Running is durably requeued.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)?;
        let mut data = Vec::new();
        file.read_to_end(&mut data)?;

        let mut store = Self {
            file,
            path,
            jobs: BTreeMap::new(),
            queues: BTreeMap::new(),
            next_seq: 0,
            idempotency: IdempotencyWindow::default(),
            records_since_snapshot: 0,
        };
        let committed = store.replay(&data)?;
        if committed < data.len() as u64 {
            store.file.set_len(committed)?;
            store.file.sync_data()?;
        }
        store.file.seek(SeekFrom::Start(committed))?;

        // demote anything that was mid-execution; the stored pair makes
        // re-execution idempotent
        let running: Vec<JobId> = store
            .jobs
            .values()
            .filter(|j| j.state == JobState::Running)
            .map(|j| j.job_id.clone())
            .collect();
        for job_id in running {
            store.append(&LogRecord::Requeued {
                job_id: job_id.clone(),
            })?;
            store
                .jobs
                .get_mut(&job_id)
                .expect("job listed above")
                .state = JobState::Queued;
        }
        store.rebuild_queues();
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Replays committed records, returning the byte offset of the committed
    /// tail. A record whose checksum fails at the exact end of file is a torn
    /// write and is discarded; anywhere else it is corruption.
    fn replay(&mut self, data: &[u8]) -> Result<u64, StoreError> {
        let mut pos: usize = 0;
        loop {
            if pos + 4 > data.len() {
                break; // torn or absent length prefix
            }
            let len = u32::from_be_bytes(data[pos..pos + 4].try_into().unwrap());
            if len == 0 || len > MAX_RECORD_LEN {
                return Err(StoreError::CorruptRecord {
                    offset: pos as u64,
                    reason: format!("implausible record length {len}"),
                });
            }
            let end = pos + 4 + len as usize + 4;
            if end > data.len() {
                break; // torn record body
            }
            let payload = &data[pos + 4..pos + 4 + len as usize];
            let stored_crc =
                u32::from_be_bytes(data[pos + 4 + len as usize..end].try_into().unwrap());
            if crc32fast::hash(payload) != stored_crc {
                if end == data.len() {
                    break; // torn final record
                }
                return Err(StoreError::CorruptRecord {
                    offset: pos as u64,
                    reason: "checksum mismatch".into(),
                });
            }
            self.apply(payload).map_err(|e| StoreError::CorruptRecord {
                offset: pos as u64,
                reason: e.to_string(),
            })?;
            pos = end;
        }
        Ok(pos as u64)
    }

    fn apply(&mut self, payload: &[u8]) -> Result<(), Box<dyn std::error::Error>> {
        let mut d = Decoder::new(payload);
        match d.u8()? {
            RECORD_JOB_SUBMITTED => {
                let job = Job::decode_from(&mut d)?;
                d.finish()?;
                self.next_seq = self.next_seq.max(job.submitted_at + 1);
                self.idempotency
                    .remember(job.idempotency_token.clone(), job.job_id.clone());
                self.jobs.insert(job.job_id.clone(), job);
            }
            RECORD_STATE_CHANGED => {
                let job_id = JobId::new(d.str()?);
                let state = JobState::decode_from(&mut d)?;
                d.finish()?;
                let job = self
                    .jobs
                    .get_mut(&job_id)
                    .ok_or_else(|| format!("state change for unknown job {job_id}"))?;
                job.transition(state)?;
            }
            RECORD_RESULTS => {
                let job_id = JobId::new(d.str()?);
                let n = d.u32()? as usize;
                let mut bitstrings = Vec::with_capacity(n.min(1 << 20));
                for _ in 0..n {
                    bitstrings.push(BitString::decode_from(&mut d)?);
                }
                let sealed_output_metadata = SealedBlob::decode_from(&mut d)?;
                d.finish()?;
                let job = self
                    .jobs
                    .get_mut(&job_id)
                    .ok_or_else(|| format!("results for unknown job {job_id}"))?;
                job.transition(JobState::Done)?;
                job.results = Some(JobResults {
                    bitstrings,
                    sealed_output_metadata,
                });
            }
            RECORD_REQUEUED => {
                let job_id = JobId::new(d.str()?);
                d.finish()?;
                let job = self
                    .jobs
                    .get_mut(&job_id)
                    .ok_or_else(|| format!("requeue of unknown job {job_id}"))?;
                if job.state != JobState::Running {
                    return Err(format!("requeue of non-running job {job_id}").into());
                }
                job.state = JobState::Queued;
            }
            RECORD_SNAPSHOT => {
                let snapshot = Snapshot::decode_from(&mut d)?;
                d.finish()?;
                self.jobs = snapshot
                    .jobs
                    .into_iter()
                    .map(|j| (j.job_id.clone(), j))
                    .collect();
                self.next_seq = snapshot.next_seq;
                self.idempotency = IdempotencyWindow::default();
                for (token, job_id) in snapshot.idempotency {
                    self.idempotency.remember(token, job_id);
                }
            }
            tag => return Err(format!("unknown record tag {tag}").into()),
        }
        Ok(())
    }

    fn rebuild_queues(&mut self) {
        self.queues.clear();
        let mut queued: Vec<&Job> = self
            .jobs
            .values()
            .filter(|j| j.state == JobState::Queued)
            .collect();
        queued.sort_by_key(|j| j.submitted_at);
        for job in queued {
            self.queues
                .entry(job.backend_id.clone())
                .or_default()
                .push_back(job.job_id.clone());
        }
    }

    fn append(&mut self, record: &LogRecord) -> Result<(), StoreError> {
        let body = record.encode_body();
        let mut framed = Vec::with_capacity(body.len() + 10);
        let mut payload = Vec::with_capacity(body.len() + 1);
        payload.push(record.tag());
        payload.extend_from_slice(&body);
        framed.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        framed.extend_from_slice(&payload);
        framed.extend_from_slice(&crc32fast::hash(&payload).to_be_bytes());
        self.file.write_all(&framed)?;
        self.file.sync_data()?;
        self.records_since_snapshot += 1;
        Ok(())
    }

    /// Appends a snapshot once enough records accumulated. Called by the
    /// public mutators after their in-memory update, so the snapshot always
    /// reflects the record that triggered it.
    fn maybe_snapshot(&mut self) -> Result<(), StoreError> {
        if self.records_since_snapshot >= SNAPSHOT_INTERVAL {
            self.append_snapshot()?;
        }
        Ok(())
    }

    fn append_snapshot(&mut self) -> Result<(), StoreError> {
        let mut jobs: Vec<Job> = self.jobs.values().cloned().collect();
        jobs.sort_by_key(|j| j.submitted_at);
        let snapshot = Snapshot {
            next_seq: self.next_seq,
            jobs,
            idempotency: self.idempotency.entries(),
        };
        self.append(&LogRecord::Snapshot(snapshot))?;
        self.records_since_snapshot = 0;
        Ok(())
    }

    /// Durably queues a new job, or returns the original when the
    /// idempotency token was already used within the retention window. The
    /// sealed metadata is stored as received — never opened here.
    pub fn submit_job(&mut self, new_job: NewJob) -> Result<SubmitOutcome, StoreError> {
        if let Some(existing) = self.idempotency.lookup(&new_job.idempotency_token) {
            return Ok(SubmitOutcome::Duplicate(existing.clone()));
        }
        let seq = self.next_seq;
        let job_id = JobId::new(format!("job-{seq:08}"));
        let mut job = Job {
            job_id: job_id.clone(),
            client_id: new_job.client_id,
            backend_id: new_job.backend_id,
            idempotency_token: new_job.idempotency_token,
            obf_schedule: new_job.obf_schedule,
            sealed_metadata: new_job.sealed_metadata,
            client_ephemeral_public: new_job.client_ephemeral_public,
            shots: new_job.shots,
            state: JobState::Received,
            submitted_at: seq,
            results: None,
        };
        job.transition(JobState::Queued)?;
        self.append(&LogRecord::JobSubmitted(job.clone()))?;
        self.next_seq = seq + 1;
        self.idempotency
            .remember(job.idempotency_token.clone(), job_id.clone());
        self.queues
            .entry(job.backend_id.clone())
            .or_default()
            .push_back(job_id.clone());
        self.jobs.insert(job_id.clone(), job);
        self.maybe_snapshot()?;
        Ok(SubmitOutcome::Accepted(job_id))
    }

    /// Pops the lowest-sequence queued job pinned to `backend_id`, durably
    /// marking it Running. Returns an immutable snapshot for the executor.
    pub fn take_next_queued(&mut self, backend_id: &str) -> Result<Option<Job>, StoreError> {
        let Some(queue) = self.queues.get_mut(backend_id) else {
            return Ok(None);
        };
        let Some(job_id) = queue.pop_front() else {
            return Ok(None);
        };
        {
            let job = self
                .jobs
                .get(&job_id)
                .ok_or_else(|| StoreError::UnknownJob(job_id.clone()))?;
            debug_assert_eq!(job.state, JobState::Queued);
            debug_assert_eq!(job.backend_id, backend_id);
        }
        self.append(&LogRecord::StateChanged {
            job_id: job_id.clone(),
            state: JobState::Running,
        })?;
        let job = self.jobs.get_mut(&job_id).expect("checked above");
        job.transition(JobState::Running)?;
        let snapshot = job.clone();
        self.maybe_snapshot()?;
        Ok(Some(snapshot))
    }

    /// Records the execution output pair and completes the job, atomically
    /// in one log record.
    pub fn record_results(
        &mut self,
        job_id: &JobId,
        bitstrings: Vec<BitString>,
        sealed_output_metadata: SealedBlob,
    ) -> Result<(), StoreError> {
        let job = self
            .jobs
            .get(job_id)
            .ok_or_else(|| StoreError::UnknownJob(job_id.clone()))?;
        if !job.state.can_transition_to(&JobState::Done) {
            return Err(IllegalTransition {
                from: job.state.to_string(),
                to: JobState::Done.to_string(),
            }
            .into());
        }
        let results = JobResults {
            bitstrings,
            sealed_output_metadata,
        };
        self.append(&LogRecord::Results {
            job_id: job_id.clone(),
            results: results.clone(),
        })?;
        let job = self.jobs.get_mut(job_id).expect("checked above");
        job.state = JobState::Done;
        job.results = Some(results);
        self.maybe_snapshot()?;
        Ok(())
    }

    /// Marks a running job permanently failed. Failed jobs are terminal;
    /// retry is a client decision via resubmission.
    pub fn record_failure(&mut self, job_id: &JobId, reason: &str) -> Result<(), StoreError> {
        let state = JobState::Failed(reason.to_string());
        let job = self
            .jobs
            .get(job_id)
            .ok_or_else(|| StoreError::UnknownJob(job_id.clone()))?;
        if !job.state.can_transition_to(&state) {
            return Err(IllegalTransition {
                from: job.state.to_string(),
                to: state.to_string(),
            }
            .into());
        }
        self.append(&LogRecord::StateChanged {
            job_id: job_id.clone(),
            state: state.clone(),
        })?;
        self.jobs.get_mut(job_id).expect("checked above").state = state;
        self.maybe_snapshot()?;
        Ok(())
    }

    pub fn get(&self, job_id: &JobId) -> Option<&Job> {
        self.jobs.get(job_id)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.jobs.values()
    }

    pub fn job_count(&self) -> usize {
        self.jobs.len()
    }

    pub fn queued_ids(&self, backend_id: &str) -> Vec<JobId> {
        self.queues
            .get(backend_id)
            .map(|q| q.iter().cloned().collect())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::KeyId;
    use crate::model::{Opcode, Slot};
    use tempfile::tempdir;

    fn new_job(backend: &str, token: &str) -> NewJob {
        NewJob {
            client_id: "alice".into(),
            backend_id: backend.into(),
            idempotency_token: token.into(),
            obf_schedule: PulseSchedule::new(1, vec![Slot::drive(0, Opcode::H, None).unwrap()]),
            sealed_metadata: SealedBlob {
                key_id: KeyId::new("backend-metadata/sim-a"),
                nonce: [0; 12],
                ciphertext: vec![1, 2, 3, 4],
            },
            client_ephemeral_public: vec![7; 32],
            shots: 4,
        }
    }

    fn sealed(job: &JobId) -> SealedBlob {
        SealedBlob {
            key_id: KeyId::response(job.as_str()),
            nonce: [1; 12],
            ciphertext: vec![9],
        }
    }

    #[test]
    fn ten_jobs_survive_restart_in_order() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.log");
        let mut ids = Vec::new();
        {
            let mut store = JobStore::open(&path).unwrap();
            for i in 0..10 {
                let outcome = store.submit_job(new_job("sim-a", &format!("t{i}"))).unwrap();
                ids.push(outcome.job_id().clone());
            }
        }
        let store = JobStore::open(&path).unwrap();
        assert_eq!(store.job_count(), 10);
        assert_eq!(store.queued_ids("sim-a"), ids);
    }

    #[test]
    fn torn_final_append_is_discarded() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.log");
        {
            let mut store = JobStore::open(&path).unwrap();
            for i in 0..10 {
                store.submit_job(new_job("sim-a", &format!("t{i}"))).unwrap();
            }
        }
        let committed = std::fs::metadata(&path).unwrap().len();
        {
            let mut store = JobStore::open(&path).unwrap();
            store.submit_job(new_job("sim-a", "t10")).unwrap();
        }
        let full = std::fs::metadata(&path).unwrap().len();
        // cut inside the 11th record
        let cut = committed + (full - committed) / 2;
        let file = OpenOptions::new().write(true).open(&path).unwrap();
        file.set_len(cut).unwrap();
        drop(file);

        let store = JobStore::open(&path).unwrap();
        assert_eq!(store.job_count(), 10);
        // the torn tail was truncated away
        assert_eq!(std::fs::metadata(&path).unwrap().len(), committed);
    }

    #[test]
    fn running_jobs_demote_to_queued_on_recovery() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.log");
        let job_id;
        {
            let mut store = JobStore::open(&path).unwrap();
            job_id = store
                .submit_job(new_job("sim-a", "t0"))
                .unwrap()
                .job_id()
                .clone();
            let running = store.take_next_queued("sim-a").unwrap().unwrap();
            assert_eq!(running.state, JobState::Running);
        }
        let store = JobStore::open(&path).unwrap();
        assert_eq!(store.get(&job_id).unwrap().state, JobState::Queued);
        assert_eq!(store.queued_ids("sim-a"), vec![job_id.clone()]);

        // and the demotion survives another recovery
        drop(store);
        let store = JobStore::open(&path).unwrap();
        assert_eq!(store.get(&job_id).unwrap().state, JobState::Queued);
    }

    #[test]
    fn corrupted_committed_record_names_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.log");
        let second_offset;
        {
            let mut store = JobStore::open(&path).unwrap();
            store.submit_job(new_job("sim-a", "t0")).unwrap();
            second_offset = store.file.metadata().unwrap().len();
            store.submit_job(new_job("sim-a", "t1")).unwrap();
            store.submit_job(new_job("sim-a", "t2")).unwrap();
        }
        // flip one byte inside the second record's payload
        let mut data = std::fs::read(&path).unwrap();
        data[second_offset as usize + 8] ^= 0xff;
        std::fs::write(&path, &data).unwrap();

        match JobStore::open(&path) {
            Err(StoreError::CorruptRecord { offset, .. }) => {
                assert_eq!(offset, second_offset);
            }
            other => panic!("expected corrupt record error, got {other:?}"),
        }
    }

    #[test]
    fn idempotent_resubmission_returns_original() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.log");
        let mut store = JobStore::open(&path).unwrap();
        let first = store.submit_job(new_job("sim-a", "same-token")).unwrap();
        let second = store.submit_job(new_job("sim-a", "same-token")).unwrap();
        assert_eq!(first.job_id(), second.job_id());
        assert!(matches!(second, SubmitOutcome::Duplicate(_)));
        assert_eq!(store.job_count(), 1);

        // still deduplicated after recovery
        drop(store);
        let mut store = JobStore::open(&path).unwrap();
        let third = store.submit_job(new_job("sim-a", "same-token")).unwrap();
        assert_eq!(third.job_id(), first.job_id());
        assert_eq!(store.job_count(), 1);
    }

    #[test]
    fn results_pair_persists_atomically() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.log");
        let job_id;
        {
            let mut store = JobStore::open(&path).unwrap();
            job_id = store
                .submit_job(new_job("sim-a", "t0"))
                .unwrap()
                .job_id()
                .clone();
            store.take_next_queued("sim-a").unwrap().unwrap();
            store
                .record_results(&job_id, vec!["1".parse().unwrap()], sealed(&job_id))
                .unwrap();
        }
        let store = JobStore::open(&path).unwrap();
        let job = store.get(&job_id).unwrap();
        assert_eq!(job.state, JobState::Done);
        let results = job.results.as_ref().unwrap();
        assert_eq!(results.bitstrings.len(), 1);
        assert_eq!(results.sealed_output_metadata, sealed(&job_id));
    }

    #[test]
    fn results_require_running_state() {
        let dir = tempdir().unwrap();
        let mut store = JobStore::open(dir.path().join("s.log")).unwrap();
        let job_id = store
            .submit_job(new_job("sim-a", "t0"))
            .unwrap()
            .job_id()
            .clone();
        // still Queued
        assert!(matches!(
            store.record_results(&job_id, vec![], sealed(&job_id)),
            Err(StoreError::IllegalTransition(_))
        ));
    }

    #[test]
    fn failure_is_durable_and_terminal() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.log");
        let job_id;
        {
            let mut store = JobStore::open(&path).unwrap();
            job_id = store
                .submit_job(new_job("sim-a", "t0"))
                .unwrap()
                .job_id()
                .clone();
            store.take_next_queued("sim-a").unwrap().unwrap();
            store.record_failure(&job_id, "metadata-auth").unwrap();
        }
        let store = JobStore::open(&path).unwrap();
        assert_eq!(
            store.get(&job_id).unwrap().state,
            JobState::Failed("metadata-auth".into())
        );
        assert!(store.queued_ids("sim-a").is_empty());
    }

    #[test]
    fn queues_are_per_backend_fifo() {
        let dir = tempdir().unwrap();
        let mut store = JobStore::open(dir.path().join("s.log")).unwrap();
        let a1 = store.submit_job(new_job("sim-a", "a1")).unwrap();
        let b1 = store.submit_job(new_job("sim-b", "b1")).unwrap();
        let a2 = store.submit_job(new_job("sim-a", "a2")).unwrap();

        assert_eq!(
            store.take_next_queued("sim-a").unwrap().unwrap().job_id,
            *a1.job_id()
        );
        assert_eq!(
            store.take_next_queued("sim-a").unwrap().unwrap().job_id,
            *a2.job_id()
        );
        assert!(store.take_next_queued("sim-a").unwrap().is_none());
        assert_eq!(
            store.take_next_queued("sim-b").unwrap().unwrap().job_id,
            *b1.job_id()
        );
        assert!(store.take_next_queued("sim-c").unwrap().is_none());
    }

    #[test]
    fn snapshot_cycle_recovers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.log");
        let n = SNAPSHOT_INTERVAL + 20;
        {
            let mut store = JobStore::open(&path).unwrap();
            for i in 0..n {
                store.submit_job(new_job("sim-a", &format!("t{i}"))).unwrap();
            }
        }
        let store = JobStore::open(&path).unwrap();
        assert_eq!(store.job_count(), n as usize);
        assert_eq!(store.queued_ids("sim-a").len(), n as usize);
    }
}
