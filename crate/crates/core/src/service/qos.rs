//! Service state machine: intake, backend-pinned scheduling, atomic handoff
//! to trust boundaries, and result lookup.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::envelope::SealedBlob;
use crate::model::{BitString, PulseSchedule};
use crate::service::job::{Job, JobId, JobState};
use crate::service::store::{JobStore, NewJob, StoreError, SubmitOutcome};
use crate::wire::SubmitRequest;

/// What the service knows about a backend: capacity and identity, no keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendInfo {
    pub backend_id: String,
    pub num_qubits: u32,
}

/// The atomic unit delivered to a trust boundary: the schedule is never
/// handed over without its sealed metadata.
#[derive(Debug, Clone)]
pub struct JobHandoff {
    pub job_id: JobId,
    pub obf_schedule: PulseSchedule,
    pub sealed_metadata: SealedBlob,
    pub client_ephemeral_public: Vec<u8>,
    pub shots: u32,
}

/// What a trust boundary returns: flipped shot outputs paired with the
/// sealed output metadata.
#[derive(Debug, Clone)]
pub struct ExecutionOutput {
    pub flipped_bitstrings: Vec<BitString>,
    pub sealed_output_metadata: SealedBlob,
}

/// Failure classes a trust boundary reports. Authentication failures are
/// poisoned inputs and never retried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryError {
    AuthenticationFailure,
    Integrity,
    Capacity,
}

impl BoundaryError {
    /// The terminal failure reason recorded on the job.
    pub fn reason(self) -> &'static str {
        match self {
            BoundaryError::AuthenticationFailure => "metadata-auth",
            BoundaryError::Integrity => "integrity",
            BoundaryError::Capacity => "capacity",
        }
    }
}

/// The execution contract a backend's trusted controller exposes to the
/// service. The service holds controllers only through this trait, so
/// controller key material is unreachable from service code.
pub trait TrustBoundary: Send + Sync {
    fn backend_id(&self) -> &str;
    fn execute(&self, handoff: JobHandoff) -> Result<ExecutionOutput, BoundaryError>;
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("malformed schedule: {0}")]
    MalformedSchedule(String),
    #[error("shot count must be positive")]
    ZeroShots,
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("job {0} does not belong to the requesting client")]
    Unauthorized(JobId),
}

/// Fetch yields either a state report or the full result pair; there is no
/// way to obtain the bitstrings without the sealed output metadata.
#[derive(Debug, Clone, PartialEq)]
pub enum FetchResponse {
    State(JobState),
    Results {
        bitstrings: Vec<BitString>,
        sealed_output_metadata: SealedBlob,
    },
}

/// The service core. All store mutations serialize through one mutex; each
/// backend gets exactly one executor lane consuming [`QosService::schedule_next`],
/// so a single backend executes serially while distinct backends run
/// concurrently. Intake never blocks on execution.
pub struct QosService {
    store: Mutex<JobStore>,
    work: Condvar,
    backends: BTreeMap<String, BackendInfo>,
}

impl QosService {
    pub fn new(store: JobStore, backends: Vec<BackendInfo>) -> Self {
        Self {
            store: Mutex::new(store),
            work: Condvar::new(),
            backends: backends
                .into_iter()
                .map(|b| (b.backend_id.clone(), b))
                .collect(),
        }
    }

    pub fn backends(&self) -> impl Iterator<Item = &BackendInfo> {
        self.backends.values()
    }

    /// Phase-I intake: validates backend existence and schedule
    /// well-formedness, then durably persists the job as Queued. The sealed
    /// metadata is stored opaquely — the service never opens it.
    pub fn handle_submit(&self, request: SubmitRequest) -> Result<SubmitOutcome, SubmitError> {
        let backend = self
            .backends
            .get(&request.backend_id)
            .ok_or_else(|| SubmitError::UnknownBackend(request.backend_id.clone()))?;
        if request.schedule.num_qubits == 0 {
            return Err(SubmitError::MalformedSchedule(
                "schedule must use at least one qubit".into(),
            ));
        }
        if request.schedule.num_qubits > backend.num_qubits {
            return Err(SubmitError::MalformedSchedule(format!(
                "schedule uses {} qubits, backend {} has {}",
                request.schedule.num_qubits, backend.backend_id, backend.num_qubits
            )));
        }
        request
            .schedule
            .check_well_formed()
            .map_err(|e| SubmitError::MalformedSchedule(e.to_string()))?;
        if request.shots == 0 {
            return Err(SubmitError::ZeroShots);
        }

        let outcome = self.store.lock().unwrap().submit_job(NewJob {
            client_id: request.client_id,
            backend_id: request.backend_id,
            idempotency_token: request.idempotency_token,
            obf_schedule: request.schedule,
            sealed_metadata: request.sealed_metadata,
            client_ephemeral_public: request.client_ephemeral_public,
            shots: request.shots,
        })?;
        self.work.notify_all();
        Ok(outcome)
    }

    /// Pops the next queued job pinned to `backend_id` and durably marks it
    /// Running. Never yields a job pinned elsewhere.
    pub fn schedule_next(&self, backend_id: &str) -> Result<Option<Job>, StoreError> {
        self.store.lock().unwrap().take_next_queued(backend_id)
    }

    /// Blocking variant for executor lanes: waits for work until shutdown.
    pub fn next_job_blocking(&self, backend_id: &str, shutdown: &AtomicBool) -> Option<Job> {
        let mut store = self.store.lock().unwrap();
        loop {
            match store.take_next_queued(backend_id) {
                Ok(Some(job)) => return Some(job),
                Ok(None) => {}
                Err(_) => return None,
            }
            if shutdown.load(Ordering::SeqCst) {
                return None;
            }
            let (guard, _) = self
                .work
                .wait_timeout(store, Duration::from_millis(50))
                .unwrap();
            store = guard;
        }
    }

    /// Phase-II dispatch: hands the schedule, sealed metadata, ephemeral key,
    /// and shot count to the boundary as one atomic unit, then records the
    /// outcome. Boundary failures are terminal; a failed job is never
    /// retried.
    pub fn dispatch_and_collect(
        &self,
        job: &Job,
        boundary: &dyn TrustBoundary,
    ) -> Result<JobState, StoreError> {
        assert_eq!(job.state, JobState::Running, "dispatch requires Running");
        // no-migration invariant: a job only ever reaches the backend it is
        // pinned to
        assert_eq!(
            job.backend_id,
            boundary.backend_id(),
            "job {} pinned to {} was offered to {}",
            job.job_id,
            job.backend_id,
            boundary.backend_id()
        );
        let handoff = JobHandoff {
            job_id: job.job_id.clone(),
            obf_schedule: job.obf_schedule.clone(),
            sealed_metadata: job.sealed_metadata.clone(),
            client_ephemeral_public: job.client_ephemeral_public.clone(),
            shots: job.shots,
        };
        let outcome = boundary.execute(handoff);
        let mut store = self.store.lock().unwrap();
        let state = match outcome {
            Ok(output) => {
                store.record_results(
                    &job.job_id,
                    output.flipped_bitstrings,
                    output.sealed_output_metadata,
                )?;
                JobState::Done
            }
            Err(err) => {
                store.record_failure(&job.job_id, err.reason())?;
                JobState::Failed(err.reason().to_string())
            }
        };
        drop(store);
        self.work.notify_all();
        Ok(state)
    }

    /// Phase-III lookup: Done jobs yield the result pair, anything else a
    /// state report. The requester must be the submitting client.
    pub fn handle_fetch(
        &self,
        job_id: &JobId,
        requester: &str,
    ) -> Result<FetchResponse, FetchError> {
        let store = self.store.lock().unwrap();
        let job = store
            .get(job_id)
            .ok_or_else(|| FetchError::UnknownJob(job_id.clone()))?;
        if job.client_id != requester {
            return Err(FetchError::Unauthorized(job_id.clone()));
        }
        match (&job.state, &job.results) {
            (JobState::Done, Some(results)) => Ok(FetchResponse::Results {
                bitstrings: results.bitstrings.clone(),
                sealed_output_metadata: results.sealed_output_metadata.clone(),
            }),
            (state, _) => Ok(FetchResponse::State(state.clone())),
        }
    }

    pub fn handle_status(&self, job_id: &JobId, requester: &str) -> Result<JobState, FetchError> {
        let store = self.store.lock().unwrap();
        let job = store
            .get(job_id)
            .ok_or_else(|| FetchError::UnknownJob(job_id.clone()))?;
        if job.client_id != requester {
            return Err(FetchError::Unauthorized(job_id.clone()));
        }
        Ok(job.state.clone())
    }

    /// Blocks until the job reaches a terminal state or the timeout passes.
    pub fn wait_terminal(&self, job_id: &JobId, timeout: Duration) -> Option<JobState> {
        let deadline = std::time::Instant::now() + timeout;
        let mut store = self.store.lock().unwrap();
        loop {
            match store.get(job_id).map(|j| j.state.clone()) {
                Some(state @ (JobState::Done | JobState::Failed(_))) => return Some(state),
                Some(_) => {}
                None => return None,
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return None;
            }
            let (guard, _) = self.work.wait_timeout(store, deadline - now).unwrap();
            store = guard;
        }
    }

    /// Runs `f` against the locked store. Test and inspection hook.
    pub fn with_store<T>(&self, f: impl FnOnce(&JobStore) -> T) -> T {
        f(&self.store.lock().unwrap())
    }
}

/// One backend's executor lane: serially drains that backend's queue into
/// its trust boundary until shutdown.
pub fn run_executor_lane(
    service: &Arc<QosService>,
    boundary: &Arc<dyn TrustBoundary>,
    shutdown: &AtomicBool,
) {
    while let Some(job) = service.next_job_blocking(boundary.backend_id(), shutdown) {
        // a store error here means the log is unwritable; stop the lane
        if service.dispatch_and_collect(&job, boundary.as_ref()).is_err() {
            break;
        }
    }
}
