//! The cloud-side service: secure intake, durable circuit–metadata
//! association, backend-pinned FIFO scheduling, dispatch into trust
//! boundaries, and result return.
//!
//! This module never holds key material: sealed blobs pass through opaquely,
//! and execution happens behind the [`TrustBoundary`] trait. Nothing here
//! imports an opening or key-derivation function.

mod config;
mod job;
mod qos;
mod server;
mod store;

pub use config::{load_server_config, BackendEntry, ResolvedServerConfig, ServerConfigError, ENV_LISTEN_ADDR, ENV_STORAGE_PATH};
pub use job::{IllegalTransition, Job, JobId, JobResults, JobState};
pub use qos::{
    run_executor_lane, BackendInfo, BoundaryError, ExecutionOutput, FetchError, FetchResponse,
    JobHandoff, QosService, SubmitError, TrustBoundary,
};
pub use server::{start_server, ServeError, ServerHandle};
pub use store::{
    JobStore, NewJob, StoreError, SubmitOutcome, IDEMPOTENCY_RETENTION, SNAPSHOT_INTERVAL,
};
