//! User-side workflow: prepare (transpile, obfuscate, seal), submit over the
//! secure channel, fetch raw results, and recover true outputs with the
//! sealed flip masks.

mod commands;
mod config;
mod secrets;

pub use commands::{
    fetch, prepare, recover, recover_bits, submit, ClientError, FetchOutcome, PrepareArgs,
    PrepareOutcome, RecoverOutcome,
};
pub use config::{load_client_config, ClientConfig, ClientConfigError};
pub use secrets::{LocalSecretRecord, Protection, SecretStore, SecretStoreError};
