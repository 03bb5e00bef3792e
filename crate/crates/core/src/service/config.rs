//! Server configuration: a TOML file naming the listen address, storage
//! path, backends (with their static key pair locations), and client session
//! keys. The listen address and storage path can be overridden through
//! `QTEE_LISTEN_ADDR` and `QTEE_STORAGE_PATH`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::envelope::{KeyId, SymmetricKey};
use crate::keyfiles::{read_key32, KeyFileError};
use crate::service::qos::BackendInfo;

pub const ENV_LISTEN_ADDR: &str = "QTEE_LISTEN_ADDR";
pub const ENV_STORAGE_PATH: &str = "QTEE_STORAGE_PATH";

#[derive(Debug, Error)]
pub enum ServerConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error(transparent)]
    KeyFile(#[from] KeyFileError),
    #[error("duplicate backend id `{0}`")]
    DuplicateBackend(String),
    #[error("duplicate client id `{0}`")]
    DuplicateClient(String),
}

#[derive(Debug, Deserialize)]
struct RawServerConfig {
    listen_addr: String,
    storage_path: PathBuf,
    #[serde(default)]
    backends: Vec<RawBackend>,
    #[serde(default)]
    clients: Vec<RawClient>,
}

#[derive(Debug, Deserialize)]
struct RawBackend {
    backend_id: String,
    num_qubits: u32,
    secret_key_file: PathBuf,
}

#[derive(Debug, Deserialize)]
struct RawClient {
    client_id: String,
    session_key_file: PathBuf,
}

/// One backend entry as the server sees it: public facts plus the location
/// of the static secret that only this backend's controller will load.
#[derive(Debug, Clone)]
pub struct BackendEntry {
    pub backend_id: String,
    pub num_qubits: u32,
    pub secret_key_file: PathBuf,
}

impl BackendEntry {
    pub fn info(&self) -> BackendInfo {
        BackendInfo {
            backend_id: self.backend_id.clone(),
            num_qubits: self.num_qubits,
        }
    }
}

/// Parsed configuration with env overrides applied and session keys loaded.
/// Backend secret keys stay on disk; controllers load their own.
#[derive(Debug)]
pub struct ResolvedServerConfig {
    pub listen_addr: String,
    pub storage_path: PathBuf,
    pub backends: Vec<BackendEntry>,
    pub session_keys: BTreeMap<KeyId, (String, SymmetricKey)>,
}

pub fn load_server_config(path: &Path) -> Result<ResolvedServerConfig, ServerConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ServerConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let raw: RawServerConfig =
        toml::from_str(&text).map_err(|source| ServerConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    let base = path.parent().unwrap_or(Path::new("."));

    let listen_addr = std::env::var(ENV_LISTEN_ADDR).unwrap_or(raw.listen_addr);
    let storage_path = std::env::var(ENV_STORAGE_PATH)
        .map(PathBuf::from)
        .unwrap_or(raw.storage_path);
    let storage_path = resolve(base, &storage_path);

    let mut backends: Vec<BackendEntry> = Vec::with_capacity(raw.backends.len());
    for b in raw.backends {
        if backends.iter().any(|e| e.backend_id == b.backend_id) {
            return Err(ServerConfigError::DuplicateBackend(b.backend_id));
        }
        backends.push(BackendEntry {
            backend_id: b.backend_id,
            num_qubits: b.num_qubits,
            secret_key_file: resolve(base, &b.secret_key_file),
        });
    }

    let mut session_keys = BTreeMap::new();
    for c in raw.clients {
        let key_id = KeyId::session(&c.client_id);
        if session_keys.contains_key(&key_id) {
            return Err(ServerConfigError::DuplicateClient(c.client_id));
        }
        let key = SymmetricKey::from_bytes(read_key32(&resolve(base, &c.session_key_file))?);
        session_keys.insert(key_id, (c.client_id, key));
    }

    Ok(ResolvedServerConfig {
        listen_addr,
        storage_path,
        backends,
        session_keys,
    })
}

/// Paths in the config file resolve relative to the config file itself.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
