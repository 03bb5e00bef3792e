//! Client configuration: identity, session key, server address, and the
//! backend descriptors (including their published static public keys, the
//! stand-in for attestation certificates).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::envelope::{
    BackendStaticPublic, KeyEntry, KeyId, KeyRegistry, SymmetricKey,
};
use crate::keyfiles::{read_key32, KeyFileError};
use crate::model::{BackendDescriptor, Opcode};

#[derive(Debug, Error)]
pub enum ClientConfigError {
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
    #[error("unknown opcode `{0}` in supported_opcodes")]
    UnknownOpcode(String),
    #[error("duplicate backend id `{0}`")]
    DuplicateBackend(String),
}

#[derive(Debug, Deserialize)]
struct RawClientConfig {
    client_id: String,
    session_key_file: PathBuf,
    server_addr: Option<String>,
    #[serde(default)]
    backends: Vec<RawBackend>,
}

#[derive(Debug, Deserialize)]
struct RawBackend {
    backend_id: String,
    num_qubits: u32,
    public_key_file: PathBuf,
    supported_opcodes: Option<Vec<String>>,
}

/// Loaded client configuration. Backend public keys live in the registry,
/// addressed by the descriptors' key handles.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub client_id: String,
    pub session_key: SymmetricKey,
    pub server_addr: Option<String>,
    pub backends: Vec<BackendDescriptor>,
    pub registry: KeyRegistry,
}

impl ClientConfig {
    pub fn backend(&self, backend_id: &str) -> Option<&BackendDescriptor> {
        self.backends.iter().find(|b| b.backend_id == backend_id)
    }

    pub fn session_key_id(&self) -> KeyId {
        KeyId::session(&self.client_id)
    }
}

pub fn load_client_config(path: &Path) -> Result<ClientConfig, ClientConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ClientConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let raw: RawClientConfig =
        toml::from_str(&text).map_err(|source| ClientConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    let base = path.parent().unwrap_or(Path::new("."));

    let session_key = SymmetricKey::from_bytes(read_key32(&resolve(base, &raw.session_key_file))?);
    let mut backends = Vec::with_capacity(raw.backends.len());
    let mut registry = KeyRegistry::new();
    for b in raw.backends {
        if backends
            .iter()
            .any(|d: &BackendDescriptor| d.backend_id == b.backend_id)
        {
            return Err(ClientConfigError::DuplicateBackend(b.backend_id));
        }
        let key_id = KeyId::backend_metadata(&b.backend_id);
        let public = BackendStaticPublic::from_bytes(&read_key32(&resolve(
            base,
            &b.public_key_file,
        ))?)
        .expect("32-byte key file");
        registry.insert(key_id.clone(), KeyEntry::AgreementPublic(public));

        let supported_opcodes: BTreeSet<Opcode> = match &b.supported_opcodes {
            None => Opcode::ALL.iter().copied().collect(),
            Some(names) => {
                let mut set = BTreeSet::new();
                for name in names {
                    set.insert(
                        Opcode::from_mnemonic(name)
                            .ok_or_else(|| ClientConfigError::UnknownOpcode(name.clone()))?,
                    );
                }
                set
            }
        };
        backends.push(BackendDescriptor::new(
            b.backend_id,
            b.num_qubits,
            key_id,
            supported_opcodes,
        ));
    }

    Ok(ClientConfig {
        client_id: raw.client_id,
        session_key,
        server_addr: raw.server_addr,
        backends,
        registry,
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
