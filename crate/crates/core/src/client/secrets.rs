//! Per-job local secret records: the response key, the retained ephemeral
//! agreement secret, and enough context to recover results later.
//!
//! Records are written under a passphrase-derived key unless the caller
//! explicitly accepts plaintext storage.

use std::fmt;
use std::path::{Path, PathBuf};

use pbkdf2::pbkdf2_hmac;
use rand::{CryptoRng, RngExt};
use sha2::Sha256;
use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::envelope::{open, seal, ClientEphemeral, KeyId, SealedBlob, SymmetricKey};
use crate::model::Digest;
use crate::obfuscation::SchemeLabel;
use crate::service::JobId;

const PBKDF2_ROUNDS: u32 = 100_000;
const RECORD_AD: &[u8] = b"qtee.secret-record.v1";

const PROTECTION_INSECURE: u8 = 0;
const PROTECTION_PASSPHRASE: u8 = 1;

#[derive(Debug, Error)]
pub enum SecretStoreError {
    #[error("secret store i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed secret record {path}: {source}")]
    Malformed {
        path: String,
        #[source]
        source: CodecError,
    },
    #[error("cannot open secret record {path} (wrong passphrase or corrupted record)")]
    CannotOpen { path: String },
    #[error("record was written with a passphrase but none was provided")]
    PassphraseRequired,
    #[error("no secret record found for {0}")]
    NotFound(String),
}

/// How records are protected on disk.
#[derive(Debug, Clone)]
pub enum Protection {
    /// Key derived from a user passphrase; records are sealed.
    Passphrase(String),
    /// Plaintext on disk. Requires an explicit opt-in at the CLI
    /// (`--insecure-store`).
    Insecure,
}

/// Everything the client must retain locally to recover a job's results.
#[derive(Clone)]
pub struct LocalSecretRecord {
    pub job_id: Option<JobId>,
    pub idempotency_token: String,
    pub backend_id: String,
    pub scheme: SchemeLabel,
    pub shots: u32,
    pub response_key: SymmetricKey,
    pub original_circuit_digest: Digest,
    pub client_ephemeral_secret: ClientEphemeral,
}

impl fmt::Debug for LocalSecretRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalSecretRecord")
            .field("job_id", &self.job_id)
            .field("idempotency_token", &self.idempotency_token)
            .field("backend_id", &self.backend_id)
            .field("scheme", &self.scheme)
            .field("shots", &self.shots)
            .finish_non_exhaustive()
    }
}

impl LocalSecretRecord {
    fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.put_str(&self.idempotency_token);
        e.put_str(&self.backend_id);
        e.put_u8(match self.scheme {
            SchemeLabel::DummyOnly => 0,
            SchemeLabel::SwapOnly => 1,
            SchemeLabel::Combined => 2,
        });
        e.put_u32(self.shots);
        e.put_raw(self.response_key.as_bytes());
        e.put_raw(self.original_circuit_digest.as_bytes());
        e.put_raw(&self.client_ephemeral_secret.to_bytes());
        match &self.job_id {
            None => e.put_u8(0),
            Some(id) => {
                e.put_u8(1);
                e.put_str(id.as_str());
            }
        }
        e.into_bytes()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let idempotency_token = d.str()?;
        let backend_id = d.str()?;
        let at = d.pos();
        let scheme = match d.u8()? {
            0 => SchemeLabel::DummyOnly,
            1 => SchemeLabel::SwapOnly,
            2 => SchemeLabel::Combined,
            tag => {
                return Err(CodecError::InvalidTag {
                    what: "scheme",
                    tag,
                    at,
                })
            }
        };
        let shots = d.u32()?;
        let response_key = SymmetricKey::from_bytes(d.raw(32)?.try_into().unwrap());
        let original_circuit_digest = Digest::from_bytes(d.raw(32)?.try_into().unwrap());
        let client_ephemeral_secret = ClientEphemeral::from_bytes(d.raw(32)?.try_into().unwrap());
        let at = d.pos();
        let job_id = match d.u8()? {
            0 => None,
            1 => Some(JobId::new(d.str()?)),
            _ => {
                return Err(CodecError::InvalidValue {
                    what: "job id flag",
                    at,
                })
            }
        };
        d.finish()?;
        Ok(Self {
            job_id,
            idempotency_token,
            backend_id,
            scheme,
            shots,
            response_key,
            original_circuit_digest,
            client_ephemeral_secret,
        })
    }
}

/// Directory of secret records, one file per job, named by idempotency token
/// before submission and by job id after.
#[derive(Debug)]
pub struct SecretStore {
    dir: PathBuf,
    protection: Protection,
}

impl SecretStore {
    pub fn new(dir: impl Into<PathBuf>, protection: Protection) -> Self {
        Self {
            dir: dir.into(),
            protection,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.record"))
    }

    pub fn save_by_token<R: CryptoRng + RngExt>(
        &self,
        record: &LocalSecretRecord,
        rng: &mut R,
    ) -> Result<PathBuf, SecretStoreError> {
        self.save_as(&record.idempotency_token.clone(), record, rng)
    }

    pub fn save_by_job<R: CryptoRng + RngExt>(
        &self,
        record: &LocalSecretRecord,
        rng: &mut R,
    ) -> Result<PathBuf, SecretStoreError> {
        let job_id = record
            .job_id
            .as_ref()
            .expect("record has a job id after submission")
            .clone();
        let path = self.save_as(job_id.as_str(), record, rng)?;
        // the pre-submission file is superseded
        let token_path = self.record_path(&record.idempotency_token);
        if token_path != path {
            let _ = std::fs::remove_file(token_path);
        }
        Ok(path)
    }

    fn save_as<R: CryptoRng + RngExt>(
        &self,
        name: &str,
        record: &LocalSecretRecord,
        rng: &mut R,
    ) -> Result<PathBuf, SecretStoreError> {
        std::fs::create_dir_all(&self.dir).map_err(|source| SecretStoreError::Io {
            path: self.dir.display().to_string(),
            source,
        })?;
        let path = self.record_path(name);
        let plaintext = record.to_bytes();
        let mut e = Encoder::new();
        match &self.protection {
            Protection::Insecure => {
                e.put_u8(PROTECTION_INSECURE);
                e.put_raw(&plaintext);
            }
            Protection::Passphrase(passphrase) => {
                let salt: [u8; 16] = rng.random();
                let key = derive_record_key(passphrase, &salt);
                let blob = seal(&plaintext, &key, &KeyId::new("secret-record"), RECORD_AD, rng);
                e.put_u8(PROTECTION_PASSPHRASE);
                e.put_bytes(&salt);
                blob.encode_into(&mut e);
            }
        }
        std::fs::write(&path, e.into_bytes()).map_err(|source| SecretStoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    }

    pub fn load_by_token(&self, token: &str) -> Result<LocalSecretRecord, SecretStoreError> {
        self.load(token)
    }

    pub fn load_by_job(&self, job_id: &JobId) -> Result<LocalSecretRecord, SecretStoreError> {
        self.load(job_id.as_str())
    }

    fn load(&self, name: &str) -> Result<LocalSecretRecord, SecretStoreError> {
        let path = self.record_path(name);
        let data = std::fs::read(&path).map_err(|_| SecretStoreError::NotFound(name.into()))?;
        let display = path.display().to_string();
        let malformed = |source: CodecError| SecretStoreError::Malformed {
            path: display.clone(),
            source,
        };
        let mut d = Decoder::new(&data);
        match d.u8().map_err(malformed)? {
            PROTECTION_INSECURE => {
                let rest = d.raw(d.remaining()).map_err(malformed)?;
                LocalSecretRecord::from_bytes(rest).map_err(malformed)
            }
            PROTECTION_PASSPHRASE => {
                let Protection::Passphrase(passphrase) = &self.protection else {
                    return Err(SecretStoreError::PassphraseRequired);
                };
                let salt = d.byte_vec().map_err(malformed)?;
                let blob = SealedBlob::decode_from(&mut d).map_err(malformed)?;
                d.finish().map_err(malformed)?;
                let key = derive_record_key(passphrase, &salt);
                let plaintext = open(&blob, &key, RECORD_AD)
                    .map_err(|_| SecretStoreError::CannotOpen { path: display.clone() })?;
                LocalSecretRecord::from_bytes(&plaintext).map_err(malformed)
            }
            tag => Err(malformed(CodecError::InvalidTag {
                what: "protection",
                tag,
                at: 0,
            })),
        }
    }
}

fn derive_record_key(passphrase: &str, salt: &[u8]) -> SymmetricKey {
    let mut out = [0u8; 32];
    pbkdf2_hmac::<Sha256>(passphrase.as_bytes(), salt, PBKDF2_ROUNDS, &mut out);
    SymmetricKey::from_bytes(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use tempfile::tempdir;

    fn record(token: &str) -> LocalSecretRecord {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        LocalSecretRecord {
            job_id: None,
            idempotency_token: token.into(),
            backend_id: "sim-a".into(),
            scheme: SchemeLabel::Combined,
            shots: 64,
            response_key: SymmetricKey::generate(&mut rng),
            original_circuit_digest: Digest::from_bytes([7; 32]),
            client_ephemeral_secret: ClientEphemeral::generate(&mut rng),
        }
    }

    #[test]
    fn insecure_round_trip_and_job_rename() {
        let dir = tempdir().unwrap();
        let store = SecretStore::new(dir.path(), Protection::Insecure);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut rec = record("tok-a");
        store.save_by_token(&rec, &mut rng).unwrap();
        let loaded = store.load_by_token("tok-a").unwrap();
        assert_eq!(loaded.backend_id, "sim-a");
        assert!(loaded.job_id.is_none());

        rec.job_id = Some(JobId::new("job-00000000"));
        store.save_by_job(&rec, &mut rng).unwrap();
        let by_job = store.load_by_job(&JobId::new("job-00000000")).unwrap();
        assert_eq!(by_job.idempotency_token, "tok-a");
        // token-named file is gone
        assert!(store.load_by_token("tok-a").is_err());
    }

    #[test]
    fn passphrase_protects_record() {
        let dir = tempdir().unwrap();
        let store = SecretStore::new(dir.path(), Protection::Passphrase("hunter2".into()));
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        store.save_by_token(&record("tok-b"), &mut rng).unwrap();

        // the response key never appears in the file
        let raw = std::fs::read(dir.path().join("tok-b.record")).unwrap();
        let key_bytes = record("tok-b").response_key.as_bytes().to_vec();
        assert!(!raw
            .windows(key_bytes.len())
            .any(|w| w == key_bytes.as_slice()));

        let wrong = SecretStore::new(dir.path(), Protection::Passphrase("letmein".into()));
        assert!(matches!(
            wrong.load_by_token("tok-b"),
            Err(SecretStoreError::CannotOpen { .. })
        ));
        let right = SecretStore::new(dir.path(), Protection::Passphrase("hunter2".into()));
        assert_eq!(right.load_by_token("tok-b").unwrap().shots, 64);

        let none = SecretStore::new(dir.path(), Protection::Insecure);
        assert!(matches!(
            none.load_by_token("tok-b"),
            Err(SecretStoreError::PassphraseRequired)
        ));
    }

    #[test]
    fn missing_record_reports_not_found() {
        let dir = tempdir().unwrap();
        let store = SecretStore::new(dir.path(), Protection::Insecure);
        assert!(matches!(
            store.load_by_token("absent"),
            Err(SecretStoreError::NotFound(_))
        ));
    }
}
