//! The four client operations: prepare, submit, fetch, recover.
//!
//! Bundle files are the exact wire encoding of a SUBMIT message, so a
//! prepared bundle is a replayable fixture. Results files carry the fetched
//! pair (flipped bitstrings plus sealed output metadata) bound to the job id.

use std::collections::BTreeMap;
use std::net::TcpStream;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::client::config::ClientConfig;
use crate::client::secrets::{LocalSecretRecord, SecretStore, SecretStoreError};
use crate::controller::OutputMetadata;
use crate::envelope::{establish_backend_key, open, seal, EnvelopeError, SealedBlob};
use crate::model::{
    circuit_digest, lower_to_schedule, parse_circuit, validate_circuit, BitString, ModelError,
    ParseError, Violation,
};
use crate::obfuscation::{build_metadata, obfuscate_schedule, ObfuscationParams, SchemeLabel};
use crate::service::{JobId, JobState};
use crate::wire::{
    error_code, field_tag, msg_type, Message, SecureChannel, SubmitRequest, WireError,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("circuit parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("circuit validation failed:{}", .0.iter().map(|v| format!("\n  - {v}")).collect::<String>())]
    Validation(Vec<Violation>),
    #[error("unknown backend `{0}` in client configuration")]
    UnknownBackend(String),
    #[error("shot count must be positive")]
    ZeroShots,
    #[error("key establishment failed: {0}")]
    Envelope(#[from] EnvelopeError),
    #[error("cannot connect to {addr}: {source} (retry with the same bundle; the idempotency token makes retries safe)")]
    Connect {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error [{code}]: {message}")]
    Server { code: String, message: String },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("unexpected {got} reply (expected {expected})")]
    UnexpectedReply {
        expected: &'static str,
        got: &'static str,
    },
    #[error(transparent)]
    Secrets(#[from] SecretStoreError),
    #[error("output metadata invalid for this job")]
    OutputMetadataInvalid,
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("{0} is not a bundle file")]
    NotABundle(String),
    #[error("{0} is not a results file")]
    NotAResultsFile(String),
}

impl ClientError {
    /// Process exit code contract: 0 ok, 1 usage/input, 2 server or
    /// transport, 3 authentication or integrity.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Parse(_)
            | ClientError::Validation(_)
            | ClientError::UnknownBackend(_)
            | ClientError::ZeroShots
            | ClientError::NotABundle(_)
            | ClientError::NotAResultsFile(_) => 1,
            ClientError::Server { code, .. } if code == error_code::UNAUTHORIZED => 3,
            ClientError::OutputMetadataInvalid | ClientError::Integrity(_) => 3,
            ClientError::Secrets(SecretStoreError::CannotOpen { .. })
            | ClientError::Secrets(SecretStoreError::PassphraseRequired) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrepareArgs {
    pub circuit_path: PathBuf,
    pub backend_id: String,
    pub scheme: SchemeLabel,
    pub shots: u32,
    pub dummy_count: Option<u32>,
    pub seed: Option<u64>,
    pub out_path: PathBuf,
}

#[derive(Debug)]
pub struct PrepareOutcome {
    pub bundle_path: PathBuf,
    pub record_path: PathBuf,
    pub idempotency_token: String,
    pub dummy_count: usize,
    pub swap_enabled: bool,
}

/// Parses and validates the circuit, lowers it, obfuscates per the scheme,
/// seals the inverting metadata for the target backend, and writes the
/// submission bundle plus the local secret record. With a fixed seed the
/// bundle bytes are bit-reproducible.
pub fn prepare(
    config: &ClientConfig,
    secrets: &SecretStore,
    args: &PrepareArgs,
) -> Result<PrepareOutcome, ClientError> {
    let text = std::fs::read_to_string(&args.circuit_path).map_err(|source| ClientError::Io {
        path: args.circuit_path.display().to_string(),
        source,
    })?;
    let circuit = parse_circuit(&text)?;
    let backend = config
        .backend(&args.backend_id)
        .ok_or_else(|| ClientError::UnknownBackend(args.backend_id.clone()))?;
    let violations = validate_circuit(&circuit, backend);
    if !violations.is_empty() {
        return Err(ClientError::Validation(violations));
    }
    if args.shots == 0 {
        return Err(ClientError::ZeroShots);
    }

    let mut rng = match args.seed {
        Some(seed) => ChaCha12Rng::seed_from_u64(seed),
        None => ChaCha12Rng::from_rng(&mut rand::rng()),
    };

    let params = ObfuscationParams::for_scheme(args.scheme, circuit.num_qubits, args.dummy_count);
    let schedule = lower_to_schedule(&circuit);
    let obf = obfuscate_schedule(&schedule, &params, &mut rng)
        .expect("scheme parameters are well-formed");

    let response_key = crate::envelope::SymmetricKey::generate(&mut rng);
    let backend_public = config.registry.agreement_public(&backend.metadata_public_key)?;
    let (agreement_key, ephemeral) =
        establish_backend_key(backend_public, &backend.backend_id, &mut rng)?;
    let metadata = build_metadata(
        obf.dummy_indices.clone(),
        obf.permutation,
        response_key.clone(),
        backend,
        &obf.schedule,
    )
    .expect("obfuscation output is self-consistent");
    let sealed_metadata = seal(
        &metadata.to_bytes(),
        &agreement_key,
        &backend.metadata_public_key,
        &metadata.binding.associated_data(),
        &mut rng,
    );

    let token_bytes: [u8; 16] = rng.random();
    let idempotency_token = hex::encode(token_bytes);

    let request = SubmitRequest {
        idempotency_token: idempotency_token.clone(),
        client_id: config.client_id.clone(),
        backend_id: backend.backend_id.clone(),
        schedule: obf.schedule,
        sealed_metadata,
        client_ephemeral_public: ephemeral.public_bytes().to_vec(),
        shots: args.shots,
    };
    let bundle_bytes = Message::Submit(request).to_bytes();
    std::fs::write(&args.out_path, &bundle_bytes).map_err(|source| ClientError::Io {
        path: args.out_path.display().to_string(),
        source,
    })?;

    let record = LocalSecretRecord {
        job_id: None,
        idempotency_token: idempotency_token.clone(),
        backend_id: backend.backend_id.clone(),
        scheme: args.scheme,
        shots: args.shots,
        response_key,
        original_circuit_digest: circuit_digest(&circuit),
        client_ephemeral_secret: ephemeral,
    };
    let record_path = secrets.save_by_token(&record, &mut rng)?;

    Ok(PrepareOutcome {
        bundle_path: args.out_path.clone(),
        record_path,
        idempotency_token,
        dummy_count: obf.dummy_indices.len(),
        swap_enabled: params.enable_swap,
    })
}

pub fn read_bundle(path: &Path) -> Result<SubmitRequest, ClientError> {
    let bytes = std::fs::read(path).map_err(|source| ClientError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match Message::from_bytes(&bytes)? {
        Message::Submit(request) => Ok(request),
        _ => Err(ClientError::NotABundle(path.display().to_string())),
    }
}

/// Submits a prepared bundle. On ACCEPTED the local secret record gains the
/// job id; resubmitting the same bundle is idempotent on the server.
pub fn submit(
    config: &ClientConfig,
    secrets: &SecretStore,
    bundle_path: &Path,
    server_addr: &str,
) -> Result<JobId, ClientError> {
    let request = read_bundle(bundle_path)?;
    let mut channel = connect(config, server_addr)?;
    let mut rng = rand::rng();
    let reply = channel.request(&Message::Submit(request.clone()), &mut rng)?;
    match reply {
        Message::Accepted { job_id } => {
            // attach the job id to the retained secrets
            if let Ok(mut record) = secrets.load_by_token(&request.idempotency_token) {
                record.job_id = Some(job_id.clone());
                secrets.save_by_job(&record, &mut rng)?;
            }
            Ok(job_id)
        }
        Message::Error { code, message } => Err(ClientError::Server { code, message }),
        other => Err(ClientError::UnexpectedReply {
            expected: "ACCEPTED",
            got: other.type_name(),
        }),
    }
}

#[derive(Debug)]
pub enum FetchOutcome {
    /// Results arrived and were written (bitstrings and sealed output
    /// metadata together) to the given path.
    Written { path: PathBuf, shot_count: usize },
    /// The job has not completed; nothing was written.
    Pending(JobState),
}

/// Fetches a job's results. A Done job yields the raw results file; any
/// other state is reported without writing.
pub fn fetch(
    config: &ClientConfig,
    job_id: &JobId,
    server_addr: &str,
    out_path: &Path,
) -> Result<FetchOutcome, ClientError> {
    let mut channel = connect(config, server_addr)?;
    let mut rng = rand::rng();
    let reply = channel.request(
        &Message::Fetch {
            job_id: job_id.clone(),
        },
        &mut rng,
    )?;
    match reply {
        Message::Results {
            bitstrings,
            sealed_output_metadata,
        } => {
            let shot_count = bitstrings.len();
            write_results_file(out_path, job_id, &bitstrings, &sealed_output_metadata)?;
            Ok(FetchOutcome::Written {
                path: out_path.to_path_buf(),
                shot_count,
            })
        }
        Message::State { state } => Ok(FetchOutcome::Pending(state)),
        Message::Error { code, message } => Err(ClientError::Server { code, message }),
        other => Err(ClientError::UnexpectedReply {
            expected: "RESULTS or STATE",
            got: other.type_name(),
        }),
    }
}

/// Recovers one shot: the true outcome is the flipped outcome XOR its mask.
pub fn recover_bits(flipped: &BitString, mask: &BitString) -> Result<BitString, ModelError> {
    flipped.xor(mask)
}

#[derive(Debug)]
pub struct RecoverOutcome {
    pub job_id: JobId,
    pub per_shot: Vec<BitString>,
    /// Aggregated counts, sorted by descending frequency, ties broken
    /// lexicographically.
    pub counts: Vec<(BitString, u64)>,
}

/// Opens the sealed output metadata with the job's response key and undoes
/// the per-shot flips, yielding true outcomes and aggregated counts.
pub fn recover(secrets: &SecretStore, results_path: &Path) -> Result<RecoverOutcome, ClientError> {
    let (job_id, flipped, sealed_output) = read_results_file(results_path)?;
    let record = secrets.load_by_job(&job_id)?;
    let plaintext = open(
        &sealed_output,
        &record.response_key,
        job_id.as_str().as_bytes(),
    )
    .map_err(|_| ClientError::OutputMetadataInvalid)?;
    let metadata = OutputMetadata::from_bytes(&plaintext)
        .map_err(|_| ClientError::OutputMetadataInvalid)?;

    if metadata.flip_masks.len() != flipped.len() {
        return Err(ClientError::Integrity(format!(
            "shot-count mismatch: {} bitstrings but {} flip masks",
            flipped.len(),
            metadata.flip_masks.len()
        )));
    }
    let mut per_shot = Vec::with_capacity(flipped.len());
    for (f, m) in flipped.iter().zip(&metadata.flip_masks) {
        per_shot.push(
            recover_bits(f, m).map_err(|e| ClientError::Integrity(e.to_string()))?,
        );
    }

    let mut tally: BTreeMap<BitString, u64> = BTreeMap::new();
    for shot in &per_shot {
        *tally.entry(*shot).or_insert(0) += 1;
    }
    let mut counts: Vec<(BitString, u64)> = tally.into_iter().collect();
    counts.sort_by(|(a_bits, a_count), (b_bits, b_count)| {
        b_count.cmp(a_count).then_with(|| a_bits.cmp(b_bits))
    });

    Ok(RecoverOutcome {
        job_id,
        per_shot,
        counts,
    })
}

fn connect(config: &ClientConfig, server_addr: &str) -> Result<SecureChannel<TcpStream>, ClientError> {
    let stream = TcpStream::connect(server_addr).map_err(|source| ClientError::Connect {
        addr: server_addr.to_string(),
        source,
    })?;
    Ok(SecureChannel::new(
        stream,
        config.session_key.clone(),
        config.session_key_id(),
    ))
}

pub fn write_results_file(
    path: &Path,
    job_id: &JobId,
    bitstrings: &[BitString],
    sealed_output_metadata: &SealedBlob,
) -> Result<(), ClientError> {
    let mut fields = crate::wire::FieldWriter::new();
    fields.str(field_tag::JOB_ID, job_id.as_str());
    fields.bytes(
        field_tag::BITSTRINGS,
        &crate::wire::encode_bitstring_lines(bitstrings),
    );
    fields.bytes(
        field_tag::SEALED_OUTPUT_METADATA,
        &sealed_output_metadata.to_bytes(),
    );
    std::fs::write(path, fields.finish(msg_type::RESULTS_FILE)).map_err(|source| {
        ClientError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

pub fn read_results_file(
    path: &Path,
) -> Result<(JobId, Vec<BitString>, SealedBlob), ClientError> {
    let bytes = std::fs::read(path).map_err(|source| ClientError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let (ty, fields) = crate::wire::parse_tagged(&bytes)?;
    if ty != msg_type::RESULTS_FILE {
        return Err(ClientError::NotAResultsFile(path.display().to_string()));
    }
    let get = |tag: u8| -> Result<&[u8], ClientError> {
        fields
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| ClientError::NotAResultsFile(path.display().to_string()))
    };
    let job_id = JobId::new(
        String::from_utf8(get(field_tag::JOB_ID)?.to_vec())
            .map_err(|_| ClientError::NotAResultsFile(path.display().to_string()))?,
    );
    let bitstrings = crate::wire::decode_bitstring_lines(get(field_tag::BITSTRINGS)?)?;
    let sealed = SealedBlob::from_bytes(get(field_tag::SEALED_OUTPUT_METADATA)?)
        .map_err(WireError::Codec)?;
    Ok((job_id, bitstrings, sealed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::secrets::Protection;
    use crate::envelope::{KeyEntry, KeyId, KeyRegistry, SymmetricKey};
    use crate::model::BackendDescriptor;
    use tempfile::tempdir;

    fn test_config(dir: &Path) -> (ClientConfig, crate::envelope::BackendStaticSecret) {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let static_secret = crate::envelope::BackendStaticSecret::generate(&mut rng);
        let mut registry = KeyRegistry::new();
        registry.insert(
            KeyId::backend_metadata("sim-a"),
            KeyEntry::AgreementPublic(static_secret.public()),
        );
        let _ = dir;
        (
            ClientConfig {
                client_id: "alice".into(),
                session_key: SymmetricKey::from_bytes([5; 32]),
                server_addr: None,
                backends: vec![BackendDescriptor::simulated("sim-a", 5)],
                registry,
            },
            static_secret,
        )
    }

    fn write_bell(dir: &Path) -> PathBuf {
        let path = dir.join("bell.qc");
        std::fs::write(&path, "qubits 2\nh 0\ncx 0 1\nmeasure all\n").unwrap();
        path
    }

    #[test]
    fn prepare_is_deterministic_under_seed() {
        let dir = tempdir().unwrap();
        let (config, _) = test_config(dir.path());
        let secrets = SecretStore::new(dir.path().join("secrets"), Protection::Insecure);
        let circuit_path = write_bell(dir.path());
        let args = |out: &str| PrepareArgs {
            circuit_path: circuit_path.clone(),
            backend_id: "sim-a".into(),
            scheme: SchemeLabel::Combined,
            shots: 4096,
            dummy_count: None,
            seed: Some(77),
            out_path: dir.path().join(out),
        };
        prepare(&config, &secrets, &args("a.bundle")).unwrap();
        prepare(&config, &secrets, &args("b.bundle")).unwrap();
        let a = std::fs::read(dir.path().join("a.bundle")).unwrap();
        let b = std::fs::read(dir.path().join("b.bundle")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dummy_only_with_zero_dummies_is_plain_lowering() {
        let dir = tempdir().unwrap();
        let (config, _) = test_config(dir.path());
        let secrets = SecretStore::new(dir.path().join("secrets"), Protection::Insecure);
        let circuit_path = write_bell(dir.path());
        let out = dir.path().join("bundle");
        prepare(
            &config,
            &secrets,
            &PrepareArgs {
                circuit_path,
                backend_id: "sim-a".into(),
                scheme: SchemeLabel::DummyOnly,
                shots: 4,
                dummy_count: Some(0),
                seed: Some(1),
                out_path: out.clone(),
            },
        )
        .unwrap();
        let request = read_bundle(&out).unwrap();
        let circuit = parse_circuit("qubits 2\nh 0\ncx 0 1\nmeasure all\n").unwrap();
        assert_eq!(request.schedule, lower_to_schedule(&circuit));
        assert_eq!(request.shots, 4);
    }

    #[test]
    fn parse_error_names_line() {
        let dir = tempdir().unwrap();
        let (config, _) = test_config(dir.path());
        let secrets = SecretStore::new(dir.path().join("secrets"), Protection::Insecure);
        let circuit_path = dir.path().join("broken.qc");
        std::fs::write(&circuit_path, "qubits 2\ncx 0\nmeasure all\n").unwrap();
        let err = prepare(
            &config,
            &secrets,
            &PrepareArgs {
                circuit_path,
                backend_id: "sim-a".into(),
                scheme: SchemeLabel::Combined,
                shots: 1,
                dummy_count: None,
                seed: None,
                out_path: dir.path().join("bundle"),
            },
        )
        .unwrap_err();
        match err {
            ClientError::Parse(p) => assert_eq!(p.line, 2),
            other => panic!("expected parse error, got {other}"),
        }
        assert_eq!(ClientError::Parse(ParseError { line: 2, message: String::new() }).exit_code(), 1);
    }

    #[test]
    fn unknown_backend_rejected() {
        let dir = tempdir().unwrap();
        let (config, _) = test_config(dir.path());
        let secrets = SecretStore::new(dir.path().join("secrets"), Protection::Insecure);
        let circuit_path = write_bell(dir.path());
        let err = prepare(
            &config,
            &secrets,
            &PrepareArgs {
                circuit_path,
                backend_id: "nope".into(),
                scheme: SchemeLabel::Combined,
                shots: 1,
                dummy_count: None,
                seed: None,
                out_path: dir.path().join("bundle"),
            },
        )
        .unwrap_err();
        assert!(matches!(err, ClientError::UnknownBackend(_)));
    }

    #[test]
    fn recover_bits_examples() {
        let f: BitString = "0110".parse().unwrap();
        let m: BitString = "0011".parse().unwrap();
        assert_eq!(recover_bits(&f, &m).unwrap().to_string(), "0101");
        let zeros = BitString::zeros(4);
        assert_eq!(recover_bits(&f, &zeros).unwrap(), f);
        let twice = recover_bits(&recover_bits(&f, &m).unwrap(), &m).unwrap();
        assert_eq!(twice, f);
        assert!(recover_bits(&f, &"01".parse().unwrap()).is_err());
    }

    #[test]
    fn results_file_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("out.results");
        let job_id = JobId::new("job-00000003");
        let bits: Vec<BitString> = vec!["01".parse().unwrap(), "10".parse().unwrap()];
        let blob = SealedBlob {
            key_id: KeyId::response(job_id.as_str()),
            nonce: [2; 12],
            ciphertext: vec![1, 2, 3],
        };
        write_results_file(&path, &job_id, &bits, &blob).unwrap();
        let (j, b, s) = read_results_file(&path).unwrap();
        assert_eq!(j, job_id);
        assert_eq!(b, bits);
        assert_eq!(s, blob);
    }
}
