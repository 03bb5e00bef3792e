//! Command-line front end: the client workflow (prepare, submit, fetch,
//! recover), the service (`serve`), and key generation for configs.
//!
//! Exit codes: 0 ok, 1 usage or input error, 2 server/transport error,
//! 3 authentication or integrity failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use qtee_qos::client::{
    fetch, load_client_config, prepare, recover, submit, ClientConfig, ClientError, FetchOutcome,
    PrepareArgs, Protection, SecretStore,
};
use qtee_qos::controller::{SeedMode, TrustedController};
use qtee_qos::envelope::BackendStaticSecret;
use qtee_qos::keyfiles::{read_key32, write_key32};
use qtee_qos::obfuscation::SchemeLabel;
use qtee_qos::service::{load_server_config, start_server, JobId, TrustBoundary};

#[derive(Parser)]
#[command(
    name = "qtee",
    version,
    about = "Submit obfuscated quantum circuits to a simulated trusted-execution service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheduling service with one trusted controller per backend.
    Serve {
        /// Server TOML config (backends, clients, storage, listen address).
        #[arg(long)]
        config: PathBuf,
        /// Derive controller randomness from this base seed (test-harness
        /// mode; omit for per-job system entropy).
        #[arg(long)]
        base_seed: Option<u64>,
    },
    /// Parse, validate, obfuscate, and seal a circuit into a submission
    /// bundle, retaining the recovery secrets locally.
    Prepare {
        /// Circuit text file (`qubits N`, instructions, `measure all`).
        #[arg(long)]
        circuit: PathBuf,
        /// Target backend id from the client config.
        #[arg(long)]
        backend: String,
        /// Obfuscation scheme: dummy-only, swap-only, or combined.
        #[arg(long)]
        scheme: String,
        /// Number of measurement shots to request.
        #[arg(long)]
        shots: u32,
        /// Dummy slots to insert (default: 3 per qubit).
        #[arg(long)]
        dummy_count: Option<u32>,
        /// Seed for reproducible bundles (omit for fresh entropy).
        #[arg(long)]
        seed: Option<u64>,
        /// Output bundle path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        client: ClientOpts,
        #[command(flatten)]
        secrets: SecretOpts,
    },
    /// Send a prepared bundle to the service and print the job id.
    Submit {
        /// Bundle file from `prepare`.
        #[arg(long)]
        bundle: PathBuf,
        /// Server address (host:port).
        #[arg(long, env = "QTEE_SERVER")]
        server: Option<String>,
        #[command(flatten)]
        client: ClientOpts,
        #[command(flatten)]
        secrets: SecretOpts,
    },
    /// Fetch a job's raw results (flipped bitstrings plus sealed output
    /// metadata) into one file, or print its state if not done.
    Fetch {
        /// Job id printed by `submit`.
        #[arg(long)]
        job: String,
        #[arg(long, env = "QTEE_SERVER")]
        server: Option<String>,
        /// Output results path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        client: ClientOpts,
    },
    /// Undo the output randomization of a fetched results file and print
    /// true counts.
    Recover {
        /// Raw results file from `fetch`.
        #[arg(long)]
        results: PathBuf,
        /// Write the recovered per-shot bitstrings here, one per line.
        #[arg(long)]
        shots_out: Option<PathBuf>,
        #[command(flatten)]
        secrets: SecretOpts,
    },
    /// Generate key material for server and client configs.
    Keygen {
        #[command(subcommand)]
        target: KeygenTarget,
    },
}

#[derive(clap::Args)]
struct ClientOpts {
    /// Client TOML config (identity, session key, backends).
    #[arg(long, env = "QTEE_CLIENT_CONFIG")]
    config: PathBuf,
}

#[derive(clap::Args)]
struct SecretOpts {
    /// Directory holding per-job secret records.
    #[arg(long, env = "QTEE_SECRETS_DIR", default_value = "qtee-secrets")]
    secrets: PathBuf,
    /// Store secret records in plaintext instead of under a passphrase.
    #[arg(long)]
    insecure_store: bool,
}

#[derive(Subcommand)]
enum KeygenTarget {
    /// Static agreement keypair for a backend: writes `<id>.secret` (server
    /// side) and `<id>.public` (ships in client configs).
    Backend {
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "keys")]
        out_dir: PathBuf,
    },
    /// Transport session key for a client: writes `<client>.session` for
    /// both the client and server configs.
    Session {
        #[arg(long)]
        client: String,
        #[arg(long, default_value = "keys")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints help/version on stdout with status 0
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}")]
    Server(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Client(err) => err.exit_code(),
            CliError::Server(_) => 2,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve { config, base_seed } => serve(&config, base_seed),
        Command::Prepare {
            circuit,
            backend,
            scheme,
            shots,
            dummy_count,
            seed,
            out,
            client,
            secrets,
        } => {
            let scheme: SchemeLabel = scheme.parse().map_err(CliError::Usage)?;
            let config = load_config(&client)?;
            let store = secret_store(&secrets)?;
            let outcome = prepare(
                &config,
                &store,
                &PrepareArgs {
                    circuit_path: circuit,
                    backend_id: backend,
                    scheme,
                    shots,
                    dummy_count,
                    seed,
                    out_path: out,
                },
            )?;
            println!(
                "bundle {} ({} dummy slots, swap {})",
                outcome.bundle_path.display(),
                outcome.dummy_count,
                if outcome.swap_enabled { "on" } else { "off" }
            );
            println!("secrets {}", outcome.record_path.display());
            Ok(())
        }
        Command::Submit {
            bundle,
            server,
            client,
            secrets,
        } => {
            let config = load_config(&client)?;
            let store = secret_store(&secrets)?;
            let addr = server_addr(server, &config)?;
            let job_id = submit(&config, &store, &bundle, &addr)?;
            println!("{job_id}");
            Ok(())
        }
        Command::Fetch {
            job,
            server,
            out,
            client,
        } => {
            let config = load_config(&client)?;
            let addr = server_addr(server, &config)?;
            match fetch(&config, &JobId::new(job), &addr, &out)? {
                FetchOutcome::Written { path, shot_count } => {
                    println!("{} ({shot_count} shots)", path.display());
                }
                FetchOutcome::Pending(state) => {
                    println!("{state}");
                }
            }
            Ok(())
        }
        Command::Recover {
            results,
            shots_out,
            secrets,
        } => {
            let store = secret_store(&secrets)?;
            let outcome = recover(&store, &results)?;
            if let Some(path) = shots_out {
                let lines: String = outcome
                    .per_shot
                    .iter()
                    .map(|b| format!("{b}\n"))
                    .collect();
                std::fs::write(&path, lines).map_err(|source| {
                    CliError::Client(ClientError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                })?;
            }
            for (bits, count) in &outcome.counts {
                println!("{bits} {count}");
            }
            Ok(())
        }
        Command::Keygen { target } => keygen(target),
    }
}

fn load_config(opts: &ClientOpts) -> Result<ClientConfig, CliError> {
    load_client_config(&opts.config).map_err(|e| CliError::Usage(e.to_string()))
}

fn secret_store(opts: &SecretOpts) -> Result<SecretStore, CliError> {
    let protection = match std::env::var("QTEE_PASSPHRASE") {
        Ok(passphrase) if !passphrase.is_empty() => Protection::Passphrase(passphrase),
        _ if opts.insecure_store => Protection::Insecure,
        _ => {
            return Err(CliError::Usage(
                "set QTEE_PASSPHRASE to protect secret records, or pass --insecure-store to \
                 acknowledge plaintext storage"
                    .into(),
            ))
        }
    };
    Ok(SecretStore::new(&opts.secrets, protection))
}

fn server_addr(flag: Option<String>, config: &ClientConfig) -> Result<String, CliError> {
    flag.or_else(|| config.server_addr.clone()).ok_or_else(|| {
        CliError::Usage("no server address: pass --server, set QTEE_SERVER, or configure server_addr".into())
    })
}

fn serve(config_path: &PathBuf, base_seed: Option<u64>) -> Result<(), CliError> {
    let config = load_server_config(config_path).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut boundaries: Vec<Arc<dyn TrustBoundary>> = Vec::new();
    for entry in &config.backends {
        let secret = BackendStaticSecret::from_bytes(
            read_key32(&entry.secret_key_file).map_err(|e| CliError::Usage(e.to_string()))?,
        );
        let mut controller = TrustedController::new(entry.backend_id.clone(), secret);
        if let Some(base) = base_seed {
            controller = controller.with_seed_mode(SeedMode::Deterministic(base));
        }
        boundaries.push(Arc::new(controller));
    }
    let handle = start_server(&config, boundaries).map_err(|e| CliError::Server(e.to_string()))?;
    println!("listening on {}", handle.local_addr());
    for entry in &config.backends {
        println!("backend {} ({} qubits)", entry.backend_id, entry.num_qubits);
    }
    loop {
        std::thread::park();
    }
}

fn keygen(target: KeygenTarget) -> Result<(), CliError> {
    let mut rng = ChaCha12Rng::from_rng(&mut rand::rng());
    match target {
        KeygenTarget::Backend { id, out_dir } => {
            let secret = BackendStaticSecret::generate(&mut rng);
            let secret_path = out_dir.join(format!("{id}.secret"));
            let public_path = out_dir.join(format!("{id}.public"));
            write_key32(&secret_path, &secret.to_bytes())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            write_key32(&public_path, secret.public().as_bytes())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            println!("{}", secret_path.display());
            println!("{}", public_path.display());
        }
        KeygenTarget::Session { client, out_dir } => {
            let key = qtee_qos::envelope::SymmetricKey::generate(&mut rng);
            let path = out_dir.join(format!("{client}.session"));
            write_key32(&path, key.as_bytes()).map_err(|e| CliError::Usage(e.to_string()))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
