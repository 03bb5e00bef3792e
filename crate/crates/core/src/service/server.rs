//! TCP front end: accepts client connections, opens sealed frames with the
//! per-client session key, and answers SUBMIT/STATUS/FETCH. One executor
//! lane thread per backend drains the queues into the trust boundaries.

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use thiserror::Error;

use crate::envelope::{KeyId, SymmetricKey};
use crate::service::config::ResolvedServerConfig;
use crate::service::qos::{run_executor_lane, FetchError, FetchResponse, QosService, SubmitError, TrustBoundary};
use crate::service::store::{JobStore, StoreError};
use crate::wire::{error_code, peek_key_id, read_frame, write_frame, Message, SessionCrypto};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("no trust boundary provided for backend `{0}`")]
    MissingBoundary(String),
}

type SessionKeys = BTreeMap<KeyId, (String, SymmetricKey)>;

/// A running server: owns the accept loop and executor lanes until shutdown.
pub struct ServerHandle {
    local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_handle: Option<JoinHandle<()>>,
    lane_handles: Vec<JoinHandle<()>>,
    service: Arc<QosService>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn service(&self) -> Arc<QosService> {
        Arc::clone(&self.service)
    }

    /// Stops accepting, drains the executor lanes, and joins all threads.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // nudge the blocking accept() so it observes the flag
        let _ = TcpStream::connect(self.local_addr);
        if let Some(handle) = self.accept_handle.take() {
            let _ = handle.join();
        }
        for handle in self.lane_handles.drain(..) {
            let _ = handle.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if !self.shutdown.load(Ordering::SeqCst) {
            self.stop();
        }
    }
}

/// Opens (or recovers) the store, starts one executor lane per backend, and
/// begins accepting connections. Every configured backend must come with a
/// matching trust boundary.
pub fn start_server(
    config: &ResolvedServerConfig,
    boundaries: Vec<Arc<dyn TrustBoundary>>,
) -> Result<ServerHandle, ServeError> {
    let store = JobStore::open(&config.storage_path)?;
    let backends = config.backends.iter().map(|b| b.info()).collect();
    let service = Arc::new(QosService::new(store, backends));

    for entry in &config.backends {
        if !boundaries.iter().any(|b| b.backend_id() == entry.backend_id) {
            return Err(ServeError::MissingBoundary(entry.backend_id.clone()));
        }
    }

    let listener = TcpListener::bind(&config.listen_addr).map_err(|source| ServeError::Bind {
        addr: config.listen_addr.clone(),
        source,
    })?;
    let local_addr = listener.local_addr().expect("bound listener has an address");
    let shutdown = Arc::new(AtomicBool::new(false));

    let lane_handles = boundaries
        .into_iter()
        .map(|boundary| {
            let service = Arc::clone(&service);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || run_executor_lane(&service, &boundary, &shutdown))
        })
        .collect();

    let accept_handle = {
        let service = Arc::clone(&service);
        let shutdown = Arc::clone(&shutdown);
        let session_keys = Arc::new(config.session_keys.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let service = Arc::clone(&service);
                let session_keys = Arc::clone(&session_keys);
                std::thread::spawn(move || run_session(stream, service, session_keys));
            }
        })
    };

    Ok(ServerHandle {
        local_addr,
        shutdown,
        accept_handle: Some(accept_handle),
        lane_handles,
        service,
    })
}

/// One client connection. The first frame's key id fixes the session
/// identity; a frame that fails to open ends the connection — there is no
/// secure way to answer it.
fn run_session(mut stream: TcpStream, service: Arc<QosService>, session_keys: Arc<SessionKeys>) {
    let mut session: Option<(String, SessionCrypto)> = None;
    let mut rng = rand::rng();
    loop {
        let Ok(body) = read_frame(&mut stream) else {
            return;
        };
        let Ok(key_id) = peek_key_id(&body) else {
            return;
        };
        if session.is_none() {
            let Some((client_id, key)) = session_keys.get(&key_id) else {
                return; // unknown session key
            };
            session = Some((
                client_id.clone(),
                SessionCrypto::new(key.clone(), key_id.clone()),
            ));
        }
        let (client_id, crypto) = session.as_mut().expect("session initialized above");
        let Ok(message) = crypto.open_message(&body) else {
            return;
        };
        let reply = handle_message(&service, client_id, message);
        let frame = crypto.seal_message(&reply, &mut rng);
        if write_frame(&mut stream, &frame).is_err() {
            return;
        }
    }
}

fn handle_message(service: &QosService, session_client: &str, message: Message) -> Message {
    match message {
        Message::Submit(request) => {
            if request.client_id != session_client {
                return Message::Error {
                    code: error_code::UNAUTHORIZED.into(),
                    message: "submission client_id does not match the session".into(),
                };
            }
            match service.handle_submit(request) {
                Ok(outcome) => Message::Accepted {
                    job_id: outcome.job_id().clone(),
                },
                Err(err) => Message::Error {
                    code: submit_error_code(&err).into(),
                    message: err.to_string(),
                },
            }
        }
        Message::Status { job_id } => match service.handle_status(&job_id, session_client) {
            Ok(state) => Message::State { state },
            Err(err) => fetch_error_reply(err),
        },
        Message::Fetch { job_id } => match service.handle_fetch(&job_id, session_client) {
            Ok(FetchResponse::Results {
                bitstrings,
                sealed_output_metadata,
            }) => Message::Results {
                bitstrings,
                sealed_output_metadata,
            },
            Ok(FetchResponse::State(state)) => Message::State { state },
            Err(err) => fetch_error_reply(err),
        },
        other => Message::Error {
            code: error_code::BAD_REQUEST.into(),
            message: format!("unexpected {} message", other.type_name()),
        },
    }
}

fn submit_error_code(err: &SubmitError) -> &'static str {
    match err {
        SubmitError::UnknownBackend(_) => error_code::UNKNOWN_BACKEND,
        SubmitError::MalformedSchedule(_) => error_code::MALFORMED_SCHEDULE,
        SubmitError::ZeroShots => error_code::BAD_REQUEST,
        SubmitError::Store(_) => "internal",
    }
}

fn fetch_error_reply(err: FetchError) -> Message {
    let code = match err {
        FetchError::UnknownJob(_) => error_code::UNKNOWN_JOB,
        FetchError::Unauthorized(_) => error_code::UNAUTHORIZED,
    };
    Message::Error {
        code: code.into(),
        message: err.to_string(),
    }
}
