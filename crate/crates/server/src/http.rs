//! HTTP binding of the protocol.
//!
//! | route                 | request             | reply             |
//! |-----------------------|---------------------|-------------------|
//! | `POST /v1/register`     | `register-request`  | `register-result` |
//! | `POST /v1/challenge`    | `challenge-request` | `challenge-reply` |
//! | `POST /v1/authenticate` | `auth-submission`   | `auth-result`     |
//! | `POST /v1/poll`         | `poll-request`      | `poll-reply`      |
//! | `POST /v1/verify`       | `verify-request`    | `verify-result`   |
//! | `GET /v1/server-key`    |                     | PEM text          |
//!
//! Successful replies are `200`; errors are an `error` message with a 4xx
//! status derived from the code (see [`status_for`]).

use std::future::Future;
use std::net::{SocketAddr, TcpListener as StdTcpListener};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::serve::ListenerExt;
use axum::Router;
use keyauth_core::protocol::{decode_as, ErrorCode, ErrorReply, MessageKind};
use keyauth_core::{encode_message, Message};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::rate_limit::RateLimiter;
use crate::service::{KeyAuthService, ServiceResult};

const SWEEP_INTERVAL: Duration = Duration::from_secs(1);

pub fn status_for(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::MalformedJson
        | ErrorCode::UnknownVersion
        | ErrorCode::UnknownType
        | ErrorCode::SchemaViolation
        | ErrorCode::IdFormat
        | ErrorCode::InvalidKey => StatusCode::BAD_REQUEST,
        ErrorCode::Unauthorized | ErrorCode::BadSignature => StatusCode::UNAUTHORIZED,
        ErrorCode::UnknownUser | ErrorCode::UnknownChallenge | ErrorCode::UnknownKey => {
            StatusCode::NOT_FOUND
        }
        ErrorCode::Expired | ErrorCode::AlreadyConsumed => StatusCode::CONFLICT,
        ErrorCode::CryptoFailure => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

#[derive(Clone)]
struct AppState {
    service: Arc<KeyAuthService>,
    limiter: Arc<RateLimiter>,
}

fn json_response(status: StatusCode, message: &Message) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], encode_message(message)).into_response()
}

fn error_response(reply: ErrorReply) -> Response {
    json_response(status_for(reply.code), &Message::Error(reply))
}

/// Decodes the request body, runs `op` off the async executor, and encodes
/// the outcome.
async fn dispatch<Req, Resp, F>(service: Arc<KeyAuthService>, body: Bytes, op: F) -> Response
where
    Req: TryFrom<Message, Error = Message> + MessageKind + Send + 'static,
    Resp: Into<Message>,
    F: FnOnce(&KeyAuthService, Req) -> ServiceResult<Resp> + Send + 'static,
    Resp: Send + 'static,
{
    let request = match decode_as::<Req>(&body) {
        Ok(r) => r,
        Err(e) => return error_response(e.into()),
    };
    match tokio::task::spawn_blocking(move || op(&service, request)).await {
        Ok(Ok(reply)) => json_response(StatusCode::OK, &reply.into()),
        Ok(Err(reply)) => error_response(reply),
        Err(join) => {
            tracing::error!(error = %join, "request handler panicked");
            error_response(ErrorReply::new(ErrorCode::CryptoFailure, "internal error"))
        }
    }
}

async fn register(State(app): State<AppState>, body: Bytes) -> Response {
    dispatch(app.service, body, |s, req| s.register_key(req)).await
}

async fn challenge(
    State(app): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    body: Bytes,
) -> Response {
    if !app.limiter.check(peer.ip(), app.service.now()) {
        let reply = ErrorReply::new(ErrorCode::Unauthorized, "challenge rate limit exceeded");
        return json_response(StatusCode::TOO_MANY_REQUESTS, &Message::Error(reply));
    }
    dispatch(app.service, body, |s, req| s.issue_challenge(&req)).await
}

async fn authenticate(State(app): State<AppState>, body: Bytes) -> Response {
    dispatch(app.service, body, |s, req| s.submit_response(&req)).await
}

async fn poll(State(app): State<AppState>, body: Bytes) -> Response {
    dispatch(app.service, body, |s, req| s.poll_challenge(&req)).await
}

async fn verify(State(app): State<AppState>, body: Bytes) -> Response {
    dispatch(app.service, body, |s, req| Ok(s.verify_token(&req))).await
}

async fn server_key(State(app): State<AppState>) -> Response {
    (
        [(header::CONTENT_TYPE, "application/x-pem-file")],
        app.service.server_key_pem().to_owned(),
    )
        .into_response()
}

pub fn router(service: Arc<KeyAuthService>) -> Router {
    let limiter = Arc::new(RateLimiter::new(service.config().challenge_rate_limit));
    router_with(AppState { service, limiter })
}

fn router_with(state: AppState) -> Router {
    Router::new()
        .route("/v1/register", post(register))
        .route("/v1/challenge", post(challenge))
        .route("/v1/authenticate", post(authenticate))
        .route("/v1/poll", post(poll))
        .route("/v1/verify", post(verify))
        .route("/v1/server-key", get(server_key))
        .with_state(state)
}

/// Serves until `shutdown` resolves, sweeping expired challenges once a
/// second. `connections` counts accepted TCP connections.
pub async fn serve(
    service: Arc<KeyAuthService>,
    listener: TcpListener,
    connections: Arc<AtomicUsize>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let limiter = Arc::new(RateLimiter::new(service.config().challenge_rate_limit));
    let app = router_with(AppState { service: service.clone(), limiter: limiter.clone() });

    let sweeper = tokio::spawn(async move {
        let mut ticks = tokio::time::interval(SWEEP_INTERVAL);
        loop {
            ticks.tick().await;
            let now = service.now();
            let expired = service.evict_expired(now);
            limiter.prune(now);
            if expired > 0 {
                tracing::debug!(expired, "expired pending challenges");
            }
        }
    });

    let listener = listener.tap_io(move |tcp| {
        connections.fetch_add(1, Ordering::Relaxed);
        let _ = tcp.set_nodelay(true);
    });
    let result = axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    result
}

/// A daemon running on its own thread and runtime, for embedding in other
/// programs and in tests.
pub struct ServerHandle {
    addr: SocketAddr,
    service: Arc<KeyAuthService>,
    connections: Arc<AtomicUsize>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(service: Arc<KeyAuthService>, addr: SocketAddr) -> std::io::Result<Self> {
        let std_listener = StdTcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let connections = Arc::new(AtomicUsize::new(0));
        let (tx, rx) = oneshot::channel();

        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .thread_name("keyauthd")
            .build()?;
        let svc = service.clone();
        let conns = connections.clone();
        let thread = std::thread::Builder::new().name("keyauthd-main".into()).spawn(move || {
            runtime.block_on(async move {
                let listener = TcpListener::from_std(std_listener).expect("registering listener");
                let shutdown = async {
                    let _ = rx.await;
                };
                if let Err(e) = serve(svc, listener, conns, shutdown).await {
                    tracing::error!(error = %e, "server stopped");
                }
            });
        })?;

        Ok(Self { addr, service, connections, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL, e.g. `http://127.0.0.1:40123`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn service(&self) -> &Arc<KeyAuthService> {
        &self.service
    }

    pub fn connections_accepted(&self) -> usize {
        self.connections.load(Ordering::Relaxed)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}
