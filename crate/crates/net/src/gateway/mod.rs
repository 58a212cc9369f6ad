//! The hub behind a WebSocket endpoint, plus the HTTP file store.
//!
//! ```text
//! GET  /ws?version=1.0          WebSocket, one JSON frame per text message
//! PUT|POST /fs/{owner}/{path}   upload (Bearer file_token of {owner})
//! GET  /fs/{owner}/{path}       download, single Range supported
//! DELETE /fs/{owner}/{path}     owner only
//! GET  /healthz                 200 "ok"
//! /app/...                      static web client, when configured
//! ```

mod files;
mod relay;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Query, State, WebSocketUpgrade};
use axum::response::Response;
use axum::routing::get;
use axum::serve::ListenerExt;
use axum::Router;
use concierge_core::protocol::PROTOCOL_VERSION;
use tokio::net::{TcpListener, ToSocketAddrs};
use tokio::task::JoinHandle;
use tokio_util::sync::CancellationToken;
use tokio_util::task::TaskTracker;
use tower_http::services::ServeDir;

pub use files::{parse_range, validate_path, ByteRange, FileEntry, MAX_SEGMENT_BYTES};
pub use relay::{
    CloseReason, Relay, CLOSE_GOING_AWAY, CLOSE_IDENTIFY_TIMEOUT, CLOSE_PROTOCOL_VIOLATION,
    CLOSE_SLOW_CONSUMER,
};

pub const DEFAULT_PORT: u16 = 8020;
pub const DEFAULT_QUEUE: usize = 1024;
pub const DEFAULT_MAX_FRAME: usize = 1 << 20;
pub const DEFAULT_MAX_UPLOAD: u64 = 512 << 20;
pub const DEFAULT_IDENTIFY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Outbound frames buffered per client before it is dropped as slow.
    pub queue_capacity: usize,
    /// Largest accepted inbound text frame, in bytes.
    pub max_frame: usize,
    pub identify_timeout: Duration,
    pub fs_root: PathBuf,
    pub max_upload: u64,
    /// Static files served under `/app`.
    pub app_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            queue_capacity: DEFAULT_QUEUE,
            max_frame: DEFAULT_MAX_FRAME,
            identify_timeout: DEFAULT_IDENTIFY_TIMEOUT,
            fs_root: PathBuf::from("concierge-files"),
            max_upload: DEFAULT_MAX_UPLOAD,
            app_dir: None,
        }
    }
}

pub(crate) struct Shared {
    relay: Relay,
    config: GatewayConfig,
    store: files::FileStore,
    shutdown: CancellationToken,
    sessions: TaskTracker,
}

/// A running gateway. Dropping it leaves the server running; call
/// [`Gateway::shutdown`] to stop it.
pub struct Gateway {
    addr: SocketAddr,
    shared: Arc<Shared>,
    server: JoinHandle<std::io::Result<()>>,
}

async fn ws_handler(
    ws: WebSocketUpgrade,
    Query(query): Query<HashMap<String, String>>,
    State(shared): State<Arc<Shared>>,
) -> Response {
    let version_ok = query.get("version").is_none_or(|v| v == PROTOCOL_VERSION);
    // Oversized frames up to twice the limit still get a STATUS reply;
    // beyond that the transport drops the connection.
    let transport_limit = shared.config.max_frame.saturating_mul(2).max(64 * 1024);
    ws.max_message_size(transport_limit)
        .max_frame_size(transport_limit)
        .on_upgrade(move |socket| {
            let tracker = shared.sessions.clone();
            tracker.track_future(session::run(socket, shared, version_ok))
        })
}

fn router(shared: Arc<Shared>) -> Router {
    let mut app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/healthz", get(|| async { "ok" }))
        .route(
            "/fs/{owner}/{*path}",
            get(files::download)
                .put(files::upload)
                .post(files::upload)
                .delete(files::remove),
        )
        .layer(DefaultBodyLimit::disable());
    if let Some(dir) = &shared.config.app_dir {
        app = app.nest_service("/app", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.with_state(shared)
}

impl Gateway {
    /// Binds and starts serving. Fails if the address is taken or the file
    /// root cannot be created.
    pub async fn bind(addr: impl ToSocketAddrs, config: GatewayConfig) -> std::io::Result<Gateway> {
        let store = files::FileStore::open(config.fs_root.clone(), config.max_upload).await?;
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            relay: Relay::default(),
            config,
            store,
            shutdown: CancellationToken::new(),
            sessions: TaskTracker::new(),
        });
        let app = router(shared.clone());
        let stop = shared.shutdown.clone();
        let server = tokio::spawn(async move {
            axum::serve(listener.tap_io(|tcp| { let _ = tcp.set_nodelay(true); }), app)
                .with_graceful_shutdown(async move { stop.cancelled().await })
                .await
        });
        tracing::info!(%addr, "gateway listening");
        Ok(Gateway { addr, shared, server })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws?version={PROTOCOL_VERSION}", self.addr)
    }

    pub fn http_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn relay(&self) -> &Relay {
        &self.shared.relay
    }

    pub fn fs_root(&self) -> &std::path::Path {
        self.shared.store.root()
    }

    /// Resolves once shutdown has been requested.
    pub async fn stopped(&self) {
        self.shared.shutdown.cancelled().await
    }

    /// Sends close frames to every connection, finishes in-flight HTTP
    /// requests, and waits for sessions to end.
    pub async fn shutdown(self) -> std::io::Result<()> {
        self.shared.shutdown.cancel();
        self.shared.relay.close_all(CloseReason {
            code: CLOSE_GOING_AWAY,
            reason: "hub shutting down",
            drain: true,
        });
        let served = self.server.await.map_err(std::io::Error::other)?;
        self.shared.sessions.close();
        let _ = tokio::time::timeout(Duration::from_secs(5), self.shared.sessions.wait()).await;
        served
    }
}
