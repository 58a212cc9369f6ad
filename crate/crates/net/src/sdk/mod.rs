//! Client library: handshake, request/reply correlation, inbound frame
//! stream, and file transfer over the gateway's HTTP contract.

mod files;

pub use files::Part;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use concierge_core::protocol::{
    decode_frame, encode_frame, ClientKind, ClientName, ClientProfile, Frame, Payload, StatusCode,
    Target, PROTOCOL_VERSION,
};
use futures_util::stream::SplitSink;
use futures_util::{SinkExt, StreamExt};
use reqwest::Url;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(5);
pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(10);

type Sink = SplitSink<WebSocketStream<MaybeTlsStream<TcpStream>>, Message>;

#[derive(Debug, thiserror::Error)]
pub enum SdkError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("name already taken: {0}")]
    NameConflict(String),
    #[error("hub rejected protocol version: {0}")]
    UnsupportedVersion(String),
    #[error("hub refused: {code:?}: {detail}")]
    Rejected { code: StatusCode, detail: String },
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("session closed")]
    Closed,
    #[error("{0} frames carry no seq and cannot be used as requests")]
    NotARequest(&'static str),
    #[error("not allowed: {0}")]
    Permission(String),
    #[error("missing or invalid file token")]
    Unauthorized,
    #[error("not found: {0}")]
    NotFound(String),
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything the hub sends that is not a reply to a pending request.
#[derive(Debug, Clone, PartialEq)]
pub enum Incoming {
    Relay { origin: ClientProfile, data: Payload, seq: u64, target: Target },
    Event(Frame),
    /// STATUS or LIST with no matching pending request, such as routing
    /// errors for fire-and-forget messages.
    Reply(Frame),
}

#[derive(Debug, Clone)]
pub struct ConnectOptions {
    pub url: String,
    pub name: String,
    pub kind: ClientKind,
    pub tags: Vec<String>,
    pub connect_timeout: Duration,
    pub request_timeout: Duration,
}

impl ConnectOptions {
    pub fn new(url: impl Into<String>, name: impl Into<String>, kind: ClientKind) -> Self {
        Self {
            url: url.into(),
            name: name.into(),
            kind,
            tags: Vec::new(),
            connect_timeout: DEFAULT_CONNECT_TIMEOUT,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
        }
    }

    pub fn tags(mut self, tags: Vec<String>) -> Self {
        self.tags = tags;
        self
    }
}

/// Fills in `/ws?version=…` when the URL names only the host.
pub fn normalize_ws_url(url: &str) -> Result<Url, SdkError> {
    let mut u = Url::parse(url).map_err(|e| SdkError::Transport(format!("bad hub url {url:?}: {e}")))?;
    if !matches!(u.scheme(), "ws" | "wss") {
        return Err(SdkError::Transport(format!("hub url must be ws:// or wss://, got {url:?}")));
    }
    if u.path() == "/" || u.path().is_empty() {
        u.set_path("/ws");
    }
    if !u.query_pairs().any(|(k, _)| k == "version") {
        u.query_pairs_mut().append_pair("version", PROTOCOL_VERSION);
    }
    Ok(u)
}

fn http_base(ws: &Url) -> Url {
    let mut u = ws.clone();
    let scheme = if ws.scheme() == "wss" { "https" } else { "http" };
    u.set_scheme(scheme).expect("http schemes are valid");
    u.set_path("/");
    u.set_query(None);
    u
}

struct Inner {
    sink: tokio::sync::Mutex<Sink>,
    pending: Mutex<HashMap<u64, oneshot::Sender<Frame>>>,
    closed: Mutex<Option<Option<(u16, String)>>>,
}

/// One identified connection to the hub.
pub struct Session {
    profile: ClientProfile,
    file_token: String,
    http: reqwest::Client,
    http_base: Url,
    request_timeout: Duration,
    seq: AtomicU64,
    inner: Arc<Inner>,
    inbox: tokio::sync::Mutex<mpsc::UnboundedReceiver<Incoming>>,
    reader: Mutex<Option<tokio::task::JoinHandle<()>>>,
}

fn rejection(code: StatusCode, detail: String) -> SdkError {
    match code {
        StatusCode::NameConflict => SdkError::NameConflict(detail),
        StatusCode::UnsupportedVersion => SdkError::UnsupportedVersion(detail),
        code => SdkError::Rejected { code, detail },
    }
}

impl Session {
    pub async fn connect(opts: ConnectOptions) -> Result<Session, SdkError> {
        let url = normalize_ws_url(&opts.url)?;
        let name: ClientName = opts
            .name
            .parse()
            .map_err(|e| SdkError::Rejected { code: StatusCode::MalformedFrame, detail: format!("{e}") })?;
        let (ws, _) = tokio::time::timeout(opts.connect_timeout, tokio_tungstenite::connect_async_with_config(url.as_str(), None, true))
            .await
            .map_err(|_| SdkError::Timeout("websocket handshake"))?
            .map_err(|e| SdkError::Transport(e.to_string()))?;
        let (mut sink, mut stream) = ws.split();
        let identify = Frame::Identify {
            kind: opts.kind,
            name,
            tags: opts.tags.clone(),
            version: PROTOCOL_VERSION.to_owned(),
        };
        sink.send(Message::text(encode_frame(&identify)))
            .await
            .map_err(|e| SdkError::Transport(e.to_string()))?;

        let first = tokio::time::timeout(opts.connect_timeout, async {
            loop {
                match stream.next().await {
                    Some(Ok(Message::Text(t))) => {
                        return decode_frame(t.as_str()).map_err(|e| SdkError::Transport(e.to_string()))
                    }
                    Some(Ok(Message::Close(c))) => {
                        let why = c.map(|c| format!("{} {}", u16::from(c.code), c.reason)).unwrap_or_default();
                        return Err(SdkError::Transport(format!("closed during handshake {why}")));
                    }
                    Some(Ok(_)) => continue,
                    Some(Err(e)) => return Err(SdkError::Transport(e.to_string())),
                    None => return Err(SdkError::Transport("closed during handshake".into())),
                }
            }
        })
        .await
        .map_err(|_| SdkError::Timeout("hello"))??;
        let (profile, file_token) = match first {
            Frame::Hello { profile, file_token, .. } => (profile, file_token),
            Frame::Status { code, detail, .. } => return Err(rejection(code, detail)),
            other => {
                return Err(SdkError::Transport(format!("expected hello, got {}", other.type_name())))
            }
        };

        let inner = Arc::new(Inner {
            sink: tokio::sync::Mutex::new(sink),
            pending: Mutex::new(HashMap::new()),
            closed: Mutex::new(None),
        });
        let (tx, rx) = mpsc::unbounded_channel();
        let reader = tokio::spawn(read_loop(stream, inner.clone(), tx));
        Ok(Session {
            profile,
            file_token,
            http: reqwest::Client::new(),
            http_base: http_base(&url),
            request_timeout: opts.request_timeout,
            seq: AtomicU64::new(1),
            inner,
            inbox: tokio::sync::Mutex::new(rx),
            reader: Mutex::new(Some(reader)),
        })
    }

    pub fn profile(&self) -> &ClientProfile {
        &self.profile
    }

    pub fn file_token(&self) -> &str {
        &self.file_token
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.lock().unwrap().is_some()
    }

    /// WebSocket close code and reason, once the hub has closed the session.
    pub fn close_reason(&self) -> Option<(u16, String)> {
        self.inner.closed.lock().unwrap().clone().flatten()
    }

    fn next_seq(&self) -> u64 {
        self.seq.fetch_add(1, Ordering::Relaxed)
    }

    async fn send_raw(&self, frame: &Frame) -> Result<(), SdkError> {
        if self.is_closed() {
            return Err(SdkError::Closed);
        }
        self.inner
            .sink
            .lock()
            .await
            .send(Message::text(encode_frame(frame)))
            .await
            .map_err(|_| SdkError::Closed)
    }

    /// Stamps a fresh seq on `frame`, sends it, and waits for the STATUS or
    /// LIST carrying that seq as `re`.
    pub async fn request(&self, mut frame: Frame) -> Result<Frame, SdkError> {
        let seq = self.next_seq();
        if !frame.set_seq(seq) {
            return Err(SdkError::NotARequest(frame.type_name()));
        }
        let (tx, rx) = oneshot::channel();
        self.inner.pending.lock().unwrap().insert(seq, tx);
        if let Err(e) = self.send_raw(&frame).await {
            self.inner.pending.lock().unwrap().remove(&seq);
            return Err(e);
        }
        match tokio::time::timeout(self.request_timeout, rx).await {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(_)) => Err(SdkError::Closed),
            Err(_) => {
                self.inner.pending.lock().unwrap().remove(&seq);
                Err(SdkError::Timeout("reply"))
            }
        }
    }

    /// Like [`Session::request`] but turns a non-OK STATUS into an error.
    pub async fn request_ok(&self, frame: Frame) -> Result<Frame, SdkError> {
        match self.request(frame).await? {
            Frame::Status { code, detail, .. } if !code.is_ok() => Err(rejection(code, detail)),
            reply => Ok(reply),
        }
    }

    /// Sends a MESSAGE without waiting; routing errors arrive later as
    /// [`Incoming::Reply`]. Returns the seq used.
    pub async fn send(&self, target: Target, data: Payload) -> Result<u64, SdkError> {
        let seq = self.next_seq();
        self.send_raw(&Frame::Message { content_hint: None, data, seq, target }).await?;
        Ok(seq)
    }

    /// Next unsolicited frame; `None` once the session has closed and the
    /// backlog is drained.
    pub async fn recv(&self) -> Option<Incoming> {
        self.inbox.lock().await.recv().await
    }

    /// Non-blocking form of [`Session::recv`].
    pub fn try_recv(&self) -> Option<Incoming> {
        self.inbox.try_lock().ok()?.try_recv().ok()
    }

    /// Sends a normal close and waits for the reader to finish.
    pub async fn close(&self) {
        {
            let mut sink = self.inner.sink.lock().await;
            let _ = sink.send(Message::Close(None)).await;
        }
        let reader = self.reader.lock().unwrap().take();
        if let Some(reader) = reader {
            let _ = tokio::time::timeout(Duration::from_secs(2), reader).await;
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Some(reader) = self.reader.lock().unwrap().take() {
            reader.abort();
        }
    }
}

async fn read_loop(
    mut stream: futures_util::stream::SplitStream<WebSocketStream<MaybeTlsStream<TcpStream>>>,
    inner: Arc<Inner>,
    tx: mpsc::UnboundedSender<Incoming>,
) {
    let mut close = None;
    while let Some(msg) = stream.next().await {
        let text = match msg {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(c)) => {
                close = c.map(|c| (u16::from(c.code), c.reason.to_string()));
                break;
            }
            Ok(_) => continue,
            Err(_) => break,
        };
        let Ok(frame) = decode_frame(text.as_str()) else {
            tracing::warn!("undecodable frame from hub");
            continue;
        };
        let incoming = match frame {
            Frame::Relay { data, origin, seq, target } => Incoming::Relay { origin, data, seq, target },
            Frame::Event { .. } => Incoming::Event(frame),
            reply => {
                let waiter = reply.reply_to().and_then(|re| inner.pending.lock().unwrap().remove(&re));
                match waiter {
                    Some(w) => {
                        let _ = w.send(reply);
                        continue;
                    }
                    None => Incoming::Reply(reply),
                }
            }
        };
        let _ = tx.send(incoming);
    }
    *inner.closed.lock().unwrap() = Some(close);
    inner.pending.lock().unwrap().clear();
}

/// Exponential reconnect delays: `base · 2ⁿ`, capped.
#[derive(Debug, Clone)]
pub struct Backoff {
    base: Duration,
    cap: Duration,
    attempt: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Self::new(Duration::from_millis(500), Duration::from_secs(30))
    }
}

impl Backoff {
    pub fn new(base: Duration, cap: Duration) -> Self {
        Self { base, cap, attempt: 0 }
    }

    pub fn next_delay(&mut self) -> Duration {
        let factor = 1u32.checked_shl(self.attempt.min(20)).unwrap_or(u32::MAX);
        self.attempt = self.attempt.saturating_add(1);
        self.base.saturating_mul(factor).min(self.cap)
    }

    pub fn reset(&mut self) {
        self.attempt = 0;
    }
}
