//! The serialized core every connection funnels through: the hub, each
//! client's outbound queue, and the file tokens issued at HELLO.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use axum::extract::ws::Utf8Bytes;
use concierge_core::hub::{Hub, Notice};
use concierge_core::protocol::{
    encode_frame, ClientId, ClientName, ClientProfile, Frame, StatusCode, PROTOCOL_VERSION,
};
use rand::RngCore;
use tokio::sync::{mpsc, watch};

pub const CLOSE_IDENTIFY_TIMEOUT: u16 = 4000;
pub const CLOSE_PROTOCOL_VIOLATION: u16 = 4001;
pub const CLOSE_SLOW_CONSUMER: u16 = 4008;
pub const CLOSE_GOING_AWAY: u16 = 1001;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloseReason {
    pub code: u16,
    pub reason: &'static str,
    /// Flush frames already queued before the close frame.
    pub drain: bool,
}

impl CloseReason {
    pub fn slow_consumer() -> Self {
        Self { code: CLOSE_SLOW_CONSUMER, reason: "slow consumer", drain: false }
    }

    pub fn violation(reason: &'static str) -> Self {
        Self { code: CLOSE_PROTOCOL_VIOLATION, reason, drain: true }
    }
}

/// Write side of one connection as seen by the relay.
#[derive(Debug, Clone)]
pub struct Outbox {
    tx: mpsc::Sender<Utf8Bytes>,
    close: watch::Sender<Option<CloseReason>>,
}

/// Receiving halves handed to the connection's writer.
pub struct OutboxRx {
    pub frames: mpsc::Receiver<Utf8Bytes>,
    pub close: watch::Receiver<Option<CloseReason>>,
}

impl Outbox {
    pub fn new(capacity: usize) -> (Outbox, OutboxRx) {
        let (tx, frames) = mpsc::channel(capacity.max(1));
        let (close, close_rx) = watch::channel(None);
        (Outbox { tx, close }, OutboxRx { frames, close: close_rx })
    }

    /// Queues a frame. `false` means the queue was full; a closed queue
    /// swallows the frame.
    pub fn push(&self, text: Utf8Bytes) -> bool {
        match self.tx.try_send(text) {
            Ok(()) | Err(mpsc::error::TrySendError::Closed(_)) => true,
            Err(mpsc::error::TrySendError::Full(_)) => false,
        }
    }

    /// First reason wins; later requests are ignored.
    pub fn close(&self, reason: CloseReason) {
        self.close.send_if_modified(|cur| {
            if cur.is_none() {
                *cur = Some(reason);
                true
            } else {
                false
            }
        });
    }

    pub fn subscribe_close(&self) -> watch::Receiver<Option<CloseReason>> {
        self.close.subscribe()
    }

    pub fn is_closing(&self) -> bool {
        self.close.borrow().is_some()
    }

    pub fn queued(&self) -> usize {
        self.tx.max_capacity() - self.tx.capacity()
    }
}

struct Conn {
    outbox: Outbox,
    token: String,
}

#[derive(Default)]
struct State {
    hub: Hub,
    conns: HashMap<ClientId, Conn>,
    tokens: HashMap<String, ClientName>,
}

pub struct Relay {
    state: Mutex<State>,
}

/// Outcome of a frame received before IDENTIFY completed.
pub enum Admission {
    Active(ClientProfile),
    Rejected(StatusCode),
}

fn text(frame: &Frame) -> Utf8Bytes {
    Utf8Bytes::from(encode_frame(frame))
}

impl Default for Relay {
    fn default() -> Self {
        Self::new(Hub::new())
    }
}

impl Relay {
    pub fn new(hub: Hub) -> Self {
        Self { state: Mutex::new(State { hub, ..Default::default() }) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Handles the IDENTIFY that opens a connection. On success the HELLO is
    /// already queued on `outbox` and presence events are fanned out.
    pub fn admit(&self, frame: Frame, outbox: &Outbox) -> Admission {
        let Frame::Identify { kind, name, tags, version } = frame else {
            return Admission::Rejected(StatusCode::NotIdentified);
        };
        if version != PROTOCOL_VERSION {
            return Admission::Rejected(StatusCode::UnsupportedVersion);
        }
        let mut st = self.lock();
        let profile = match st.hub.register_client(name, kind, tags) {
            Ok(p) => p,
            Err(code) => return Admission::Rejected(code),
        };
        let mut raw = [0u8; 32];
        rand::rng().fill_bytes(&mut raw);
        let token = hex::encode(raw);
        let hello = Frame::Hello {
            file_token: token.clone(),
            profile: profile.clone(),
            version: PROTOCOL_VERSION.to_owned(),
        };
        outbox.push(text(&hello));
        st.tokens.insert(token.clone(), profile.name.clone());
        st.conns.insert(profile.id, Conn { outbox: outbox.clone(), token });
        let notices = st.hub.take_notices();
        deliver(&mut st, notices);
        Admission::Active(profile)
    }

    /// Removes a client after its connection ended. Unknown ids are ignored.
    pub fn depart(&self, id: ClientId) {
        let mut st = self.lock();
        evict(&mut st, id, None);
    }

    /// Processes one frame from an ACTIVE client.
    pub fn dispatch(&self, me: ClientId, frame: Frame) {
        let mut st = self.lock();
        let Some(profile) = st.hub.registry().profile(me).cloned() else {
            return;
        };
        let reply = match frame {
            Frame::Identify { .. } => Some(Frame::status(
                StatusCode::AlreadyIdentified,
                "this connection is already identified",
                None,
            )),
            Frame::Message { data, seq, target, .. } => {
                let decision = st.hub.route(me, &target);
                if decision.status.is_ok() {
                    let relay = text(&Frame::Relay { data, origin: profile, seq, target });
                    let recipients = decision.recipients.into_iter().collect();
                    fan_out(&mut st, recipients, &relay);
                    None
                } else {
                    Some(Frame::status(decision.status, decision.status.to_string(), Some(seq)))
                }
            }
            Frame::CreateGroup { group, policy, seq } => {
                Some(status_of(st.hub.create_group(me, group, policy), seq))
            }
            Frame::DeleteGroup { group, seq } => Some(status_of(st.hub.delete_group(me, &group), seq)),
            Frame::Subscribe { group, seq } => Some(status_of(st.hub.subscribe(me, &group), seq)),
            Frame::Unsubscribe { group, seq } => Some(status_of(st.hub.unsubscribe(me, &group), seq)),
            Frame::Fetch { group, seq, what } => Some(match st.hub.list(me, what, group.as_ref()) {
                Ok(items) => Frame::List { group, items, re: seq, what },
                Err(code) => Frame::status(code, code.to_string(), seq),
            }),
            other => Some(Frame::status(
                StatusCode::MalformedFrame,
                format!("{} frames are sent by the hub, not to it", other.type_name()),
                other.reply_to(),
            )),
        };
        if let Some(reply) = reply {
            fan_out(&mut st, vec![me], &text(&reply));
        }
        let notices = st.hub.take_notices();
        deliver(&mut st, notices);
    }

    /// Sends a hub-originated frame to one client.
    pub fn reply(&self, me: ClientId, frame: Frame) {
        let mut st = self.lock();
        fan_out(&mut st, vec![me], &text(&frame));
    }

    /// Name bound to a file token, if its connection is still registered.
    pub fn token_owner(&self, token: &str) -> Option<ClientName> {
        self.lock().tokens.get(token).cloned()
    }

    pub fn client_count(&self) -> usize {
        self.lock().hub.registry().client_count()
    }

    /// Asks every connection to close with `reason`.
    pub fn close_all(&self, reason: CloseReason) {
        for conn in self.lock().conns.values() {
            conn.outbox.close(reason.clone());
        }
    }

    /// Runs `f` against the hub under the relay lock.
    pub fn with_hub<R>(&self, f: impl FnOnce(&Hub) -> R) -> R {
        f(&self.lock().hub)
    }
}

fn status_of(result: Result<(), StatusCode>, seq: Option<u64>) -> Frame {
    match result {
        Ok(()) => Frame::status(StatusCode::Ok, "", seq),
        Err(code) => Frame::status(code, code.to_string(), seq),
    }
}

/// Queues `frame` for each recipient; recipients whose queue is full are
/// closed with 4008 and unregistered, which may produce further notices.
fn fan_out(st: &mut State, recipients: Vec<ClientId>, frame: &Utf8Bytes) {
    let mut overflowed = Vec::new();
    for id in recipients {
        if let Some(conn) = st.conns.get(&id) {
            if !conn.outbox.push(frame.clone()) {
                overflowed.push(id);
            }
        }
    }
    for id in overflowed {
        evict(st, id, Some(CloseReason::slow_consumer()));
    }
}

fn deliver(st: &mut State, notices: Vec<Notice>) {
    let mut queue: VecDeque<Notice> = notices.into();
    while let Some(n) = queue.pop_front() {
        fan_out(st, n.recipients, &text(&n.frame));
        queue.extend(st.hub.take_notices());
    }
}

fn evict(st: &mut State, id: ClientId, reason: Option<CloseReason>) {
    let Some(conn) = st.conns.remove(&id) else {
        return;
    };
    if let Some(reason) = reason {
        conn.outbox.close(reason);
    }
    st.tokens.remove(&conn.token);
    if st.hub.unregister_client(id).is_ok() {
        let notices = st.hub.take_notices();
        deliver(st, notices);
    }
}
