//! One WebSocket connection: a reader driving the AWAITING_IDENTIFY/ACTIVE
//! state machine and a writer draining the outbound queue.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, Utf8Bytes, WebSocket};
use concierge_core::protocol::{decode_frame, encode_frame, ClientId, Frame, StatusCode};
use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use tokio::time::timeout;

use super::relay::{
    Admission, CloseReason, Outbox, OutboxRx, CLOSE_GOING_AWAY, CLOSE_IDENTIFY_TIMEOUT,
};
use super::Shared;

/// How long to wait for the peer's close reply before dropping the socket.
const CLOSE_LINGER: Duration = Duration::from_secs(2);

enum Inbound {
    Frame(Frame),
    /// Unusable message; carries the STATUS detail.
    Bad(String),
    Ignore,
    Gone,
}

fn classify(msg: Option<Result<Message, axum::Error>>, max_frame: usize) -> Inbound {
    match msg {
        None | Some(Err(_)) | Some(Ok(Message::Close(_))) => Inbound::Gone,
        Some(Ok(Message::Ping(_) | Message::Pong(_))) => Inbound::Ignore,
        Some(Ok(Message::Binary(_))) => Inbound::Bad("binary frames are not accepted".into()),
        Some(Ok(Message::Text(t))) => {
            if t.len() > max_frame {
                Inbound::Bad(format!("frame of {} bytes exceeds the {max_frame}-byte limit", t.len()))
            } else {
                match decode_frame(t.as_str()) {
                    Ok(f) => Inbound::Frame(f),
                    Err(e) => Inbound::Bad(e.to_string()),
                }
            }
        }
    }
}

fn status(code: StatusCode, detail: impl Into<String>, re: Option<u64>) -> Utf8Bytes {
    Utf8Bytes::from(encode_frame(&Frame::status(code, detail, re)))
}

pub(super) async fn run(socket: WebSocket, shared: Arc<Shared>, query_version_ok: bool) {
    let (sink, mut stream) = socket.split();
    let (outbox, rx) = Outbox::new(shared.config.queue_capacity);
    let writer = tokio::spawn(write_loop(sink, rx));

    let me = if query_version_ok {
        identify(&mut stream, &outbox, &shared).await
    } else {
        outbox.push(status(
            StatusCode::UnsupportedVersion,
            format!("this hub speaks version {}", concierge_core::protocol::PROTOCOL_VERSION),
            None,
        ));
        outbox.close(CloseReason::violation("unsupported version"));
        None
    };

    if let Some(me) = me {
        active(&mut stream, &outbox, &shared, me).await;
        shared.relay.depart(me);
    }
    outbox.close(CloseReason { code: 1000, reason: "", drain: true });
    drop(outbox);
    let _ = writer.await;
    // Give the peer a moment to answer the close handshake.
    let _ = timeout(CLOSE_LINGER, async { while stream.next().await.is_some() {} }).await;
}

async fn identify(
    stream: &mut SplitStream<WebSocket>,
    outbox: &Outbox,
    shared: &Shared,
) -> Option<ClientId> {
    let deadline = tokio::time::Instant::now() + shared.config.identify_timeout;
    loop {
        let msg = tokio::select! {
            _ = shared.shutdown.cancelled() => {
                outbox.close(CloseReason { code: CLOSE_GOING_AWAY, reason: "hub shutting down", drain: true });
                return None;
            }
            _ = tokio::time::sleep_until(deadline) => {
                outbox.close(CloseReason { code: CLOSE_IDENTIFY_TIMEOUT, reason: "identify timeout", drain: true });
                return None;
            }
            m = stream.next() => m,
        };
        match classify(msg, shared.config.max_frame) {
            Inbound::Gone => return None,
            Inbound::Ignore => continue,
            Inbound::Bad(detail) => {
                outbox.push(status(StatusCode::MalformedFrame, detail, None));
                outbox.close(CloseReason::violation("malformed frame before identify"));
                return None;
            }
            Inbound::Frame(frame) => {
                let re = frame.seq();
                let is_identify = matches!(frame, Frame::Identify { .. });
                match shared.relay.admit(frame, outbox) {
                    Admission::Active(profile) => return Some(profile.id),
                    Admission::Rejected(code) => {
                        let detail = if is_identify {
                            code.to_string()
                        } else {
                            "the first frame must be identify".to_owned()
                        };
                        outbox.push(status(code, detail, re));
                        outbox.close(CloseReason::violation("identify rejected"));
                        return None;
                    }
                }
            }
        }
    }
}

async fn active(stream: &mut SplitStream<WebSocket>, outbox: &Outbox, shared: &Shared, me: ClientId) {
    let mut closing = outbox.subscribe_close();
    loop {
        if outbox.is_closing() {
            return;
        }
        let msg = tokio::select! {
            _ = shared.shutdown.cancelled() => {
                outbox.close(CloseReason { code: CLOSE_GOING_AWAY, reason: "hub shutting down", drain: true });
                return;
            }
            _ = closing.changed() => return,
            m = stream.next() => m,
        };
        match classify(msg, shared.config.max_frame) {
            Inbound::Gone => return,
            Inbound::Ignore => {}
            Inbound::Bad(detail) => {
                // A malformed frame from an identified client is answered, not fatal.
                shared.relay.reply(me, Frame::status(StatusCode::MalformedFrame, detail, None));
            }
            Inbound::Frame(frame) => shared.relay.dispatch(me, frame),
        }
    }
}

async fn write_loop(mut sink: SplitSink<WebSocket, Message>, mut rx: OutboxRx) {
    let reason = loop {
        tokio::select! {
            biased;
            changed = rx.close.changed() => {
                if changed.is_err() {
                    break None;
                }
                break rx.close.borrow().clone();
            }
            frame = rx.frames.recv() => match frame {
                Some(text) => {
                    // A peer that stopped reading can block this send; an
                    // eviction must not wait for it.
                    let evicted = tokio::select! {
                        sent = sink.send(Message::Text(text)) => {
                            if sent.is_err() {
                                return;
                            }
                            None
                        }
                        r = rx.close.wait_for(|r| r.as_ref().is_some_and(|c| !c.drain)) => {
                            Some(r.ok().and_then(|g| g.clone()).unwrap_or_else(CloseReason::slow_consumer))
                        }
                    };
                    if let Some(reason) = evicted {
                        let frame = CloseFrame { code: reason.code, reason: reason.reason.into() };
                        let _ = timeout(CLOSE_LINGER, sink.send(Message::Close(Some(frame)))).await;
                        return;
                    }
                }
                None => break rx.close.borrow().clone(),
            },
        }
    };
    let reason = reason.unwrap_or(CloseReason { code: 1000, reason: "", drain: true });
    if reason.drain {
        while let Ok(text) = rx.frames.try_recv() {
            if sink.send(Message::Text(text)).await.is_err() {
                return;
            }
        }
    }
    let _ = sink
        .send(Message::Close(Some(CloseFrame { code: reason.code, reason: reason.reason.into() })))
        .await;
    let _ = sink.flush().await;
}
