#![allow(dead_code)]

use std::time::Duration;

use concierge_core::protocol::{decode_frame, encode_frame, Frame};
use concierge_net::gateway::{Gateway, GatewayConfig};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub struct Hub {
    pub gateway: Gateway,
    pub dir: tempfile::TempDir,
}

pub async fn start_with(config: impl FnOnce(&mut GatewayConfig)) -> Hub {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = GatewayConfig { fs_root: dir.path().join("files"), ..Default::default() };
    config(&mut cfg);
    let gateway = Gateway::bind("127.0.0.1:0", cfg).await.unwrap();
    Hub { gateway, dir }
}

pub async fn start() -> Hub {
    start_with(|_| {}).await
}

pub async fn raw(url: &str) -> Ws {
    tokio_tungstenite::connect_async(url).await.unwrap().0
}

pub async fn send(ws: &mut Ws, frame: &Frame) {
    ws.send(Message::text(encode_frame(frame))).await.unwrap();
}

pub async fn send_text(ws: &mut Ws, text: &str) {
    ws.send(Message::text(text.to_owned())).await.unwrap();
}

/// What the next message turned out to be.
#[derive(Debug, PartialEq)]
pub enum Next {
    Frame(Frame),
    Closed(Option<u16>),
    Silent,
}

pub async fn next_within(ws: &mut Ws, wait: Duration) -> Next {
    loop {
        match tokio::time::timeout(wait, ws.next()).await {
            Err(_) => return Next::Silent,
            Ok(None) | Ok(Some(Err(_))) => return Next::Closed(None),
            Ok(Some(Ok(Message::Text(t)))) => return Next::Frame(decode_frame(t.as_str()).unwrap()),
            Ok(Some(Ok(Message::Close(c)))) => return Next::Closed(c.map(|c| u16::from(c.code))),
            Ok(Some(Ok(_))) => continue,
        }
    }
}

pub async fn next(ws: &mut Ws) -> Next {
    next_within(ws, Duration::from_secs(5)).await
}

pub async fn frame(ws: &mut Ws) -> Frame {
    match next(ws).await {
        Next::Frame(f) => f,
        other => panic!("expected a frame, got {other:?}"),
    }
}

pub fn identify(name: &str) -> Frame {
    decode_frame(&format!(
        r#"{{"type":"identify","kind":"user","name":"{name}","tags":[],"version":"1.0"}}"#
    ))
    .unwrap()
}

/// Connects and identifies, returning the socket after HELLO.
pub async fn join(url: &str, name: &str) -> (Ws, Frame) {
    let mut ws = raw(url).await;
    send(&mut ws, &identify(name)).await;
    let hello = frame(&mut ws).await;
    assert!(matches!(hello, Frame::Hello { .. }), "{hello:?}");
    (ws, hello)
}

/// Skips EVENT frames.
pub async fn non_event(ws: &mut Ws) -> Frame {
    loop {
        let f = frame(ws).await;
        if !matches!(f, Frame::Event { .. }) {
            return f;
        }
    }
}
