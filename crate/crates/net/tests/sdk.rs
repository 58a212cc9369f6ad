mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use concierge_core::protocol::{
    BroadcastPolicy, ClientKind, FetchKind, Frame, GroupName, ListItems, Payload, StatusCode, Target,
};
use concierge_net::sdk::{ConnectOptions, Incoming, SdkError, Session};

fn opts(hub: &Hub, name: &str) -> ConnectOptions {
    ConnectOptions::new(hub.gateway.ws_url(), name, ClientKind::User)
}

#[tokio::test]
async fn connect_errors_are_distinguishable() {
    let hub = start().await;
    let first = Session::connect(opts(&hub, "alice")).await.unwrap();
    assert_eq!(first.profile().name.as_str(), "alice");
    assert_eq!(first.profile().kind, ClientKind::User);

    let dup = Session::connect(opts(&hub, "alice")).await;
    assert!(matches!(dup, Err(SdkError::NameConflict(_))), "{:?}", dup.as_ref().err());

    let mut o = opts(&hub, "bob");
    o.url = o.url.replace("version=1.0", "version=9.9");
    let v = Session::connect(o).await;
    assert!(matches!(v, Err(SdkError::UnsupportedVersion(_))), "{:?}", v.as_ref().err());

    // Nothing listens on a port we just released.
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let dead = Session::connect(ConnectOptions::new(format!("ws://127.0.0.1:{port}"), "c", ClientKind::User)).await;
    assert!(matches!(dead, Err(SdkError::Transport(_))), "{:?}", dead.as_ref().err());

    // A listener that accepts but never speaks.
    let mute = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let mute_addr = mute.local_addr().unwrap();
    let _hold = tokio::spawn(async move {
        let mut held = Vec::new();
        loop {
            held.push(mute.accept().await.unwrap());
        }
    });
    let mut o = ConnectOptions::new(format!("ws://{mute_addr}"), "d", ClientKind::User);
    o.connect_timeout = Duration::from_millis(300);
    let t = Session::connect(o).await;
    assert!(matches!(t, Err(SdkError::Timeout(_))), "{:?}", t.as_ref().err());
}

#[tokio::test]
async fn requests_resolve_with_their_own_reply() {
    let hub = start().await;
    let s = Arc::new(Session::connect(opts(&hub, "alice")).await.unwrap());
    let mut tasks = Vec::new();
    for i in 0..50 {
        let s = s.clone();
        tasks.push(tokio::spawn(async move {
            let group: GroupName = format!("g{i}").parse().unwrap();
            let reply = s.request(Frame::CreateGroup { group: group.clone(), policy: BroadcastPolicy::Anyone, seq: None }).await.unwrap();
            assert!(matches!(reply, Frame::Status { code: StatusCode::Ok, .. }), "{reply:?}");
            let again = s.request(Frame::CreateGroup { group: group.clone(), policy: BroadcastPolicy::Anyone, seq: None }).await.unwrap();
            assert!(matches!(again, Frame::Status { code: StatusCode::GroupAlreadyExists, .. }));
            let list = s.request(Frame::Fetch { group: Some(group), seq: None, what: FetchKind::Subscribers }).await.unwrap();
            assert!(matches!(list, Frame::List { items: ListItems::Profiles(ref p), .. } if p.is_empty()), "{list:?}");
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    let Frame::List { items, .. } = s.request(Frame::Fetch { group: None, seq: None, what: FetchKind::Groups }).await.unwrap() else {
        panic!()
    };
    assert_eq!(items.len(), 50);
    // Nothing unsolicited besides the creation events.
    while let Some(m) = s.try_recv() {
        assert!(matches!(m, Incoming::Event(_)), "{m:?}");
    }
}

#[tokio::test]
async fn randomized_interleavings_lose_no_replies() {
    use rand::{Rng, SeedableRng};
    let hub = start().await;
    let s = Arc::new(Session::connect(opts(&hub, "alice")).await.unwrap());
    let peer = Session::connect(opts(&hub, "bob")).await.unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let mut tasks = Vec::new();
    for i in 0..300u32 {
        let s = s.clone();
        let kind = rng.random_range(0..4);
        let delay = rng.random_range(0..3);
        tasks.push(tokio::spawn(async move {
            tokio::time::sleep(Duration::from_millis(delay)).await;
            let g: GroupName = format!("r{}", i % 7).parse().unwrap();
            let frame = match kind {
                0 => Frame::Subscribe { group: g, seq: None },
                1 => Frame::Unsubscribe { group: g, seq: None },
                2 => Frame::CreateGroup { group: g, policy: BroadcastPolicy::Subscribers, seq: None },
                _ => Frame::Fetch { group: None, seq: None, what: FetchKind::Clients },
            };
            s.request(frame).await.map(|r| r.reply_to())
        }));
        let _ = peer.send(Target::Name { name: "alice".parse().unwrap() }, Payload::parse("{}").unwrap()).await;
    }
    let mut seen = std::collections::BTreeSet::new();
    for t in tasks {
        let re = t.await.unwrap().unwrap().unwrap();
        assert!(seen.insert(re), "reply {re} resolved twice");
    }
    assert_eq!(seen.len(), 300);
}

#[tokio::test]
async fn request_after_close_is_a_session_error() {
    let hub = start().await;
    let s = Session::connect(opts(&hub, "alice")).await.unwrap();
    s.close().await;
    let r = s.request(Frame::Fetch { group: None, seq: None, what: FetchKind::Clients }).await;
    assert!(matches!(r, Err(SdkError::Closed)), "{r:?}");
    assert!(s.recv().await.is_none());
}

#[tokio::test]
async fn hub_shutdown_is_seen_as_close() {
    let hub = start().await;
    let s = Session::connect(opts(&hub, "alice")).await.unwrap();
    hub.gateway.shutdown().await.unwrap();
    assert!(s.recv().await.is_none());
    assert_eq!(s.close_reason().map(|r| r.0), Some(1001));
}

#[tokio::test]
async fn relays_and_fire_and_forget_errors_arrive_on_recv() {
    let hub = start().await;
    let a = Session::connect(opts(&hub, "alice")).await.unwrap();
    let b = Session::connect(opts(&hub, "bob")).await.unwrap();
    let seq = a.send(Target::Name { name: "bob".parse().unwrap() }, Payload::parse(r#"{"x":[1,2]}"#).unwrap()).await.unwrap();
    loop {
        match b.recv().await.unwrap() {
            Incoming::Relay { origin, data, seq: s, .. } => {
                assert_eq!(origin.name.as_str(), "alice");
                assert_eq!(data.as_str(), r#"{"x":[1,2]}"#);
                assert_eq!(s, seq);
                break;
            }
            Incoming::Event(_) => continue,
            other => panic!("{other:?}"),
        }
    }
    let seq = a.send(Target::Name { name: "ghost".parse().unwrap() }, Payload::empty()).await.unwrap();
    loop {
        match a.recv().await.unwrap() {
            Incoming::Reply(Frame::Status { code, re, .. }) => {
                assert_eq!((code, re), (StatusCode::NoSuchName, Some(seq)));
                break;
            }
            Incoming::Event(_) => continue,
            other => panic!("{other:?}"),
        }
    }
}

#[tokio::test]
async fn foreign_upload_is_a_permission_error() {
    let hub = start().await;
    let a = Session::connect(opts(&hub, "alice")).await.unwrap();
    let b = Session::connect(opts(&hub, "bob")).await.unwrap();
    a.upload("x.txt", "mine").await.unwrap();
    assert_eq!(b.download("alice", "x.txt").await.unwrap().as_ref(), b"mine");
    let r = b.upload_to("alice", "y.txt", "x").await;
    assert!(matches!(r, Err(SdkError::Permission(_))), "{:?}", r.as_ref().err());
    assert!(matches!(b.download("alice", "y.txt").await, Err(SdkError::NotFound(_))));
    assert!(b.download("alice", "x.txt").await.is_ok());
}
