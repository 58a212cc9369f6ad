mod common;

use std::time::Duration;

use common::*;
use concierge_core::protocol::{
    decode_frame, BroadcastPolicy, EventKind, FetchKind, Frame, ListItems, Payload, StatusCode, Target,
};
use concierge_net::gateway::{
    CLOSE_GOING_AWAY, CLOSE_IDENTIFY_TIMEOUT, CLOSE_PROTOCOL_VIOLATION, CLOSE_SLOW_CONSUMER,
};

fn status_code(f: &Frame) -> StatusCode {
    match f {
        Frame::Status { code, .. } => *code,
        other => panic!("expected status, got {other:?}"),
    }
}

fn msg(target: Target, data: &str, seq: u64) -> Frame {
    Frame::Message { content_hint: None, data: Payload::parse(data).unwrap(), seq, target }
}

#[tokio::test]
async fn hello_echoes_the_identified_name() {
    let hub = start().await;
    let (_ws, hello) = join(&hub.gateway.ws_url(), "alice").await;
    let Frame::Hello { profile, file_token, version } = hello else { unreachable!() };
    assert_eq!(profile.name.as_str(), "alice");
    assert_eq!(version, "1.0");
    assert_eq!(file_token.len(), 64);
    assert!(file_token.bytes().all(|b| b.is_ascii_hexdigit()));
}

#[tokio::test]
async fn message_before_identify_is_refused_and_closed() {
    let hub = start().await;
    let mut ws = raw(&hub.gateway.ws_url()).await;
    send(&mut ws, &msg(Target::All, "{}", 9)).await;
    let f = frame(&mut ws).await;
    assert_eq!(status_code(&f), StatusCode::NotIdentified);
    assert_eq!(f.reply_to(), Some(9));
    assert_eq!(next(&mut ws).await, Next::Closed(Some(CLOSE_PROTOCOL_VIOLATION)));
}

#[tokio::test]
async fn malformed_first_frame_closes() {
    let hub = start().await;
    let mut ws = raw(&hub.gateway.ws_url()).await;
    send_text(&mut ws, "{not json").await;
    assert_eq!(status_code(&frame(&mut ws).await), StatusCode::MalformedFrame);
    assert_eq!(next(&mut ws).await, Next::Closed(Some(CLOSE_PROTOCOL_VIOLATION)));
}

#[tokio::test]
async fn second_identify_keeps_connection_open() {
    let hub = start().await;
    let url = hub.gateway.ws_url();
    let (mut ws, _) = join(&url, "alice").await;
    send(&mut ws, &identify("alice2")).await;
    assert_eq!(status_code(&frame(&mut ws).await), StatusCode::AlreadyIdentified);
    send(&mut ws, &Frame::Fetch { group: None, seq: Some(4), what: FetchKind::Clients }).await;
    let Frame::List { items: ListItems::Profiles(p), re: Some(4), .. } = frame(&mut ws).await else {
        panic!("expected list")
    };
    assert_eq!(p.len(), 1);
}

#[tokio::test]
async fn identify_deadline_closes_with_4000() {
    let hub = start_with(|c| c.identify_timeout = Duration::from_millis(200)).await;
    let mut ws = raw(&hub.gateway.ws_url()).await;
    assert_eq!(next(&mut ws).await, Next::Closed(Some(CLOSE_IDENTIFY_TIMEOUT)));
}

#[tokio::test]
async fn version_mismatch_in_identify_or_query() {
    let hub = start().await;
    let url = hub.gateway.ws_url();
    let mut ws = raw(&url).await;
    send_text(&mut ws, r#"{"type":"identify","kind":"user","name":"a","tags":[],"version":"2.0"}"#).await;
    assert_eq!(status_code(&frame(&mut ws).await), StatusCode::UnsupportedVersion);
    assert_eq!(next(&mut ws).await, Next::Closed(Some(CLOSE_PROTOCOL_VIOLATION)));

    let mut ws = raw(&url.replace("version=1.0", "version=0.9")).await;
    assert_eq!(status_code(&frame(&mut ws).await), StatusCode::UnsupportedVersion);
    assert_eq!(next(&mut ws).await, Next::Closed(Some(CLOSE_PROTOCOL_VIOLATION)));
}

#[tokio::test]
async fn name_conflict_closes_second_connection_only() {
    let hub = start().await;
    let url = hub.gateway.ws_url();
    let (mut first, _) = join(&url, "alice").await;
    let mut second = raw(&url).await;
    send(&mut second, &identify("alice")).await;
    assert_eq!(status_code(&frame(&mut second).await), StatusCode::NameConflict);
    assert_eq!(next(&mut second).await, Next::Closed(Some(CLOSE_PROTOCOL_VIOLATION)));
    send(&mut first, &Frame::Fetch { group: None, seq: Some(1), what: FetchKind::Clients }).await;
    assert!(matches!(frame(&mut first).await, Frame::List { .. }));
}

#[tokio::test]
async fn message_to_all_reaches_everyone_else_once() {
    let hub = start().await;
    let url = hub.gateway.ws_url();
    let (mut a, _) = join(&url, "a").await;
    let (mut b, _) = join(&url, "b").await;
    let (mut c, _) = join(&url, "c").await;
    send(&mut a, &msg(Target::All, r#"{"hi":1}"#, 7)).await;
    for ws in [&mut b, &mut c] {
        let Frame::Relay { origin, data, seq, target } = non_event(ws).await else { panic!() };
        assert_eq!(origin.name.as_str(), "a");
        assert_eq!(data.as_str(), r#"{"hi":1}"#);
        assert_eq!(seq, 7);
        assert_eq!(target, Target::All);
        assert_eq!(next_within(ws, Duration::from_millis(200)).await, Next::Silent);
    }
    // The sender hears join events only, never its own relay.
    loop {
        match next_within(&mut a, Duration::from_millis(200)).await {
            Next::Frame(Frame::Event { .. }) => continue,
            Next::Silent => break,
            other => panic!("sender got {other:?}"),
        }
    }
}

#[tokio::test]
async fn routing_errors_go_to_the_sender_only() {
    let hub = start().await;
    let url = hub.gateway.ws_url();
    let (mut a, _) = join(&url, "a").await;
    let (mut b, _) = join(&url, "b").await;
    send(&mut a, &msg(Target::Name { name: "ghost".parse().unwrap() }, "{}", 3)).await;
    let f = non_event(&mut a).await;
    assert_eq!(status_code(&f), StatusCode::NoSuchName);
    assert_eq!(f.reply_to(), Some(3));
    assert_eq!(next_within(&mut b, Duration::from_millis(200)).await, Next::Silent);
}

#[tokio::test]
async fn self_send_by_uuid_is_delivered() {
    let hub = start().await;
    let (mut a, hello) = join(&hub.gateway.ws_url(), "a").await;
    let Frame::Hello { profile, .. } = hello else { unreachable!() };
    send(&mut a, &msg(Target::Uuid { id: profile.id }, "[1]", 1)).await;
    assert!(matches!(frame(&mut a).await, Frame::Relay { .. }));
}

#[tokio::test]
async fn group_lifecycle_and_events() {
    let hub = start().await;
    let url = hub.gateway.ws_url();
    let (mut owner, _) = join(&url, "owner").await;
    let (mut fan, _) = join(&url, "fan").await;
    let g: concierge_core::protocol::GroupName = "physics_engine".parse().unwrap();
    send(&mut owner, &Frame::CreateGroup { group: g.clone(), policy: BroadcastPolicy::OwnerOnly, seq: Some(1) }).await;
    assert_eq!(status_code(&non_event(&mut owner).await), StatusCode::Ok);
    let mut created = frame(&mut fan).await;
    while matches!(created, Frame::Event { kind: EventKind::ClientJoined, .. }) {
        created = frame(&mut fan).await;
    }
    let Frame::Event { kind: EventKind::GroupCreated, subject } = created else { panic!("{created:?}") };
    assert_eq!(subject, "physics_engine");
    send(&mut fan, &Frame::Subscribe { group: g.clone(), seq: Some(2) }).await;
    assert_eq!(status_code(&non_event(&mut fan).await), StatusCode::Ok);
    send(&mut fan, &msg(Target::Group { group: g.clone() }, "{}", 3)).await;
    assert_eq!(status_code(&non_event(&mut fan).await), StatusCode::BadPermission);
    send(&mut owner, &msg(Target::Group { group: g.clone() }, r#"{"tick":1}"#, 4)).await;
    assert!(matches!(non_event(&mut fan).await, Frame::Relay { seq: 4, .. }));
    drop(owner);
    let mut kinds = Vec::new();
    while kinds.len() < 2 {
        if let Frame::Event { kind, .. } = frame(&mut fan).await {
            kinds.push(kind);
        }
    }
    assert_eq!(kinds, [EventKind::GroupDeleted, EventKind::ClientLeft]);
}

#[tokio::test]
async fn malformed_frames_after_identify_do_not_disturb_anyone() {
    let hub = start_with(|c| c.max_frame = 1024).await;
    let url = hub.gateway.ws_url();
    let (mut bad, _) = join(&url, "bad").await;
    let (mut good, _) = join(&url, "good").await;
    for junk in ["nope", r#"{"type":"warp"}"#, r#"{"type":"hello"}"#, &"x".repeat(2000)] {
        send_text(&mut bad, junk).await;
        assert_eq!(status_code(&non_event(&mut bad).await), StatusCode::MalformedFrame, "{junk}");
    }
    let relay = r#"{"type":"relay","data":{},"origin":{"id":"00000000-0000-4000-8000-000000000000","kind":"user","name":"x","tags":[]},"seq":1,"target":{"type":"all"}}"#;
    send_text(&mut bad, relay).await;
    assert_eq!(status_code(&non_event(&mut bad).await), StatusCode::MalformedFrame);
    bad.send(tokio_tungstenite::tungstenite::Message::binary(vec![1, 2, 3])).await.unwrap();
    assert_eq!(status_code(&non_event(&mut bad).await), StatusCode::MalformedFrame);
    send(&mut bad, &msg(Target::All, "{}", 1)).await;
    assert!(matches!(non_event(&mut good).await, Frame::Relay { .. }));
    assert_eq!(hub.gateway.relay().client_count(), 2);
}

use futures_util::SinkExt;

#[tokio::test]
async fn per_sender_order_is_preserved() {
    let hub = start().await;
    let url = hub.gateway.ws_url();
    let (mut a, _) = join(&url, "a").await;
    let (mut b, _) = join(&url, "b").await;
    let (mut c, _) = join(&url, "c").await;
    let (mut sink, _) = join(&url, "sink").await;
    let target = Target::Name { name: "sink".parse().unwrap() };
    for i in 0..300u64 {
        for (ws, who) in [(&mut a, 0), (&mut b, 1), (&mut c, 2)] {
            send(ws, &msg(target.clone(), &format!(r#"{{"from":{who},"n":{i}}}"#), i)).await;
        }
    }
    let mut last = [None::<u64>; 3];
    let mut got = 0;
    while got < 900 {
        if let Frame::Relay { data, .. } = non_event(&mut sink).await {
            let v = data.to_value();
            let (from, n) = (v["from"].as_u64().unwrap() as usize, v["n"].as_u64().unwrap());
            assert_eq!(last[from].map_or(0, |l| l + 1), n, "sender {from}");
            last[from] = Some(n);
            got += 1;
        }
    }
}

#[tokio::test]
async fn slow_consumer_is_closed_and_unregistered() {
    let hub = start_with(|c| c.queue_capacity = 8).await;
    let url = hub.gateway.ws_url();
    let (mut publisher, _) = join(&url, "publisher").await;
    let (mut sloth, _) = join(&url, "sloth").await;
    let owned: concierge_core::protocol::GroupName = "sloth_room".parse().unwrap();
    let stream: concierge_core::protocol::GroupName = "firehose".parse().unwrap();
    send(&mut sloth, &Frame::CreateGroup { group: owned.clone(), policy: BroadcastPolicy::Anyone, seq: Some(1) }).await;
    send(&mut sloth, &Frame::Subscribe { group: stream.clone(), seq: Some(2) }).await;
    send(&mut publisher, &Frame::CreateGroup { group: stream.clone(), policy: BroadcastPolicy::OwnerOnly, seq: Some(1) }).await;
    send(&mut publisher, &Frame::Subscribe { group: owned.clone(), seq: Some(2) }).await;
    // Wait until both subscriptions are in place.
    let mut oks = 0;
    while oks < 2 {
        if let Frame::Status { code: StatusCode::Ok, .. } = non_event(&mut publisher).await {
            oks += 1;
        }
    }
    send(&mut publisher, &Frame::Fetch { group: Some(stream.clone()), seq: Some(3), what: FetchKind::Subscribers }).await;
    loop {
        match non_event(&mut publisher).await {
            Frame::List { items, .. } if items.len() == 1 => break,
            Frame::List { .. } => {
                tokio::time::sleep(Duration::from_millis(10)).await;
                send(&mut publisher, &Frame::Fetch { group: Some(stream.clone()), seq: Some(3), what: FetchKind::Subscribers }).await;
            }
            _ => {}
        }
    }
    let blob = format!(r#"{{"pad":"{}"}}"#, "z".repeat(256 * 1024));
    let mut sent = 0;
    let deleted = loop {
        send(&mut publisher, &msg(Target::Group { group: stream.clone() }, &blob, sent)).await;
        sent += 1;
        assert!(sent < 2000, "sloth never overflowed");
        if let Next::Frame(Frame::Event { kind: EventKind::GroupDeleted, subject }) =
            next_within(&mut publisher, Duration::from_millis(1)).await
        {
            break subject;
        }
    };
    assert_eq!(deleted, "sloth_room");
    assert_eq!(hub.gateway.relay().client_count(), 1);
    // The sloth finally reads: buffered relays, then the 4008 close.
    loop {
        match next_within(&mut sloth, Duration::from_secs(10)).await {
            Next::Frame(_) => continue,
            Next::Closed(code) => {
                assert_eq!(code, Some(CLOSE_SLOW_CONSUMER));
                break;
            }
            Next::Silent => panic!("no close frame"),
        }
    }
}

#[tokio::test]
async fn shutdown_sends_close_frames_to_every_connection() {
    let hub = start().await;
    let url = hub.gateway.ws_url();
    let mut conns = Vec::new();
    for i in 0..100 {
        conns.push(join(&url, &format!("c{i}")).await.0);
    }
    let mut pending = raw(&url).await;
    hub.gateway.shutdown().await.unwrap();
    for ws in conns.iter_mut().chain(std::iter::once(&mut pending)) {
        loop {
            match next(ws).await {
                Next::Frame(_) => continue,
                closed => {
                    assert_eq!(closed, Next::Closed(Some(CLOSE_GOING_AWAY)));
                    break;
                }
            }
        }
    }
}

#[tokio::test]
async fn healthz_and_canonical_hello_text() {
    let hub = start().await;
    let body = reqwest::get(format!("{}/healthz", hub.gateway.http_url())).await.unwrap();
    assert_eq!(body.status(), 200);
    assert_eq!(body.text().await.unwrap(), "ok");
    let mut ws = raw(&hub.gateway.ws_url()).await;
    send_text(&mut ws, r#"{"type":"identify","kind":"service","name":"physics_engine","tags":[],"version":"1.0"}"#).await;
    use futures_util::StreamExt;
    let text = match ws.next().await.unwrap().unwrap() {
        tokio_tungstenite::tungstenite::Message::Text(t) => t.to_string(),
        other => panic!("{other:?}"),
    };
    assert!(text.starts_with(r#"{"type":"hello","file_token":""#), "{text}");
    assert!(!text.contains('\n'));
    assert!(matches!(decode_frame(&text).unwrap(), Frame::Hello { .. }));
}
