use std::path::PathBuf;

use concierge_core::protocol::{decode_frame, encode_frame, Frame, StatusCode};
use concierge_core::testkit::frames::{arb_frame, arb_json, permute_keys, with_unknown_key};
use proptest::prelude::*;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn decode_inverts_encode(frame in arb_frame()) {
        let text = encode_frame(&frame);
        prop_assert!(!text.contains('\n'));
        let back = decode_frame(&text).map_err(|e| TestCaseError::fail(format!("{e}: {text}")))?;
        prop_assert_eq!(&back, &frame);
        prop_assert_eq!(encode_frame(&back), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn key_order_does_not_matter(frame in arb_frame(), shuffle in any::<u64>()) {
        let text = encode_frame(&frame);
        let shuffled = permute_keys(&text, shuffle);
        prop_assert_eq!(decode_frame(&shuffled).unwrap(), frame);
    }

    #[test]
    fn unknown_keys_are_ignored(frame in arb_frame(), extra in arb_json(), pos in any::<usize>()) {
        let text = encode_frame(&frame);
        let extended = with_unknown_key(&text, "x_future_field", &extra, pos);
        prop_assert_eq!(decode_frame(&extended).unwrap(), frame);
    }

    #[test]
    fn relayed_payload_is_byte_identical(frame in arb_frame(), origin in concierge_core::testkit::frames::arb_profile()) {
        if let Frame::Message { data, seq, target, .. } = frame {
            let sent = data.as_str().to_owned();
            let relay = Frame::Relay { data, origin, seq, target };
            let text = encode_frame(&relay);
            let needle = format!("\"data\":{sent},");
            prop_assert!(text.contains(&needle));
            match decode_frame(&text).unwrap() {
                Frame::Relay { data, .. } => prop_assert_eq!(data.as_str(), sent.as_str()),
                other => prop_assert!(false, "decoded {other:?}"),
            }
        }
    }
}

#[test]
fn golden_fixtures_round_trip_byte_identically() {
    let frames = std::fs::read_to_string(fixtures().join("frames.jsonl")).unwrap();
    let comments = std::fs::read_to_string(fixtures().join("frames.comments.txt")).unwrap();
    let lines: Vec<&str> = frames.lines().collect();
    assert_eq!(lines.len(), comments.lines().count(), "one comment per frame");
    let mut seen = std::collections::BTreeSet::new();
    for (n, line) in lines.iter().enumerate() {
        let frame = decode_frame(line).unwrap_or_else(|e| panic!("line {}: {e}", n + 1));
        assert_eq!(&encode_frame(&frame), line, "line {}", n + 1);
        seen.insert(frame.type_name());
    }
    assert_eq!(seen.len(), 12, "every frame type appears: {seen:?}");
}

#[test]
fn canonical_identify_text() {
    let text = r#"{"type":"identify","kind":"service","name":"physics_engine","tags":[],"version":"1.0"}"#;
    assert_eq!(encode_frame(&decode_frame(text).unwrap()), text);
}

#[test]
fn rejections_map_to_malformed_frame() {
    for bad in [
        "",
        "[]",
        "{}",
        r#"{"type":"teleport"}"#,
        r#"{"type":"identify","kind":"robot","name":"a","tags":[],"version":"1.0"}"#,
        r#"{"type":"message","data":{},"seq":-1,"target":{"type":"all"}}"#,
        r#"{"type":"message","data":{},"seq":1,"target":{"type":"uuid","id":"NOT-A-UUID"}}"#,
        r#"{"type":"subscribe","group":"has space"}"#,
    ] {
        let err = decode_frame(bad).expect_err(bad);
        assert_eq!(err.status(), StatusCode::MalformedFrame);
    }
}
