use std::collections::HashMap;

use serde::de::DeserializeOwned;
use serde_json::value::RawValue;

use super::frame::{ClientProfile, FetchKind, Frame, GroupSummary, ListItems, StatusCode};
use super::ids::validate_tags;
use super::payload::Payload;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed frame: {detail}")]
pub struct DecodeError {
    pub detail: String,
}

impl DecodeError {
    fn new(detail: impl Into<String>) -> Self {
        Self {
            detail: detail.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::MalformedFrame
    }
}

/// Canonical single-line JSON for a frame.
pub fn encode_frame(frame: &Frame) -> String {
    serde_json::to_string(frame).expect("frames always serialize")
}

/// Parses one frame. Keys may come in any order; unknown keys are ignored.
pub fn decode_frame(text: &str) -> Result<Frame, DecodeError> {
    let fields: HashMap<String, &RawValue> =
        serde_json::from_str(text).map_err(|e| DecodeError::new(format!("not a JSON object: {e}")))?;
    let fields = Fields(fields);
    let kind: String = fields.req("type")?;

    let frame = match kind.as_str() {
        "identify" => {
            let tags: Vec<String> = fields.req("tags")?;
            check_tags(&tags)?;
            Frame::Identify {
                kind: fields.req("kind")?,
                name: fields.req("name")?,
                tags,
                version: fields.req("version")?,
            }
        }
        "message" => Frame::Message {
            content_hint: fields.opt("content_hint")?,
            data: fields.payload("data")?,
            seq: fields.req("seq")?,
            target: fields.req("target")?,
        },
        "create_group" => Frame::CreateGroup {
            group: fields.req("group")?,
            policy: fields.req("policy")?,
            seq: fields.opt("seq")?,
        },
        "delete_group" => Frame::DeleteGroup {
            group: fields.req("group")?,
            seq: fields.opt("seq")?,
        },
        "subscribe" => Frame::Subscribe {
            group: fields.req("group")?,
            seq: fields.opt("seq")?,
        },
        "unsubscribe" => Frame::Unsubscribe {
            group: fields.req("group")?,
            seq: fields.opt("seq")?,
        },
        "fetch" => Frame::Fetch {
            group: fields.opt("group")?,
            seq: fields.opt("seq")?,
            what: fields.req("what")?,
        },
        "hello" => Frame::Hello {
            file_token: fields.req("file_token")?,
            profile: fields.profile("profile")?,
            version: fields.req("version")?,
        },
        "relay" => Frame::Relay {
            data: fields.payload("data")?,
            origin: fields.profile("origin")?,
            seq: fields.req("seq")?,
            target: fields.req("target")?,
        },
        "status" => Frame::Status {
            code: fields.req("code")?,
            detail: fields.req("detail")?,
            re: fields.opt("re")?,
        },
        "list" => {
            let what: FetchKind = fields.req("what")?;
            let items = match what {
                FetchKind::Clients | FetchKind::Subscribers => {
                    let profiles: Vec<ClientProfile> = fields.req("items")?;
                    for p in &profiles {
                        check_tags(&p.tags)?;
                    }
                    ListItems::Profiles(profiles)
                }
                FetchKind::Groups => ListItems::Groups(fields.req::<Vec<GroupSummary>>("items")?),
            };
            Frame::List {
                group: fields.opt("group")?,
                items,
                re: fields.opt("re")?,
                what,
            }
        }
        "event" => Frame::Event {
            kind: fields.req("kind")?,
            subject: fields.req("subject")?,
        },
        other => return Err(DecodeError::new(format!("unknown frame type {other:?}"))),
    };
    Ok(frame)
}

struct Fields<'a>(HashMap<String, &'a RawValue>);

impl Fields<'_> {
    fn req<T: DeserializeOwned>(&self, key: &str) -> Result<T, DecodeError> {
        match self.0.get(key) {
            Some(raw) => parse_field(key, raw),
            None => Err(DecodeError::new(format!("missing field `{key}`"))),
        }
    }

    /// Absent and explicit `null` both read as `None`.
    fn opt<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, DecodeError> {
        match self.0.get(key) {
            Some(raw) if raw.get() != "null" => parse_field(key, raw).map(Some),
            _ => Ok(None),
        }
    }

    fn payload(&self, key: &str) -> Result<Payload, DecodeError> {
        self.0
            .get(key)
            .map(|raw| Payload::from_raw(raw))
            .ok_or_else(|| DecodeError::new(format!("missing field `{key}`")))
    }

    fn profile(&self, key: &str) -> Result<ClientProfile, DecodeError> {
        let profile: ClientProfile = self.req(key)?;
        check_tags(&profile.tags)?;
        Ok(profile)
    }
}

fn parse_field<T: DeserializeOwned>(key: &str, raw: &RawValue) -> Result<T, DecodeError> {
    serde_json::from_str(raw.get()).map_err(|e| DecodeError::new(format!("field `{key}`: {e}")))
}

fn check_tags(tags: &[String]) -> Result<(), DecodeError> {
    if validate_tags(tags) {
        Ok(())
    } else {
        Err(DecodeError::new("too many tags or tag too long"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{BroadcastPolicy, ClientKind, Target};

    fn identify() -> Frame {
        Frame::Identify {
            kind: ClientKind::Service,
            name: "physics_engine".parse().unwrap(),
            tags: vec![],
            version: "1.0".into(),
        }
    }

    #[test]
    fn identify_canonical_text() {
        assert_eq!(
            encode_frame(&identify()),
            r#"{"type":"identify","kind":"service","name":"physics_engine","tags":[],"version":"1.0"}"#
        );
    }

    #[test]
    fn message_to_all() {
        let f = Frame::Message {
            content_hint: None,
            data: Payload::empty(),
            seq: 0,
            target: Target::All,
        };
        let text = encode_frame(&f);
        assert_eq!(text, r#"{"type":"message","data":{},"seq":0,"target":{"type":"all"}}"#);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["target"], serde_json::json!({"type": "all"}));
        assert_eq!(decode_frame(&text).unwrap(), f);
    }

    #[test]
    fn missing_fields_rejected() {
        let err = decode_frame(r#"{"type":"identify"}"#).unwrap_err();
        assert_eq!(err.status(), StatusCode::MalformedFrame);
    }

    #[test]
    fn rejects_non_objects_and_unknown_types() {
        for bad in [
            "",
            "not json",
            "[]",
            "42",
            r#"{"kind":"user"}"#,
            r#"{"type":"teleport"}"#,
            r#"{"type":7}"#,
        ] {
            assert!(decode_frame(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_wrong_field_types_and_bad_names() {
        for bad in [
            r#"{"type":"identify","kind":"service","name":"has space","tags":[],"version":"1.0"}"#,
            r#"{"type":"identify","kind":"robot","name":"x","tags":[],"version":"1.0"}"#,
            r#"{"type":"identify","kind":"user","name":"x","tags":"nope","version":"1.0"}"#,
            r#"{"type":"message","data":{},"seq":-1,"target":{"type":"all"}}"#,
            r#"{"type":"message","data":{},"seq":1,"target":{"type":"uuid","id":"ABC"}}"#,
            r#"{"type":"status","code":"teapot","detail":""}"#,
            r#"{"type":"create_group","group":"g","policy":"everyone"}"#,
        ] {
            assert!(decode_frame(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn unknown_keys_and_null_optionals() {
        let f = decode_frame(
            r#"{"extra":[1,2],"group":"sim","policy":"owner_only","seq":null,"type":"create_group"}"#,
        )
        .unwrap();
        assert_eq!(
            f,
            Frame::CreateGroup {
                group: "sim".parse().unwrap(),
                policy: BroadcastPolicy::OwnerOnly,
                seq: None
            }
        );
    }

    #[test]
    fn too_many_tags_rejected() {
        let tags: Vec<String> = (0..17).map(|i| format!("t{i}")).collect();
        let text = format!(
            r#"{{"type":"identify","kind":"user","name":"x","tags":{},"version":"1.0"}}"#,
            serde_json::to_string(&tags).unwrap()
        );
        assert!(decode_frame(&text).is_err());
    }

    #[test]
    fn payload_passes_through_verbatim() {
        let text = r#"{"type":"message","seq":3,"target":{"type":"all"},"data":{"z":1,"a":[1.0,2e2]}}"#;
        let Frame::Message { data, .. } = decode_frame(text).unwrap() else {
            panic!()
        };
        assert_eq!(data.as_str(), r#"{"z":1,"a":[1.0,2e2]}"#);
    }
}
