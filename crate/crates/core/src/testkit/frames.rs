//! Proptest strategies covering every frame variant, plus text-level helpers
//! that permute or extend an encoded frame without going through the codec.

use std::collections::HashMap;

use proptest::collection::vec;
use proptest::prelude::*;
use serde_json::value::RawValue;
use serde_json::Value;

use crate::protocol::{
    BroadcastPolicy, ClientId, ClientKind, ClientName, ClientProfile, EventKind, FetchKind, Frame,
    GroupName, GroupSummary, ListItems, Payload, StatusCode, Target,
};

pub fn arb_name() -> impl Strategy<Value = ClientName> {
    "[A-Za-z0-9_-]{1,64}".prop_map(|s| s.parse().unwrap())
}

pub fn arb_group() -> impl Strategy<Value = GroupName> {
    "[A-Za-z0-9_-]{1,64}".prop_map(|s| s.parse().unwrap())
}

pub fn arb_id() -> impl Strategy<Value = ClientId> {
    any::<[u8; 16]>().prop_map(ClientId::from_random_bytes)
}

pub fn arb_tags() -> impl Strategy<Value = Vec<String>> {
    vec("\\PC{0,32}", 0..=16)
}

pub fn arb_kind() -> impl Strategy<Value = ClientKind> {
    prop_oneof![Just(ClientKind::User), Just(ClientKind::Service)]
}

pub fn arb_policy() -> impl Strategy<Value = BroadcastPolicy> {
    prop_oneof![
        Just(BroadcastPolicy::OwnerOnly),
        Just(BroadcastPolicy::Subscribers),
        Just(BroadcastPolicy::Anyone)
    ]
}

pub fn arb_fetch() -> impl Strategy<Value = FetchKind> {
    prop_oneof![
        Just(FetchKind::Clients),
        Just(FetchKind::Groups),
        Just(FetchKind::Subscribers)
    ]
}

pub fn arb_profile() -> impl Strategy<Value = ClientProfile> {
    (arb_id(), arb_kind(), arb_name(), arb_tags()).prop_map(|(id, kind, name, tags)| {
        ClientProfile {
            id,
            kind,
            name,
            tags,
        }
    })
}

pub fn arb_target() -> impl Strategy<Value = Target> {
    prop_oneof![
        arb_id().prop_map(|id| Target::Uuid { id }),
        arb_name().prop_map(|name| Target::Name { name }),
        arb_group().prop_map(|group| Target::Group { group }),
        Just(Target::All),
    ]
}

/// Arbitrary JSON trees, including floats and unicode strings.
pub fn arb_json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        any::<u64>().prop_map(Value::from),
        (-1e300f64..1e300).prop_map(Value::from),
        "\\PC{0,16}".prop_map(Value::String),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            vec(inner.clone(), 0..6).prop_map(Value::Array),
            vec(("\\PC{0,8}", inner), 0..6)
                .prop_map(|kv| Value::Object(kv.into_iter().collect())),
        ]
    })
}

pub fn arb_payload() -> impl Strategy<Value = Payload> {
    arb_json().prop_map(|v| Payload::from_value(&v))
}

fn arb_status() -> impl Strategy<Value = StatusCode> {
    proptest::sample::select(StatusCode::ALL.to_vec())
}

fn arb_event() -> impl Strategy<Value = EventKind> {
    proptest::sample::select(vec![
        EventKind::ClientJoined,
        EventKind::ClientLeft,
        EventKind::GroupCreated,
        EventKind::GroupDeleted,
    ])
}

fn arb_list() -> impl Strategy<Value = Frame> {
    let summary = (arb_group(), arb_name(), arb_policy(), any::<u64>()).prop_map(
        |(name, owner, policy, subscribers)| GroupSummary {
            name,
            owner,
            policy,
            subscribers,
        },
    );
    (
        arb_fetch(),
        vec(arb_profile(), 0..4),
        vec(summary, 0..4),
        proptest::option::of(arb_group()),
        proptest::option::of(any::<u64>()),
    )
        .prop_map(|(what, profiles, groups, group, re)| Frame::List {
            group,
            items: match what {
                FetchKind::Groups => ListItems::Groups(groups),
                _ => ListItems::Profiles(profiles),
            },
            re,
            what,
        })
}

/// Every frame variant, uniformly.
pub fn arb_frame() -> impl Strategy<Value = Frame> {
    let seq = || proptest::option::of(any::<u64>());
    prop_oneof![
        (arb_kind(), arb_name(), arb_tags(), "\\PC{0,8}").prop_map(|(kind, name, tags, version)| {
            Frame::Identify {
                kind,
                name,
                tags,
                version,
            }
        }),
        (
            proptest::option::of("\\PC{0,16}"),
            arb_payload(),
            any::<u64>(),
            arb_target()
        )
            .prop_map(|(content_hint, data, seq, target)| Frame::Message {
                content_hint,
                data,
                seq,
                target
            }),
        (arb_group(), arb_policy(), seq())
            .prop_map(|(group, policy, seq)| Frame::CreateGroup { group, policy, seq }),
        (arb_group(), seq()).prop_map(|(group, seq)| Frame::DeleteGroup { group, seq }),
        (arb_group(), seq()).prop_map(|(group, seq)| Frame::Subscribe { group, seq }),
        (arb_group(), seq()).prop_map(|(group, seq)| Frame::Unsubscribe { group, seq }),
        (proptest::option::of(arb_group()), seq(), arb_fetch())
            .prop_map(|(group, seq, what)| Frame::Fetch { group, seq, what }),
        ("[0-9a-f]{64}", arb_profile(), "\\PC{0,8}").prop_map(|(file_token, profile, version)| {
            Frame::Hello {
                file_token,
                profile,
                version,
            }
        }),
        (arb_payload(), arb_profile(), any::<u64>(), arb_target()).prop_map(
            |(data, origin, seq, target)| Frame::Relay {
                data,
                origin,
                seq,
                target
            }
        ),
        (arb_status(), "\\PC{0,32}", seq())
            .prop_map(|(code, detail, re)| Frame::Status { code, detail, re }),
        arb_list(),
        (arb_event(), "\\PC{0,32}").prop_map(|(kind, subject)| Frame::Event { kind, subject }),
    ]
}

/// Splits a JSON object's text into its top-level (key, raw value) members.
pub fn members(text: &str) -> Vec<(String, String)> {
    // Order is irrelevant to callers, which reorder anyway.
    let map: HashMap<String, &RawValue> = serde_json::from_str(text).expect("object text");
    map.into_iter().map(|(k, v)| (k, v.get().to_owned())).collect()
}

/// Reassembles members into object text, in the given order.
pub fn assemble(members: &[(String, String)]) -> String {
    let body: Vec<String> = members
        .iter()
        .map(|(k, v)| format!("{}:{}", Value::String(k.clone()), v))
        .collect();
    format!("{{{}}}", body.join(","))
}

/// Re-emits an encoded frame with its top-level keys shuffled.
pub fn permute_keys(text: &str, shuffle_seed: u64) -> String {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut m = members(text);
    m.sort();
    m.shuffle(&mut rand::rngs::StdRng::seed_from_u64(shuffle_seed));
    assemble(&m)
}

/// Adds an unknown key at a random position.
pub fn with_unknown_key(text: &str, key: &str, value: &Value, pos_seed: usize) -> String {
    let mut m = members(text);
    m.sort();
    let at = pos_seed % (m.len() + 1);
    m.insert(at, (key.to_owned(), value.to_string()));
    assemble(&m)
}
