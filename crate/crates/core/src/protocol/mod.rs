//! Wire vocabulary shared by the hub, the SDK, the services and browser clients.
//!
//! Every frame is one JSON object with a snake_case `type` discriminator
//! followed by its fields in alphabetical order. [`encode_frame`] always
//! produces that canonical single-line form; [`decode_frame`] accepts keys in
//! any order and ignores keys it does not know.

mod codec;
mod frame;
mod ids;
mod payload;

pub use codec::{decode_frame, encode_frame, DecodeError};
pub use frame::{
    BroadcastPolicy, ClientKind, ClientProfile, EventKind, FetchKind, Frame, GroupSummary,
    ListItems, StatusCode, Target,
};
pub use ids::{
    validate_name, validate_tags, ClientId, ClientName, EntityId, GroupName, IdentError,
    MAX_NAME_LEN, MAX_TAGS, MAX_TAG_LEN,
};
pub use payload::Payload;

/// Version string both sides must agree on at IDENTIFY time.
pub const PROTOCOL_VERSION: &str = "1.0";
