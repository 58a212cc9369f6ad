use serde::{Deserialize, Serialize};

use super::ids::{ClientId, ClientName, GroupName};
use super::payload::Payload;

// Field declaration order below is the canonical key order on the wire:
// the `type` tag first, then fields alphabetically. Keep it sorted.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    User,
    Service,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: ClientId,
    pub kind: ClientKind,
    pub name: ClientName,
    pub tags: Vec<String>,
}

/// Addressing for a MESSAGE.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Target {
    Uuid { id: ClientId },
    Name { name: ClientName },
    Group { group: GroupName },
    All,
}

/// Who may publish into a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadcastPolicy {
    OwnerOnly,
    Subscribers,
    Anyone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchKind {
    Clients,
    Groups,
    Subscribers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ClientJoined,
    ClientLeft,
    GroupCreated,
    GroupDeleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum StatusCode {
    #[error("ok")]
    Ok,
    #[error("no such name")]
    NoSuchName,
    #[error("no such uuid")]
    NoSuchUuid,
    #[error("no such group")]
    NoSuchGroup,
    #[error("name already in use")]
    NameConflict,
    #[error("group already exists")]
    GroupAlreadyExists,
    #[error("not the group owner")]
    NotGroupOwner,
    #[error("not permitted")]
    BadPermission,
    #[error("not identified")]
    NotIdentified,
    #[error("already identified")]
    AlreadyIdentified,
    #[error("unsupported protocol version")]
    UnsupportedVersion,
    #[error("malformed frame")]
    MalformedFrame,
}

impl StatusCode {
    pub const ALL: [StatusCode; 12] = [
        StatusCode::Ok,
        StatusCode::NoSuchName,
        StatusCode::NoSuchUuid,
        StatusCode::NoSuchGroup,
        StatusCode::NameConflict,
        StatusCode::GroupAlreadyExists,
        StatusCode::NotGroupOwner,
        StatusCode::BadPermission,
        StatusCode::NotIdentified,
        StatusCode::AlreadyIdentified,
        StatusCode::UnsupportedVersion,
        StatusCode::MalformedFrame,
    ];

    pub fn is_ok(self) -> bool {
        self == StatusCode::Ok
    }
}

/// One row of a GROUPS listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: GroupName,
    pub owner: ClientName,
    pub policy: BroadcastPolicy,
    pub subscribers: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum ListItems {
    Profiles(Vec<ClientProfile>),
    Groups(Vec<GroupSummary>),
}

impl ListItems {
    pub fn len(&self) -> usize {
        match self {
            ListItems::Profiles(v) => v.len(),
            ListItems::Groups(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One protocol message. Client-to-hub variants come first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Frame {
    Identify {
        kind: ClientKind,
        name: ClientName,
        tags: Vec<String>,
        version: String,
    },
    Message {
        /// Reserved; carried but never validated.
        #[serde(skip_serializing_if = "Option::is_none")]
        content_hint: Option<String>,
        data: Payload,
        seq: u64,
        target: Target,
    },
    CreateGroup {
        group: GroupName,
        policy: BroadcastPolicy,
        #[serde(skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    DeleteGroup {
        group: GroupName,
        #[serde(skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Subscribe {
        group: GroupName,
        #[serde(skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Unsubscribe {
        group: GroupName,
        #[serde(skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Fetch {
        #[serde(skip_serializing_if = "Option::is_none")]
        group: Option<GroupName>,
        #[serde(skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        what: FetchKind,
    },
    Hello {
        file_token: String,
        profile: ClientProfile,
        version: String,
    },
    Relay {
        data: Payload,
        origin: ClientProfile,
        seq: u64,
        target: Target,
    },
    Status {
        code: StatusCode,
        detail: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        re: Option<u64>,
    },
    List {
        #[serde(skip_serializing_if = "Option::is_none")]
        group: Option<GroupName>,
        items: ListItems,
        #[serde(skip_serializing_if = "Option::is_none")]
        re: Option<u64>,
        what: FetchKind,
    },
    Event {
        kind: EventKind,
        subject: String,
    },
}

impl Frame {
    /// The wire discriminator.
    pub fn type_name(&self) -> &'static str {
        match self {
            Frame::Identify { .. } => "identify",
            Frame::Message { .. } => "message",
            Frame::CreateGroup { .. } => "create_group",
            Frame::DeleteGroup { .. } => "delete_group",
            Frame::Subscribe { .. } => "subscribe",
            Frame::Unsubscribe { .. } => "unsubscribe",
            Frame::Fetch { .. } => "fetch",
            Frame::Hello { .. } => "hello",
            Frame::Relay { .. } => "relay",
            Frame::Status { .. } => "status",
            Frame::List { .. } => "list",
            Frame::Event { .. } => "event",
        }
    }

    /// True for frames a client sends to the hub.
    pub fn is_client_frame(&self) -> bool {
        matches!(
            self,
            Frame::Identify { .. }
                | Frame::Message { .. }
                | Frame::CreateGroup { .. }
                | Frame::DeleteGroup { .. }
                | Frame::Subscribe { .. }
                | Frame::Unsubscribe { .. }
                | Frame::Fetch { .. }
        )
    }

    /// Correlation number carried by a client frame, if any.
    pub fn seq(&self) -> Option<u64> {
        match self {
            Frame::Message { seq, .. } => Some(*seq),
            Frame::CreateGroup { seq, .. }
            | Frame::DeleteGroup { seq, .. }
            | Frame::Subscribe { seq, .. }
            | Frame::Unsubscribe { seq, .. }
            | Frame::Fetch { seq, .. } => *seq,
            _ => None,
        }
    }

    /// Overwrites the correlation number of a client frame. Returns false for
    /// frames that carry none.
    pub fn set_seq(&mut self, value: u64) -> bool {
        match self {
            Frame::Message { seq, .. } => *seq = value,
            Frame::CreateGroup { seq, .. }
            | Frame::DeleteGroup { seq, .. }
            | Frame::Subscribe { seq, .. }
            | Frame::Unsubscribe { seq, .. }
            | Frame::Fetch { seq, .. } => *seq = Some(value),
            _ => return false,
        }
        true
    }

    /// The `re` of a STATUS or LIST reply.
    pub fn reply_to(&self) -> Option<u64> {
        match self {
            Frame::Status { re, .. } | Frame::List { re, .. } => *re,
            _ => None,
        }
    }

    pub fn status(code: StatusCode, detail: impl Into<String>, re: Option<u64>) -> Frame {
        Frame::Status {
            code,
            detail: detail.into(),
            re,
        }
    }
}
