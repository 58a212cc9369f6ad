//! Payload schemas exchanged with simulation services inside MESSAGE/RELAY
//! `data`.
//!
//! Requests carry a `cmd` discriminator; replies carry `reply`. Streamed
//! state carries only ids and positions, never spec attributes.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::boxes::{BoxSpec, Rect};
use crate::protocol::{EntityId, Payload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityPosition {
    pub id: EntityId,
    pub position: Vec<f64>,
}

/// One tick of positional state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamedEntityState {
    pub tick: u64,
    pub entities: Vec<EntityPosition>,
    /// Publisher wall clock in microseconds since the Unix epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts_us: Option<u64>,
}

/// Optional spawn parameters; which ones apply depends on the world.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpawnParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_extents: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_radius: Option<f64>,
}

/// User-issued edits to a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum EntityCommand {
    Spawn(SpawnParams),
    Delete { id: EntityId },
    MoveTo { id: EntityId, position: Vec<f64> },
    Nudge { id: EntityId, delta: Vec<f64> },
}

impl EntityCommand {
    pub fn name(&self) -> &'static str {
        match self {
            EntityCommand::Spawn(_) => "spawn",
            EntityCommand::Delete { .. } => "delete",
            EntityCommand::MoveTo { .. } => "move_to",
            EntityCommand::Nudge { .. } => "nudge",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceRequest {
    FetchSpec,
    Command(EntityCommand),
}

/// A request plus the caller's optional `req` correlation value, echoed back.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub body: ServiceRequest,
    pub req: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RequestError {
    #[error("payload carries no cmd")]
    NotACommand,
    #[error("unknown command {cmd:?}")]
    Unknown { cmd: String, req: Option<Value> },
    #[error("bad parameters for {cmd}: {detail}")]
    BadParams {
        cmd: String,
        detail: String,
        req: Option<Value>,
    },
}

const KNOWN: [&str; 5] = ["fetch_spec", "spawn", "delete", "move_to", "nudge"];

pub fn parse_request(data: &Payload) -> Result<Request, RequestError> {
    let value = data.to_value();
    let Some(cmd) = value.get("cmd").and_then(Value::as_str).map(str::to_owned) else {
        return Err(RequestError::NotACommand);
    };
    let req = value.get("req").cloned().filter(|v| !v.is_null());
    if !KNOWN.contains(&cmd.as_str()) {
        return Err(RequestError::Unknown { cmd, req });
    }
    let body = if cmd == "fetch_spec" {
        ServiceRequest::FetchSpec
    } else {
        match serde_json::from_value::<EntityCommand>(value) {
            Ok(c) => ServiceRequest::Command(c),
            Err(e) => {
                return Err(RequestError::BadParams {
                    cmd,
                    detail: e.to_string(),
                    req,
                })
            }
        }
    };
    Ok(Request { body, req })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandReply {
    pub reply: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub req: Option<Value>,
}

impl CommandReply {
    pub fn error(reply: &str, error: &str, req: Option<Value>) -> Self {
        Self {
            reply: reply.to_owned(),
            ok: false,
            id: None,
            error: Some(error.to_owned()),
            note: None,
            req,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub id: EntityId,
    pub label: String,
    pub mass: f64,
    pub display_radius: f64,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "world", rename_all = "snake_case")]
pub enum SpecTable {
    Boxes {
        bounds: Rect,
        entities: Vec<BoxSpec>,
    },
    Nbody {
        entities: Vec<BodySpec>,
    },
}

impl SpecTable {
    pub fn ids(&self) -> Vec<EntityId> {
        match self {
            SpecTable::Boxes { entities, .. } => entities.iter().map(|e| e.id).collect(),
            SpecTable::Nbody { entities } => entities.iter().map(|e| e.id).collect(),
        }
    }
}

/// Reply to `{"cmd":"fetch_spec"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecReply {
    pub reply: String,
    #[serde(flatten)]
    pub table: SpecTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub req: Option<Value>,
}

/// Published to the service group once when a world stops advancing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultNotice {
    pub fault: String,
    pub tick: u64,
}
