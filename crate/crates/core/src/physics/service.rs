//! Service-side state machines for the two reference worlds.
//!
//! A [`SimService`] owns one world, advances it once per tick, answers spec
//! fetches and applies entity commands. It is synchronous and transport-free;
//! the network adapter feeds it payloads and publishes what it returns.

use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};

use super::boxes::{BoxBody, BoxSpec, BoxWorld, Rect, Vec2};
use super::nbody::{accelerations, advance, Body, SystemState, Vec3};
use super::wire::{
    parse_request, BodySpec, CommandReply, EntityCommand, EntityPosition, FaultNotice,
    RequestError, ServiceRequest, SpawnParams, SpecReply, SpecTable, StreamedEntityState,
};
use super::SimFault;
use crate::protocol::{EntityId, Payload};

/// Box defaults for spawns that omit them.
pub const DEFAULT_HALF_EXTENTS: [f64; 2] = [0.5, 0.5];
pub const DEFAULT_BOX_MASS: f64 = 1.0;
/// Arena used by [`BoxSim::random`].
pub const DEFAULT_BOUNDS: Rect = Rect {
    min: [0.0, 0.0],
    max: [32.0, 18.0],
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error("no_such_entity")]
    NoSuchEntity,
    #[error("bad_params")]
    BadParams,
}

/// What a successful command did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    pub id: EntityId,
    pub note: Option<&'static str>,
}

/// A world that a [`SimService`] can drive.
pub trait World: Send {
    fn kind(&self) -> &'static str;
    fn step(&mut self, dt: f64) -> Result<(), SimFault>;
    /// Positions in entity-id order.
    fn positions(&self) -> Vec<EntityPosition>;
    fn spec_table(&self) -> SpecTable;
    fn apply(&mut self, cmd: &EntityCommand) -> Result<Applied, CommandError>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|c| c.is_finite())
}

fn mint(rng: &mut StdRng) -> EntityId {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    EntityId::from_random_bytes(bytes)
}

fn vec2(v: &[f64]) -> Result<Vec2, CommandError> {
    match v {
        [x, y] if x.is_finite() && y.is_finite() => Ok(Vec2::new(*x, *y)),
        _ => Err(CommandError::BadParams),
    }
}

fn vec3(v: &[f64]) -> Result<Vec3, CommandError> {
    match v {
        [x, y, z] if finite(v) => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(CommandError::BadParams),
    }
}

pub struct BoxSim {
    pub world: BoxWorld,
    rng: StdRng,
}

impl BoxSim {
    pub fn new(world: BoxWorld, seed: u64) -> Self {
        Self {
            world,
            rng: StdRng::seed_from_u64(seed),
        }
    }

    /// `count` non-overlapping boxes of assorted sizes drifting at 1–4 m/s.
    pub fn random(count: usize, seed: u64) -> Self {
        let mut sim = Self::new(BoxWorld::new(DEFAULT_BOUNDS, 1.0), seed);
        let bounds = sim.world.bounds;
        for _ in 0..count {
            let half = [sim.rng.random_range(0.3..0.9), sim.rng.random_range(0.3..0.9)];
            let mut position = bounds.center();
            for _ in 0..1000 {
                let candidate = Vec2::new(
                    sim.rng.random_range(bounds.min[0] + half[0]..bounds.max[0] - half[0]),
                    sim.rng.random_range(bounds.min[1] + half[1]..bounds.max[1] - half[1]),
                );
                let clear = sim.world.boxes().iter().all(|b| {
                    (0..2).any(|k| {
                        (b.position[k] - candidate[k]).abs() >= b.spec.half_extents[k] + half[k]
                    })
                });
                position = candidate;
                if clear {
                    break;
                }
            }
            let angle = sim.rng.random_range(0.0..std::f64::consts::TAU);
            let speed = sim.rng.random_range(1.0..4.0);
            let spec = BoxSpec {
                id: mint(&mut sim.rng),
                half_extents: half,
                color: sim.rng.random(),
                mass: 4.0 * half[0] * half[1],
            };
            sim.world.insert(BoxBody {
                spec,
                position,
                velocity: Vec2::new(angle.cos(), angle.sin()) * speed,
            });
        }
        sim
    }

    fn spawn(&mut self, p: &SpawnParams) -> Result<Applied, CommandError> {
        let half = p.half_extents.unwrap_or(DEFAULT_HALF_EXTENTS);
        let mass = p.mass.unwrap_or(DEFAULT_BOX_MASS);
        let size = self.world.bounds.size();
        if !(finite(&half) && half[0] > 0.0 && half[1] > 0.0)
            || 2.0 * half[0] > size.x
            || 2.0 * half[1] > size.y
            || !(mass.is_finite() && mass > 0.0)
        {
            return Err(CommandError::BadParams);
        }
        let mut position = match &p.position {
            Some(v) => vec2(v)?,
            None => self.world.bounds.center(),
        };
        let velocity = match &p.velocity {
            Some(v) => vec2(v)?,
            None => Vec2::zeros(),
        };
        let clamped = self.world.bounds.clamp_box(&mut position, &half);
        let color = match p.color {
            Some(c) => c,
            None => self.rng.random(),
        };
        let id = mint(&mut self.rng);
        self.world.insert(BoxBody {
            spec: BoxSpec {
                id,
                half_extents: half,
                color,
                mass,
            },
            position,
            velocity,
        });
        Ok(Applied {
            id,
            note: clamped.then_some("clamped"),
        })
    }
}

impl World for BoxSim {
    fn kind(&self) -> &'static str {
        "boxes"
    }

    fn step(&mut self, dt: f64) -> Result<(), SimFault> {
        self.world.step(dt).map(|_| ())
    }

    fn positions(&self) -> Vec<EntityPosition> {
        self.world
            .boxes()
            .iter()
            .map(|b| EntityPosition {
                id: b.spec.id,
                position: vec![b.position.x, b.position.y],
            })
            .collect()
    }

    fn spec_table(&self) -> SpecTable {
        SpecTable::Boxes {
            bounds: self.world.bounds,
            entities: self.world.boxes().iter().map(|b| b.spec.clone()).collect(),
        }
    }

    fn apply(&mut self, cmd: &EntityCommand) -> Result<Applied, CommandError> {
        match cmd {
            EntityCommand::Spawn(p) => self.spawn(p),
            EntityCommand::Delete { id } => self
                .world
                .remove(*id)
                .map(|_| Applied { id: *id, note: None })
                .ok_or(CommandError::NoSuchEntity),
            EntityCommand::MoveTo { id, position } => {
                let mut target = vec2(position)?;
                let bounds = self.world.bounds;
                let b = self.world.get_mut(*id).ok_or(CommandError::NoSuchEntity)?;
                let clamped = bounds.clamp_box(&mut target, &b.spec.half_extents);
                b.position = target;
                b.velocity = Vec2::zeros();
                Ok(Applied {
                    id: *id,
                    note: clamped.then_some("clamped"),
                })
            }
            EntityCommand::Nudge { id, delta } => {
                let delta = vec2(delta)?;
                let bounds = self.world.bounds;
                let b = self.world.get_mut(*id).ok_or(CommandError::NoSuchEntity)?;
                let mut target = b.position + delta;
                let clamped = bounds.clamp_box(&mut target, &b.spec.half_extents);
                b.position = target;
                Ok(Applied {
                    id: *id,
                    note: clamped.then_some("clamped"),
                })
            }
        }
    }

    fn len(&self) -> usize {
        self.world.len()
    }
}

pub struct NBodySim {
    pub state: SystemState,
    /// Accelerations at the current positions, reused by the next step.
    acc: Option<Vec<Vec3>>,
    rng: StdRng,
}

impl NBodySim {
    pub fn new(state: SystemState, seed: u64) -> Self {
        Self {
            state,
            acc: None,
            rng: StdRng::seed_from_u64(seed),
        }
    }

    fn spawn(&mut self, p: &SpawnParams) -> Result<Applied, CommandError> {
        let mass = p.mass.ok_or(CommandError::BadParams)?;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(CommandError::BadParams);
        }
        let position = vec3(p.position.as_deref().ok_or(CommandError::BadParams)?)?;
        let velocity = match &p.velocity {
            Some(v) => vec3(v)?,
            None => Vec3::zeros(),
        };
        let display_radius = match p.display_radius {
            Some(r) if r.is_finite() && r > 0.0 => r,
            Some(_) => return Err(CommandError::BadParams),
            None => self
                .state
                .bodies
                .iter()
                .map(|b| b.display_radius)
                .reduce(f64::min)
                .unwrap_or(1.0),
        };
        let id = mint(&mut self.rng);
        let color = match p.color {
            Some(c) => c,
            None => self.rng.random(),
        };
        self.state.insert(Body {
            id,
            label: p
                .label
                .clone()
                .unwrap_or_else(|| format!("body-{}", &id.to_string()[..8])),
            mass,
            position,
            velocity,
            display_radius,
            color,
        });
        self.acc = None;
        Ok(Applied { id, note: None })
    }
}

impl World for NBodySim {
    fn kind(&self) -> &'static str {
        "nbody"
    }

    fn step(&mut self, dt: f64) -> Result<(), SimFault> {
        let mut acc = match self.acc.take() {
            Some(a) => a,
            None => accelerations(&self.state)?,
        };
        advance(&mut self.state, dt, &mut acc)?;
        self.acc = Some(acc);
        Ok(())
    }

    fn positions(&self) -> Vec<EntityPosition> {
        self.state
            .bodies
            .iter()
            .map(|b| EntityPosition {
                id: b.id,
                position: b.position.iter().copied().collect(),
            })
            .collect()
    }

    fn spec_table(&self) -> SpecTable {
        SpecTable::Nbody {
            entities: self
                .state
                .bodies
                .iter()
                .map(|b| BodySpec {
                    id: b.id,
                    label: b.label.clone(),
                    mass: b.mass,
                    display_radius: b.display_radius,
                    color: b.color,
                })
                .collect(),
        }
    }

    fn apply(&mut self, cmd: &EntityCommand) -> Result<Applied, CommandError> {
        let applied = match cmd {
            EntityCommand::Spawn(p) => return self.spawn(p),
            EntityCommand::Delete { id } => {
                self.state.remove(*id).ok_or(CommandError::NoSuchEntity)?;
                Applied { id: *id, note: None }
            }
            EntityCommand::MoveTo { id, position } => {
                let target = vec3(position)?;
                let i = self.state.index_of(*id).ok_or(CommandError::NoSuchEntity)?;
                let b = &mut self.state.bodies[i];
                b.position = target;
                b.velocity = Vec3::zeros();
                Applied { id: *id, note: None }
            }
            EntityCommand::Nudge { id, delta } => {
                let delta = vec3(delta)?;
                let i = self.state.index_of(*id).ok_or(CommandError::NoSuchEntity)?;
                self.state.bodies[i].position += delta;
                Applied { id: *id, note: None }
            }
        };
        self.acc = None;
        Ok(applied)
    }

    fn len(&self) -> usize {
        self.state.bodies.len()
    }
}

/// Result of one service tick.
#[derive(Debug, Clone, PartialEq)]
pub enum TickOutcome {
    State(StreamedEntityState),
    /// The world just faulted; publish this once, then the service pauses.
    Fault(FaultNotice),
    Paused,
}

pub struct SimService {
    world: Box<dyn World>,
    dt: f64,
    tick: u64,
    fault: Option<SimFault>,
}

impl SimService {
    pub fn new(world: Box<dyn World>, dt: f64) -> Self {
        Self {
            world,
            dt,
            tick: 0,
            fault: None,
        }
    }

    pub fn world(&self) -> &dyn World {
        self.world.as_ref()
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn fault(&self) -> Option<&SimFault> {
        self.fault.as_ref()
    }

    /// Advances one step and returns the state to publish.
    pub fn tick(&mut self) -> TickOutcome {
        if self.fault.is_some() {
            return TickOutcome::Paused;
        }
        if let Err(fault) = self.world.step(self.dt) {
            let notice = FaultNotice {
                fault: fault.to_string(),
                tick: self.tick,
            };
            self.fault = Some(fault);
            return TickOutcome::Fault(notice);
        }
        self.tick += 1;
        TickOutcome::State(self.snapshot())
    }

    pub fn snapshot(&self) -> StreamedEntityState {
        StreamedEntityState {
            tick: self.tick,
            entities: self.world.positions(),
            ts_us: None,
        }
    }

    pub fn handle_fetch_spec(&self, req: Option<serde_json::Value>) -> SpecReply {
        SpecReply {
            reply: "fetch_spec".into(),
            table: self.world.spec_table(),
            req,
        }
    }

    pub fn handle_command(
        &mut self,
        cmd: &EntityCommand,
        req: Option<serde_json::Value>,
    ) -> CommandReply {
        match self.world.apply(cmd) {
            Ok(applied) => CommandReply {
                reply: cmd.name().into(),
                ok: true,
                id: Some(applied.id),
                error: None,
                note: applied.note.map(str::to_owned),
                req,
            },
            Err(e) => CommandReply::error(cmd.name(), &e.to_string(), req),
        }
    }

    /// Handles one relayed payload. Returns the reply for the sender, or
    /// `None` when the payload is not a service request.
    pub fn handle_payload(&mut self, data: &Payload) -> Option<Payload> {
        let reply = match parse_request(data) {
            Ok(request) => match request.body {
                ServiceRequest::FetchSpec => Payload::encode(&self.handle_fetch_spec(request.req)),
                ServiceRequest::Command(cmd) => {
                    Payload::encode(&self.handle_command(&cmd, request.req))
                }
            },
            Err(RequestError::NotACommand) => return None,
            Err(RequestError::Unknown { cmd, req }) => {
                Payload::encode(&CommandReply::error(&cmd, "unknown_command", req))
            }
            Err(RequestError::BadParams { cmd, req, .. }) => {
                Payload::encode(&CommandReply::error(&cmd, "bad_params", req))
            }
        };
        Some(reply.expect("replies serialize"))
    }
}
