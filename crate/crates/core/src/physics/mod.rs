//! Reference simulation worlds: point-mass gravity and colliding boxes.

pub mod boxes;
pub mod nbody;
pub mod presets;
pub mod service;
pub mod wire;

pub use boxes::{step_boxes, BoxBody, BoxSpec, BoxWorld, Rect, StepReport};
pub use nbody::{accelerations, step_nbody, Body, SystemState, GRAVITATIONAL_CONSTANT};
pub use service::{BoxSim, NBodySim, SimService, TickOutcome, World};
pub use wire::{EntityCommand, StreamedEntityState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimFault {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("timestep must be positive and finite, got {0}")]
    BadTimestep(f64),
}
