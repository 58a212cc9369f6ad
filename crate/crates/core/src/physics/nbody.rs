//! Newtonian point-mass gravity with a velocity-Verlet integrator.

use nalgebra::Vector3;

use super::SimFault;
use crate::protocol::EntityId;

pub type Vec3 = Vector3<f64>;

/// Standard gravitational constant in m³·kg⁻¹·s⁻².
pub const GRAVITATIONAL_CONSTANT: f64 = 6.674e-11;

/// Below this body count the rayon path is not worth its overhead.
#[cfg(feature = "parallel")]
const PARALLEL_MIN_BODIES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub id: EntityId,
    pub label: String,
    /// kg, > 0
    pub mass: f64,
    /// m
    pub position: Vec3,
    /// m/s
    pub velocity: Vec3,
    /// Drawing hints served with the spec table; no effect on dynamics.
    pub display_radius: f64,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub time: f64,
    pub g: f64,
    pub softening: f64,
    /// Kept sorted by id so iteration order is reproducible.
    pub bodies: Vec<Body>,
}

impl SystemState {
    pub fn new(g: f64, softening: f64, mut bodies: Vec<Body>) -> Self {
        bodies.sort_by_key(|b| b.id);
        Self {
            time: 0.0,
            g,
            softening,
            bodies,
        }
    }

    pub fn insert(&mut self, body: Body) {
        let at = self
            .bodies
            .binary_search_by(|b| b.id.cmp(&body.id))
            .unwrap_or_else(|e| e);
        self.bodies.insert(at, body);
    }

    pub fn index_of(&self, id: EntityId) -> Option<usize> {
        self.bodies.binary_search_by(|b| b.id.cmp(&id)).ok()
    }

    pub fn remove(&mut self, id: EntityId) -> Option<Body> {
        self.index_of(id).map(|i| self.bodies.remove(i))
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.bodies
            .iter()
            .map(|b| 0.5 * b.mass * b.velocity.norm_squared())
            .sum()
    }

    /// Pairwise potential, softened the same way as the force law.
    pub fn potential_energy(&self) -> f64 {
        let eps2 = self.softening * self.softening;
        let mut total = 0.0;
        for (i, a) in self.bodies.iter().enumerate() {
            for b in &self.bodies[i + 1..] {
                let r = ((b.position - a.position).norm_squared() + eps2).sqrt();
                total -= self.g * a.mass * b.mass / r;
            }
        }
        total
    }

    pub fn total_energy(&self) -> f64 {
        self.kinetic_energy() + self.potential_energy()
    }

    pub fn momentum(&self) -> Vec3 {
        self.bodies.iter().map(|b| b.mass * b.velocity).sum()
    }
}

#[inline]
fn acceleration_on(i: usize, bodies: &[Body], g: f64, eps2: f64) -> Vec3 {
    let ri = bodies[i].position;
    let mut acc = Vec3::zeros();
    for (j, other) in bodies.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = other.position - ri;
        let r2 = d.norm_squared() + eps2;
        let inv_r3 = 1.0 / (r2 * r2.sqrt());
        acc += d * (g * other.mass * inv_r3);
    }
    acc
}

fn check_finite(acc: Vec<Vec3>) -> Result<Vec<Vec3>, SimFault> {
    if acc.iter().all(|a| a.iter().all(|c| c.is_finite())) {
        Ok(acc)
    } else {
        Err(SimFault::NonFinite("acceleration"))
    }
}

/// Single-threaded pairwise sum.
pub fn accelerations_seq(state: &SystemState) -> Result<Vec<Vec3>, SimFault> {
    let eps2 = state.softening * state.softening;
    check_finite(
        (0..state.bodies.len())
            .map(|i| acceleration_on(i, &state.bodies, state.g, eps2))
            .collect(),
    )
}

/// Same sum as [`accelerations_seq`], one body per rayon task. Results are
/// bitwise identical because each body's sum runs in the same order.
#[cfg(feature = "parallel")]
pub fn accelerations_par(state: &SystemState) -> Result<Vec<Vec3>, SimFault> {
    use rayon::prelude::*;
    let eps2 = state.softening * state.softening;
    check_finite(
        (0..state.bodies.len())
            .into_par_iter()
            .map(|i| acceleration_on(i, &state.bodies, state.g, eps2))
            .collect(),
    )
}

/// Gravitational acceleration of every body, in body order.
pub fn accelerations(state: &SystemState) -> Result<Vec<Vec3>, SimFault> {
    #[cfg(feature = "parallel")]
    if state.bodies.len() >= PARALLEL_MIN_BODIES {
        return accelerations_par(state);
    }
    accelerations_seq(state)
}

/// One velocity-Verlet step.
pub fn step_nbody(state: &SystemState, dt: f64) -> Result<SystemState, SimFault> {
    let mut next = state.clone();
    let mut acc = accelerations(state)?;
    advance(&mut next, dt, &mut acc)?;
    Ok(next)
}

/// In-place step reusing the accelerations of the current positions; on
/// return `acc` holds the accelerations of the new positions.
pub fn advance(state: &mut SystemState, dt: f64, acc: &mut Vec<Vec3>) -> Result<(), SimFault> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimFault::BadTimestep(dt));
    }
    debug_assert_eq!(acc.len(), state.bodies.len());
    for (b, a) in state.bodies.iter_mut().zip(acc.iter()) {
        b.position += b.velocity * dt + a * (0.5 * dt * dt);
    }
    let next_acc = accelerations(state)?;
    for (b, (a0, a1)) in state.bodies.iter_mut().zip(acc.iter().zip(&next_acc)) {
        b.velocity += (a0 + a1) * (0.5 * dt);
    }
    *acc = next_acc;
    state.time += dt;
    Ok(())
}
