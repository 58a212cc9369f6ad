//! Box-world scenes and plain-array conservation sums.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::physics::boxes::{BoxBody, BoxSpec, BoxWorld, Rect, Vec2};
use crate::physics::SimFault;
use crate::protocol::EntityId;

/// Bounds far beyond anything a scene reaches in one run.
pub const FAR: f64 = 1.0e6;

pub fn far_world() -> BoxWorld {
    BoxWorld::new(Rect::new([-FAR, -FAR], [FAR, FAR]), 1.0)
}

fn body(rng: &mut StdRng, position: Vec2, velocity: Vec2) -> BoxBody {
    let half_extents = [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)];
    BoxBody {
        spec: BoxSpec {
            id: EntityId::from_random_bytes(rng.random()),
            half_extents,
            color: [0, 128, 255],
            mass: 10f64.powf(rng.random_range(-1.0..1.0)),
        },
        position,
        velocity,
    }
}

/// Momentum and kinetic energy summed componentwise from raw fields.
pub fn totals(world: &BoxWorld) -> ([f64; 2], f64, f64) {
    let mut p = [0.0, 0.0];
    let mut ke = 0.0;
    let mut scale = 0.0;
    for b in world.boxes() {
        let m = b.spec.mass;
        let (vx, vy) = (b.velocity[0], b.velocity[1]);
        p[0] += m * vx;
        p[1] += m * vy;
        ke += 0.5 * m * (vx * vx + vy * vy);
        scale += m * (vx * vx + vy * vy).sqrt();
    }
    (p, ke, scale)
}

/// A pair about to meet head-on along a random axis, with a random lateral
/// offset, plus sometimes a third box nearby.
pub fn collision_scene(seed: u64) -> BoxWorld {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut world = far_world();
    let va = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let a = body(&mut rng, Vec2::zeros(), va);
    let axis = rng.random_range(0..2);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut b = body(&mut rng, Vec2::zeros(), Vec2::zeros());
    let reach = a.spec.half_extents[axis] + b.spec.half_extents[axis];
    let lateral = a.spec.half_extents[1 - axis] + b.spec.half_extents[1 - axis];
    b.position[axis] = side * (reach - rng.random_range(0.001..0.05));
    b.position[1 - axis] = rng.random_range(-0.5..0.5) * lateral;
    b.velocity = a.velocity;
    b.velocity[axis] -= side * rng.random_range(0.5..5.0);
    b.velocity[1 - axis] += rng.random_range(-1.0..1.0);
    world.insert(a);
    world.insert(b);
    if rng.random_bool(0.3) {
        let p = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let v = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let c = body(&mut rng, p, v);
        world.insert(c);
    }
    world
}

/// Dense crowd of non-overlapping boxes with random velocities.
pub fn crowd(count: usize, seed: u64) -> BoxWorld {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut world = far_world();
    let side = (count as f64).sqrt().ceil() as usize;
    for k in 0..count {
        let cell = Vec2::new((k % side) as f64 * 2.2, (k / side) as f64 * 2.2);
        let v = Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        world.insert(body(&mut rng, cell, v));
    }
    world
}

/// Worst relative momentum and energy change across one step.
pub fn step_drift(before: &BoxWorld, after: &BoxWorld) -> (f64, f64) {
    let (p0, k0, scale) = totals(before);
    let (p1, k1, _) = totals(after);
    let dp = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt() / scale;
    (dp, ((k1 - k0) / k0).abs())
}

/// Conservation measurements: `scenes` independent collision steps plus a
/// crowd run of `crowd_steps` steps. Returns (max momentum drift, max energy
/// drift, collisions seen).
pub fn conservation_run(scenes: u64, crowd_steps: usize, dt: f64) -> Result<(f64, f64, usize), SimFault> {
    let (mut dp, mut dk, mut hits) = (0.0f64, 0.0f64, 0);
    for seed in 0..scenes {
        let before = collision_scene(seed);
        let mut after = before.clone();
        let report = after.step(dt)?;
        hits += report.collisions;
        let (p, k) = step_drift(&before, &after);
        dp = dp.max(p);
        dk = dk.max(k);
    }
    let start = crowd(64, scenes);
    let mut world = start.clone();
    for _ in 0..crowd_steps {
        hits += world.step(dt)?.collisions;
        let (p, k) = step_drift(&start, &world);
        dp = dp.max(p);
        dk = dk.max(k);
    }
    Ok((dp, dk, hits))
}

/// Equal masses meeting head-on; returns the largest deviation from an exact
/// velocity swap.
pub fn head_on_exchange(va: f64, vb: f64) -> Result<f64, SimFault> {
    let mut world = far_world();
    let spec = |n: u8| BoxSpec {
        id: EntityId::from_random_bytes([n; 16]),
        half_extents: [0.5, 0.5],
        color: [255, 0, 0],
        mass: 2.0,
    };
    world.insert(BoxBody { spec: spec(1), position: Vec2::new(-0.4995, 0.0), velocity: Vec2::new(va, 0.0) });
    world.insert(BoxBody { spec: spec(2), position: Vec2::new(0.4995, 0.0), velocity: Vec2::new(vb, 0.0) });
    let report = world.step(0.01)?;
    assert_eq!(report.collisions, 1);
    let a = world.get(EntityId::from_random_bytes([1; 16])).unwrap().velocity;
    let b = world.get(EntityId::from_random_bytes([2; 16])).unwrap().velocity;
    Ok([a[0] - vb, b[0] - va, a[1], b[1]]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
        / va.abs().max(vb.abs()))
}
