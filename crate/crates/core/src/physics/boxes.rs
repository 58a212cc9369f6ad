//! Axis-aligned boxes translating in a walled 2D rectangle.
//!
//! Each step integrates positions ballistically, resolves every overlapping
//! pair once along its axis of least penetration with a 1D elastic impulse,
//! then reflects boxes off the walls with restitution `e`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::SimFault;
use crate::protocol::EntityId;

pub type Vec2 = Vector2<f64>;

#[cfg(feature = "parallel")]
const PARALLEL_MIN_BOXES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        )
    }

    pub fn size(&self) -> Vec2 {
        Vec2::new(self.max[0] - self.min[0], self.max[1] - self.min[1])
    }

    /// Whether a box with these half extents centered at `p` lies inside.
    pub fn contains_box(&self, p: &Vec2, half: &[f64; 2]) -> bool {
        (0..2).all(|k| p[k] - half[k] >= self.min[k] && p[k] + half[k] <= self.max[k])
    }

    /// Clamps a box center so the box lies inside. Returns whether it moved.
    pub fn clamp_box(&self, p: &mut Vec2, half: &[f64; 2]) -> bool {
        let mut moved = false;
        for k in 0..2 {
            let lo = self.min[k] + half[k];
            let hi = self.max[k] - half[k];
            let c = p[k].clamp(lo, hi);
            if c != p[k] {
                p[k] = c;
                moved = true;
            }
        }
        moved
    }
}

/// Immutable drawing and inertial attributes of a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub id: EntityId,
    pub half_extents: [f64; 2],
    pub color: [u8; 3],
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxBody {
    pub spec: BoxSpec,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl BoxBody {
    fn overlap(&self, other: &BoxBody) -> Option<Contact> {
        let d = other.position - self.position;
        let px = self.spec.half_extents[0] + other.spec.half_extents[0] - d.x.abs();
        let py = self.spec.half_extents[1] + other.spec.half_extents[1] - d.y.abs();
        if px <= 0.0 || py <= 0.0 {
            return None;
        }
        let (axis, depth) = if px <= py { (0, px) } else { (1, py) };
        let sign = if d[axis] < 0.0 { -1.0 } else { 1.0 };
        Some(Contact { axis, depth, sign })
    }
}

struct Contact {
    axis: usize,
    depth: f64,
    /// Direction from the first box toward the second along `axis`.
    sign: f64,
}

/// Counts from one step, mostly for tests and diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepReport {
    pub collisions: usize,
    pub wall_contacts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxWorld {
    pub bounds: Rect,
    /// Coefficient of restitution for wall bounces, in [0, 1].
    pub restitution: f64,
    /// Sorted by id.
    boxes: Vec<BoxBody>,
}

impl BoxWorld {
    pub fn new(bounds: Rect, restitution: f64) -> Self {
        Self {
            bounds,
            restitution,
            boxes: Vec::new(),
        }
    }

    pub fn boxes(&self) -> &[BoxBody] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn get(&self, id: EntityId) -> Option<&BoxBody> {
        self.index_of(id).map(|i| &self.boxes[i])
    }

    pub fn get_mut(&mut self, id: EntityId) -> Option<&mut BoxBody> {
        self.index_of(id).map(move |i| &mut self.boxes[i])
    }

    fn index_of(&self, id: EntityId) -> Option<usize> {
        self.boxes.binary_search_by(|b| b.spec.id.cmp(&id)).ok()
    }

    /// Inserts a box, keeping id order. Replaces an existing box with the same id.
    pub fn insert(&mut self, body: BoxBody) {
        match self.boxes.binary_search_by(|b| b.spec.id.cmp(&body.spec.id)) {
            Ok(i) => self.boxes[i] = body,
            Err(i) => self.boxes.insert(i, body),
        }
    }

    pub fn remove(&mut self, id: EntityId) -> Option<BoxBody> {
        self.index_of(id).map(|i| self.boxes.remove(i))
    }

    pub fn momentum(&self) -> Vec2 {
        self.boxes.iter().map(|b| b.spec.mass * b.velocity).sum()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.boxes
            .iter()
            .map(|b| 0.5 * b.spec.mass * b.velocity.norm_squared())
            .sum()
    }

    pub fn all_inside(&self) -> bool {
        self.boxes
            .iter()
            .all(|b| self.bounds.contains_box(&b.position, &b.spec.half_extents))
    }

    /// Advances the world by `dt` seconds.
    pub fn step(&mut self, dt: f64) -> Result<StepReport, SimFault> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimFault::BadTimestep(dt));
        }
        for b in &mut self.boxes {
            b.position += b.velocity * dt;
        }

        let mut report = StepReport::default();
        for (i, j) in overlapping_pairs(&self.boxes) {
            // Earlier resolutions may already have separated this pair.
            let (head, tail) = self.boxes.split_at_mut(j);
            if resolve_pair(&mut head[i], &mut tail[0]) {
                report.collisions += 1;
            }
        }

        let e = self.restitution;
        for b in &mut self.boxes {
            if reflect_off_walls(&self.bounds, b, e) {
                report.wall_contacts += 1;
            }
        }

        if self
            .boxes
            .iter()
            .any(|b| !(b.position.iter().chain(b.velocity.iter()).all(|c| c.is_finite())))
        {
            return Err(SimFault::NonFinite("box state"));
        }
        Ok(report)
    }
}

/// Pure form of [`BoxWorld::step`].
pub fn step_boxes(world: &BoxWorld, dt: f64) -> Result<BoxWorld, SimFault> {
    let mut next = world.clone();
    next.step(dt)?;
    Ok(next)
}

fn pairs_from(boxes: &[BoxBody], i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    ((i + 1)..boxes.len())
        .filter(move |&j| boxes[i].overlap(&boxes[j]).is_some())
        .map(move |j| (i, j))
}

/// All overlapping index pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn overlapping_pairs_seq(boxes: &[BoxBody]) -> Vec<(usize, usize)> {
    (0..boxes.len()).flat_map(|i| pairs_from(boxes, i)).collect()
}

/// Parallel broadphase; same output as [`overlapping_pairs_seq`].
#[cfg(feature = "parallel")]
pub fn overlapping_pairs_par(boxes: &[BoxBody]) -> Vec<(usize, usize)> {
    use rayon::prelude::*;
    (0..boxes.len())
        .into_par_iter()
        .flat_map_iter(|i| pairs_from(boxes, i))
        .collect()
}

pub fn overlapping_pairs(boxes: &[BoxBody]) -> Vec<(usize, usize)> {
    #[cfg(feature = "parallel")]
    if boxes.len() >= PARALLEL_MIN_BOXES {
        return overlapping_pairs_par(boxes);
    }
    overlapping_pairs_seq(boxes)
}

/// Pushes an overlapping pair apart and, if they approach along the contact
/// axis, exchanges normal velocity by the 1D elastic formulas.
fn resolve_pair(a: &mut BoxBody, b: &mut BoxBody) -> bool {
    let Some(c) = a.overlap(b) else {
        return false;
    };
    let (ma, mb) = (a.spec.mass, b.spec.mass);
    let total = ma + mb;
    // Split the correction so the center of mass stays put.
    a.position[c.axis] -= c.sign * c.depth * (mb / total);
    b.position[c.axis] += c.sign * c.depth * (ma / total);

    let (va, vb) = (a.velocity[c.axis], b.velocity[c.axis]);
    if (vb - va) * c.sign < 0.0 {
        a.velocity[c.axis] = ((ma - mb) * va + 2.0 * mb * vb) / total;
        b.velocity[c.axis] = ((mb - ma) * vb + 2.0 * ma * va) / total;
    }
    true
}

/// Mirrors a box that crossed a wall back inside. Returns whether it touched.
fn reflect_off_walls(bounds: &Rect, b: &mut BoxBody, e: f64) -> bool {
    let mut hit = false;
    for k in 0..2 {
        let lo = bounds.min[k] + b.spec.half_extents[k];
        let hi = bounds.max[k] - b.spec.half_extents[k];
        if b.position[k] < lo {
            b.position[k] = (2.0 * lo - b.position[k]).min(hi);
            b.velocity[k] = e * b.velocity[k].abs();
            hit = true;
        } else if b.position[k] > hi {
            b.position[k] = (2.0 * hi - b.position[k]).max(lo);
            b.velocity[k] = -e * b.velocity[k].abs();
            hit = true;
        }
    }
    hit
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: u8, half: [f64; 2], mass: f64) -> BoxSpec {
        BoxSpec {
            id: EntityId::from_random_bytes([n; 16]),
            half_extents: half,
            color: [n, n, n],
            mass,
        }
    }

    fn body(n: u8, mass: f64, p: [f64; 2], v: [f64; 2]) -> BoxBody {
        BoxBody {
            spec: spec(n, [0.5, 0.5], mass),
            position: Vec2::from(p),
            velocity: Vec2::from(v),
        }
    }

    fn big_world() -> BoxWorld {
        BoxWorld::new(Rect::new([-100.0, -100.0], [100.0, 100.0]), 1.0)
    }

    #[test]
    fn separated_boxes_just_translate() {
        let mut w = big_world();
        w.insert(body(1, 1.0, [0.0, 0.0], [1.0, 0.5]));
        w.insert(body(2, 2.0, [10.0, 0.0], [-1.0, 0.0]));
        let before = w.clone();
        let report = w.step(0.1).unwrap();
        assert_eq!(report, StepReport::default());
        for (b0, b1) in before.boxes().iter().zip(w.boxes()) {
            assert_eq!(b1.position, b0.position + b0.velocity * 0.1);
            assert_eq!(b1.velocity, b0.velocity);
        }
    }

    #[test]
    fn equal_masses_swap_velocities_head_on() {
        let mut w = big_world();
        w.insert(body(1, 1.0, [-0.45, 0.0], [2.0, 0.0]));
        w.insert(body(2, 1.0, [0.45, 0.0], [-3.0, 0.0]));
        let report = w.step(0.01).unwrap();
        assert_eq!(report.collisions, 1);
        let vs: Vec<f64> = w.boxes().iter().map(|b| b.velocity.x).collect();
        // Sorted-by-id order: ids were [1;16] and [2;16].
        assert_eq!(vs, vec![-3.0, 2.0]);
    }

    #[test]
    fn separating_pair_keeps_velocities() {
        let mut w = big_world();
        w.insert(body(1, 1.0, [-0.2, 0.0], [-1.0, 0.0]));
        w.insert(body(2, 1.0, [0.2, 0.0], [1.0, 0.0]));
        w.step(0.01).unwrap();
        assert_eq!(w.boxes()[0].velocity.x, -1.0);
        assert_eq!(w.boxes()[1].velocity.x, 1.0);
        assert!(w.boxes()[0].overlap(&w.boxes()[1]).is_none());
    }

    #[test]
    fn elastic_wall_bounce() {
        let mut w = BoxWorld::new(Rect::new([0.0, 0.0], [10.0, 10.0]), 1.0);
        w.insert(body(1, 1.0, [9.4, 5.0], [3.0, 1.0]));
        let speed = w.boxes()[0].velocity.norm();
        let report = w.step(0.1).unwrap();
        assert_eq!(report.wall_contacts, 1);
        let b = &w.boxes()[0];
        assert_eq!(b.velocity, Vec2::new(-3.0, 1.0));
        assert_eq!(b.velocity.norm(), speed);
        assert!(w.all_inside());
        // 9.4 + 0.3 = 9.7 crosses 9.5 by 0.2; mirrored to 9.3.
        assert!((b.position.x - 9.3).abs() < 1e-12);
    }

    #[test]
    fn inelastic_wall_scales_normal_speed() {
        let mut w = BoxWorld::new(Rect::new([0.0, 0.0], [10.0, 10.0]), 0.5);
        w.insert(body(1, 1.0, [0.6, 5.0], [-2.0, 0.0]));
        w.step(0.1).unwrap();
        assert_eq!(w.boxes()[0].velocity.x, 1.0);
    }

    #[test]
    fn fast_box_never_leaves_bounds() {
        let mut w = BoxWorld::new(Rect::new([0.0, 0.0], [4.0, 4.0]), 1.0);
        w.insert(body(1, 1.0, [2.0, 2.0], [100.0, -73.0]));
        for _ in 0..100 {
            w.step(0.02).unwrap();
            assert!(w.all_inside());
        }
    }

    #[test]
    fn bad_dt_is_rejected() {
        let mut w = big_world();
        assert!(w.step(0.0).is_err());
    }

    #[test]
    fn insert_keeps_id_order() {
        let mut w = big_world();
        for n in [5u8, 1, 3] {
            w.insert(body(n, 1.0, [f64::from(n) * 3.0, 0.0], [0.0; 2]));
        }
        let ids: Vec<_> = w.boxes().iter().map(|b| b.spec.id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(w.remove(EntityId::from_random_bytes([3; 16])).is_some());
        assert_eq!(w.len(), 2);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn broadphase_paths_agree() {
        let boxes: Vec<BoxBody> = (0..200u32)
            .map(|i| {
                let x = f64::from(i);
                BoxBody {
                    spec: BoxSpec {
                        id: EntityId::from_random_bytes([(i % 251) as u8; 16]),
                        half_extents: [0.5, 0.5],
                        color: [0; 3],
                        mass: 1.0,
                    },
                    position: Vec2::new((x * 0.37).sin() * 8.0, (x * 0.91).cos() * 8.0),
                    velocity: Vec2::zeros(),
                }
            })
            .collect();
        let seq = overlapping_pairs_seq(&boxes);
        assert!(!seq.is_empty());
        assert_eq!(seq, overlapping_pairs_par(&boxes));
    }
}
