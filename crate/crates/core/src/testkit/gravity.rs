//! Plain-array reference computations for the gravity world.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::physics::nbody::{advance, Body, SystemState, Vec3};
use crate::physics::presets::{circular_pair, circular_pair_period};
use crate::physics::{accelerations, SimFault};
use crate::protocol::EntityId;

/// `a_i = Σ_{j≠i} G m_j (r_j − r_i) / (|r_j − r_i|² + ε²)^{3/2}` by a direct
/// double loop over the raw coordinates.
pub fn double_loop_accelerations(
    positions: &[[f64; 3]],
    masses: &[f64],
    g: f64,
    softening: f64,
) -> Vec<[f64; 3]> {
    let n = positions.len();
    let mut out = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = positions[j][0] - positions[i][0];
            let dy = positions[j][1] - positions[i][1];
            let dz = positions[j][2] - positions[i][2];
            let r2 = dx * dx + dy * dy + dz * dz + softening * softening;
            let s = g * masses[j] / r2.powf(1.5);
            out[i][0] += s * dx;
            out[i][1] += s * dy;
            out[i][2] += s * dz;
        }
    }
    out
}

/// `E = Σ ½ m v² − Σ_{i<j} G m_i m_j / r_ij` over raw coordinates.
pub fn total_energy(positions: &[[f64; 3]], velocities: &[[f64; 3]], masses: &[f64], g: f64) -> f64 {
    let n = positions.len();
    let mut kinetic = 0.0;
    for i in 0..n {
        let v = velocities[i];
        kinetic += 0.5 * masses[i] * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    }
    let mut potential = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: Vec<f64> = (0..3).map(|k| positions[j][k] - positions[i][k]).collect();
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            potential -= g * masses[i] * masses[j] / r;
        }
    }
    kinetic + potential
}

/// Largest per-body `|got − want| / |want|`, using Euclidean norms.
pub fn max_relative_error(got: &[[f64; 3]], want: &[[f64; 3]]) -> f64 {
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    got.iter()
        .zip(want)
        .map(|(a, b)| norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]]) / norm(*b))
        .fold(0.0f64, f64::max)
}

/// Raw coordinates of a state, in body order.
pub fn raw(state: &SystemState) -> (Vec<[f64; 3]>, Vec<[f64; 3]>, Vec<f64>) {
    let p = state.bodies.iter().map(|b| [b.position.x, b.position.y, b.position.z]).collect();
    let v = state.bodies.iter().map(|b| [b.velocity.x, b.velocity.y, b.velocity.z]).collect();
    let m = state.bodies.iter().map(|b| b.mass).collect();
    (p, v, m)
}

/// `n` bodies scattered in a unit-ish cube with masses spanning three decades.
pub fn random_cluster(n: usize, g: f64, softening: f64, seed: u64) -> SystemState {
    let mut rng = StdRng::seed_from_u64(seed);
    let bodies = (0..n)
        .map(|k| {
            let mut c = || rng.random_range(-1.0..1.0);
            let position = Vec3::new(c(), c(), c());
            let velocity = Vec3::new(c(), c(), c()) * 0.1;
            Body {
                id: EntityId::from_random_bytes(rng.random()),
                label: format!("b{k}"),
                mass: 10f64.powf(rng.random_range(0.0..3.0)),
                position,
                velocity,
                display_radius: 0.01,
                color: [200, 200, 200],
            }
        })
        .collect();
    SystemState::new(g, softening, bodies)
}

/// Measurements for a circular equal-mass pair run for one period at
/// `dt = T / steps`: (closure error / d, relative energy drift, max drift
/// seen at any step).
pub fn two_body_closure(steps: usize) -> Result<(f64, f64, f64), SimFault> {
    let (g, m, d) = (1.0, 1.0, 1.0);
    let mut state = circular_pair(g, m, d);
    let dt = circular_pair_period(g, m, d) / steps as f64;
    let start = state.clone();
    let energy = |s: &SystemState| {
        let (p, v, m) = raw(s);
        total_energy(&p, &v, &m, s.g)
    };
    let e0 = energy(&start);
    let mut acc = accelerations(&state)?;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        advance(&mut state, dt, &mut acc)?;
        worst = worst.max(((energy(&state) - e0) / e0).abs());
    }
    let closure = state
        .bodies
        .iter()
        .zip(&start.bodies)
        .map(|(a, b)| (a.position - b.position).norm())
        .fold(0.0f64, f64::max)
        / d;
    Ok((closure, ((energy(&state) - e0) / e0).abs(), worst))
}
