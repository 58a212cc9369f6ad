//! Planetary presets stored as JSON documents.
//!
//! A body is placed either by explicit `position`/`velocity` or by an
//! `orbit` block naming an earlier body and a radius, in which case it starts
//! on the +x side of that body with the circular two-body speed along +y.

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};
use serde::Deserialize;

use super::nbody::{Body, SystemState, Vec3, GRAVITATIONAL_CONSTANT};
use crate::protocol::EntityId;

const TWO_BODY: &str = include_str!("../../presets/two-body.json");
const SOLAR_LITE: &str = include_str!("../../presets/solar-lite.json");

/// Names accepted by [`builtin`].
pub const BUILTIN_PRESETS: [&str; 2] = ["two-body", "solar-lite"];

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("unknown preset {0:?}; available: two-body, solar-lite")]
    Unknown(String),
    #[error("preset is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid preset: {0}")]
    Invalid(String),
}

fn default_g() -> f64 {
    GRAVITATIONAL_CONSTANT
}

fn default_radius() -> f64 {
    1.0
}

fn default_color() -> [u8; 3] {
    [255, 255, 255]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub source: String,
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default)]
    pub softening: f64,
    /// Integration step in seconds used unless overridden.
    pub dt: f64,
    /// Shift to the zero-momentum frame after placement.
    #[serde(default)]
    pub barycentric: bool,
    pub bodies: Vec<PresetBody>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetBody {
    pub label: String,
    pub mass: f64,
    #[serde(default)]
    pub position: Option<[f64; 3]>,
    #[serde(default)]
    pub velocity: Option<[f64; 3]>,
    #[serde(default)]
    pub orbit: Option<Orbit>,
    #[serde(default = "default_radius")]
    pub display_radius: f64,
    #[serde(default = "default_color")]
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orbit {
    pub around: String,
    pub radius: f64,
}

/// Loads one of the shipped presets by name.
pub fn builtin(name: &str) -> Result<Preset, PresetError> {
    let text = match name {
        "two-body" => TWO_BODY,
        "solar-lite" => SOLAR_LITE,
        other => return Err(PresetError::Unknown(other.to_owned())),
    };
    Preset::parse(text)
}

impl Preset {
    /// Parses and validates a preset document.
    pub fn parse(text: &str) -> Result<Preset, PresetError> {
        let preset: Preset = serde_json::from_str(text)?;
        preset.validate()?;
        Ok(preset)
    }

    fn validate(&self) -> Result<(), PresetError> {
        let bad = |msg: String| Err(PresetError::Invalid(msg));
        if !(self.g.is_finite() && self.g >= 0.0) {
            return bad(format!("g must be finite and non-negative, got {}", self.g));
        }
        if !(self.softening.is_finite() && self.softening >= 0.0) {
            return bad("softening must be finite and non-negative".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive".into());
        }
        if self.bodies.is_empty() {
            return bad("no bodies".into());
        }
        let mut seen = Vec::new();
        for b in &self.bodies {
            if seen.contains(&b.label.as_str()) {
                return bad(format!("duplicate label {:?}", b.label));
            }
            if !(b.mass.is_finite() && b.mass > 0.0) {
                return bad(format!("{}: mass must be positive", b.label));
            }
            if !(b.display_radius.is_finite() && b.display_radius > 0.0) {
                return bad(format!("{}: display_radius must be positive", b.label));
            }
            let finite = |v: &Option<[f64; 3]>| v.is_none_or(|v| v.iter().all(|c| c.is_finite()));
            if !finite(&b.position) || !finite(&b.velocity) {
                return bad(format!("{}: non-finite vector", b.label));
            }
            if let Some(orbit) = &b.orbit {
                if b.position.is_some() || b.velocity.is_some() {
                    return bad(format!("{}: orbit excludes position/velocity", b.label));
                }
                if !seen.contains(&orbit.around.as_str()) {
                    return bad(format!(
                        "{}: orbit refers to {:?}, which must be listed earlier",
                        b.label, orbit.around
                    ));
                }
                if !(orbit.radius.is_finite() && orbit.radius > 0.0) {
                    return bad(format!("{}: orbit radius must be positive", b.label));
                }
            }
            seen.push(&b.label);
        }
        Ok(())
    }

    /// Builds the initial state. Entity ids come from `seed`.
    pub fn instantiate(&self, seed: u64) -> SystemState {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut placed: HashMap<&str, (Vec3, Vec3, f64)> = HashMap::new();
        let mut bodies = Vec::with_capacity(self.bodies.len());
        for b in &self.bodies {
            let (position, velocity) = match &b.orbit {
                Some(orbit) => {
                    let (cp, cv, cm) = placed[orbit.around.as_str()];
                    let speed = (self.g * (cm + b.mass) / orbit.radius).sqrt();
                    (
                        cp + Vec3::new(orbit.radius, 0.0, 0.0),
                        cv + Vec3::new(0.0, speed, 0.0),
                    )
                }
                None => (
                    Vec3::from(b.position.unwrap_or([0.0; 3])),
                    Vec3::from(b.velocity.unwrap_or([0.0; 3])),
                ),
            };
            placed.insert(&b.label, (position, velocity, b.mass));
            let mut bytes = [0u8; 16];
            rng.fill_bytes(&mut bytes);
            bodies.push(Body {
                id: EntityId::from_random_bytes(bytes),
                label: b.label.clone(),
                mass: b.mass,
                position,
                velocity,
                display_radius: b.display_radius,
                color: b.color,
            });
        }
        if self.barycentric {
            let total: f64 = bodies.iter().map(|b| b.mass).sum();
            let com: Vec3 = bodies.iter().map(|b| b.mass * b.position).sum::<Vec3>() / total;
            let vcom: Vec3 = bodies.iter().map(|b| b.mass * b.velocity).sum::<Vec3>() / total;
            for b in &mut bodies {
                b.position -= com;
                b.velocity -= vcom;
            }
        }
        SystemState::new(self.g, self.softening, bodies)
    }
}

/// Two equal masses `m` a distance `d` apart, each moving at
/// `sqrt(G m / (2 d))` tangentially about the barycenter at the origin.
pub fn circular_pair(g: f64, m: f64, d: f64) -> SystemState {
    let v = (g * m / (2.0 * d)).sqrt();
    let body = |n: u8, x: f64, vy: f64| Body {
        id: EntityId::from_random_bytes([n; 16]),
        label: format!("pair-{n}"),
        mass: m,
        position: Vec3::new(x, 0.0, 0.0),
        velocity: Vec3::new(0.0, vy, 0.0),
        display_radius: 0.05 * d,
        color: [255, 255, 255],
    };
    SystemState::new(g, 0.0, vec![body(1, -0.5 * d, -v), body(2, 0.5 * d, v)])
}

/// Orbital period of [`circular_pair`]: `π d / v`.
pub fn circular_pair_period(g: f64, m: f64, d: f64) -> f64 {
    std::f64::consts::PI * d / (g * m / (2.0 * d)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in BUILTIN_PRESETS {
            let p = builtin(name).unwrap();
            assert_eq!(p.name, name);
        }
        assert!(matches!(builtin("pluto"), Err(PresetError::Unknown(_))));
    }

    #[test]
    fn two_body_file_is_the_analytic_pair() {
        let s = builtin("two-body").unwrap().instantiate(0);
        let analytic = circular_pair(1.0, 1.0, 1.0);
        let mut from_file: Vec<_> = s.bodies.iter().map(|b| (b.position, b.velocity)).collect();
        let mut expected: Vec<_> = analytic
            .bodies
            .iter()
            .map(|b| (b.position, b.velocity))
            .collect();
        let key = |p: &(Vec3, Vec3)| p.0.x;
        from_file.sort_by(|a, b| key(a).total_cmp(&key(b)));
        expected.sort_by(|a, b| key(a).total_cmp(&key(b)));
        assert_eq!(from_file, expected);
    }

    #[test]
    fn solar_lite_is_barycentric_and_bound() {
        let s = builtin("solar-lite").unwrap().instantiate(1);
        assert_eq!(s.bodies.len(), 5);
        let total: f64 = s.bodies.iter().map(|b| b.mass).sum();
        let p = s.momentum();
        let scale = total * 3.0e4;
        assert!(p.norm() / scale < 1e-12, "{p}");
        assert!(s.total_energy() < 0.0);
        // Earth's circular speed is close to the familiar ~29.8 km/s.
        let earth = s.bodies.iter().find(|b| b.label == "Earth").unwrap();
        assert!((earth.velocity.norm() - 29_780.0).abs() < 100.0, "{}", earth.velocity.norm());
    }

    #[test]
    fn instantiation_is_reproducible() {
        let p = builtin("solar-lite").unwrap();
        assert_eq!(p.instantiate(9), p.instantiate(9));
        assert_ne!(p.instantiate(9).bodies[0].id, p.instantiate(10).bodies[0].id);
    }

    #[test]
    fn validation_errors() {
        let cases = [
            r#"{"name":"x","dt":1,"bodies":[]}"#,
            r#"{"name":"x","dt":0,"bodies":[{"label":"a","mass":1}]}"#,
            r#"{"name":"x","dt":1,"bodies":[{"label":"a","mass":-1}]}"#,
            r#"{"name":"x","dt":1,"bodies":[{"label":"a","mass":1},{"label":"a","mass":1}]}"#,
            r#"{"name":"x","dt":1,"bodies":[{"label":"a","mass":1,"orbit":{"around":"b","radius":1}}]}"#,
            r#"{"name":"x","dt":1,"bodies":[{"label":"a","mass":1,"spin":3}]}"#,
        ];
        for text in cases {
            assert!(Preset::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn period_formula() {
        // v = sqrt(1/2), T = π / v = π √2.
        let t = circular_pair_period(1.0, 1.0, 1.0);
        assert!((t - std::f64::consts::PI * 2f64.sqrt()).abs() < 1e-15);
    }
}
