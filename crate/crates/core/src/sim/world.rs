//! Static planar world: point landmarks and polyline walls.
//!
//! World files are TOML:
//!
//! ```toml
//! [bounds]
//! min = [-20.0, -20.0]
//! max = [90.0, 50.0]
//!
//! [[landmarks]]
//! position = [12.0, 4.5]
//! reflectivity = 0.7
//!
//! [[walls]]
//! points = [[0.0, -6.0], [70.0, -6.0]]
//! reflectivity = 0.8
//! ```

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub position: [f64; 2],
    pub reflectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub points: Vec<[f64; 2]>,
    pub reflectivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldModel {
    pub bounds: Bounds,
    #[serde(default)]
    pub landmarks: Vec<Landmark>,
    #[serde(default)]
    pub walls: Vec<Wall>,
}

/// A wall segment hit along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub range: f64,
    pub reflectivity: f64,
}

impl WorldModel {
    pub fn empty(bounds: Bounds) -> Self {
        Self {
            bounds,
            landmarks: Vec::new(),
            walls: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let b = &self.bounds;
        if !(b.min[0] < b.max[0] && b.min[1] < b.max[1]) {
            return Err(SimError::InvalidWorld("bounds are empty".into()));
        }
        let refl_ok = |r: f64| (0.0..=1.0).contains(&r);
        for (i, l) in self.landmarks.iter().enumerate() {
            if !refl_ok(l.reflectivity) {
                return Err(SimError::InvalidWorld(format!("landmark {i} reflectivity outside [0, 1]")));
            }
            if !b.contains(l.position) {
                return Err(SimError::InvalidWorld(format!("landmark {i} lies outside the bounds")));
            }
        }
        for (i, w) in self.walls.iter().enumerate() {
            if !refl_ok(w.reflectivity) {
                return Err(SimError::InvalidWorld(format!("wall {i} reflectivity outside [0, 1]")));
            }
            if w.points.len() < 2 {
                return Err(SimError::InvalidWorld(format!("wall {i} needs at least two points")));
            }
            if let Some(p) = w.points.iter().find(|p| !b.contains(**p)) {
                return Err(SimError::InvalidWorld(format!(
                    "wall {i} vertex ({}, {}) lies outside the bounds",
                    p[0], p[1]
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let world: WorldModel = toml::from_str(text).map_err(|e| SimError::InvalidWorld(e.to_string()))?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("world models always serialize")
    }

    /// Wall segments as `(a, b, reflectivity)`.
    pub fn segments(&self) -> impl Iterator<Item = (Vector2<f64>, Vector2<f64>, f64)> + '_ {
        self.walls.iter().flat_map(|w| {
            w.points.windows(2).map(move |s| {
                (
                    Vector2::new(s[0][0], s[0][1]),
                    Vector2::new(s[1][0], s[1][1]),
                    w.reflectivity,
                )
            })
        })
    }

    /// Nearest wall intersection along the ray `origin + s * dir`, `s > 0`.
    pub fn ray_cast(&self, origin: Vector2<f64>, dir: Vector2<f64>) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for (a, b, reflectivity) in self.segments() {
            if let Some(range) = ray_segment(origin, dir, a, b) {
                if best.is_none_or(|h| range < h.range) {
                    best = Some(RayHit { range, reflectivity });
                }
            }
        }
        best
    }

    /// Smallest distance from `p` to any landmark or wall.
    pub fn clearance(&self, p: Vector2<f64>) -> f64 {
        let lm = self
            .landmarks
            .iter()
            .map(|l| (Vector2::new(l.position[0], l.position[1]) - p).norm());
        let walls = self.segments().map(|(a, b, _)| point_segment_distance(p, a, b));
        lm.chain(walls).fold(f64::INFINITY, f64::min)
    }
}

/// Ray parameter of the intersection with segment `ab`, if any.
pub fn ray_segment(origin: Vector2<f64>, dir: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> Option<f64> {
    let e = b - a;
    let denom = dir.x * e.y - dir.y * e.x;
    if denom.abs() < 1e-12 {
        return None;
    }
    let d = a - origin;
    let s = (d.x * e.y - d.y * e.x) / denom;
    let u = (d.x * dir.y - d.y * dir.x) / denom;
    (s > 1e-9 && (0.0..=1.0).contains(&u)).then_some(s)
}

pub fn point_segment_distance(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let e = b - a;
    let len2 = e.norm_squared();
    let u = if len2 > 0.0 {
        ((p - a).dot(&e) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + e * u - p).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> Bounds {
        Bounds {
            min: [-10.0, -10.0],
            max: [10.0, 10.0],
        }
    }

    #[test]
    fn ray_hits_nearest_wall() {
        let mut world = WorldModel::empty(bounds());
        world.walls.push(Wall {
            points: vec![[5.0, -1.0], [5.0, 1.0]],
            reflectivity: 0.5,
        });
        world.walls.push(Wall {
            points: vec![[3.0, -1.0], [3.0, 1.0]],
            reflectivity: 0.9,
        });
        let hit = world.ray_cast(Vector2::zeros(), Vector2::new(1.0, 0.0)).unwrap();
        assert!((hit.range - 3.0).abs() < 1e-12);
        assert_eq!(hit.reflectivity, 0.9);
        assert!(world.ray_cast(Vector2::zeros(), Vector2::new(-1.0, 0.0)).is_none());
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let mut world = WorldModel::empty(bounds());
        world.landmarks.push(Landmark {
            position: [1.0, 2.0],
            reflectivity: 0.3,
        });
        world.walls.push(Wall {
            points: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
            reflectivity: 1.0,
        });
        let text = world.to_toml_string();
        assert_eq!(WorldModel::from_toml_str(&text).unwrap(), world);

        world.landmarks[0].reflectivity = 1.5;
        assert!(world.validate().is_err());
        world.landmarks[0].reflectivity = 0.5;
        world.landmarks[0].position = [20.0, 0.0];
        assert!(world.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[bounds]\nmin = [0.0, 0.0]\nmax = [1.0, 1.0]\ncolour = 3\n";
        assert!(WorldModel::from_toml_str(text).is_err());
    }
}
