//! Builtin worlds around one rounded-rectangle loop, ordered from heavily
//! structured to cluttered and weakly reflective.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{stream_rng, Bounds, Landmark, SimError, Wall, WorldModel};
use crate::geometry::Polyline;
use crate::se2::Pose2;

const LAYOUT_STREAM: u64 = 0x3a;
const LOOP_MIN: [f64; 2] = [0.0, 0.0];
const LOOP_MAX: [f64; 2] = [70.0, 30.0];
const LOOP_CORNER_RADIUS: f64 = 6.0;
const WAYPOINT_SPACING: f64 = 0.5;
const BUILDING: ([f64; 2], [f64; 2]) = ([15.0, 10.0], [55.0, 20.0]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioKind {
    Dense,
    Medium,
    Sparse,
    Cluttered,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::Dense, Self::Medium, Self::Sparse, Self::Cluttered];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dense => "dense",
            Self::Medium => "medium",
            Self::Sparse => "sparse",
            Self::Cluttered => "cluttered",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SimError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub world: WorldModel,
    pub waypoints: Vec<Pose2>,
}

/// Closed counter-clockwise loop around an axis-aligned rectangle with
/// circular corners, starting and ending mid-way along the bottom edge.
/// Waypoint headings follow the tangent.
pub fn rounded_rectangle(min: [f64; 2], max: [f64; 2], radius: f64, spacing: f64) -> Vec<Pose2> {
    let (x0, y0, x1, y1) = (min[0], min[1], max[0], max[1]);
    let mid = 0.5 * (x0 + x1);
    let mut out: Vec<Pose2> = Vec::new();
    let line = |out: &mut Vec<Pose2>, a: [f64; 2], b: [f64; 2]| {
        let d = Vector2::new(b[0] - a[0], b[1] - a[1]);
        let n = (d.norm() / spacing).ceil().max(1.0) as usize;
        let heading = d.y.atan2(d.x);
        for i in 0..n {
            let u = i as f64 / n as f64;
            out.push(Pose2::new(a[0] + u * d.x, a[1] + u * d.y, heading));
        }
    };
    let arc = |out: &mut Vec<Pose2>, c: [f64; 2], from: f64| {
        let n = (FRAC_PI_2 * radius / spacing).ceil().max(1.0) as usize;
        for i in 0..n {
            let a = from + FRAC_PI_2 * i as f64 / n as f64;
            out.push(Pose2::new(c[0] + radius * a.cos(), c[1] + radius * a.sin(), a + FRAC_PI_2));
        }
    };
    line(&mut out, [mid, y0], [x1 - radius, y0]);
    arc(&mut out, [x1 - radius, y0 + radius], -FRAC_PI_2);
    line(&mut out, [x1, y0 + radius], [x1, y1 - radius]);
    arc(&mut out, [x1 - radius, y1 - radius], 0.0);
    line(&mut out, [x1 - radius, y1], [x0 + radius, y1]);
    arc(&mut out, [x0 + radius, y1 - radius], FRAC_PI_2);
    line(&mut out, [x0, y1 - radius], [x0, y0 + radius]);
    arc(&mut out, [x0 + radius, y0 + radius], PI);
    line(&mut out, [x0 + radius, y0], [mid, y0]);
    out.push(Pose2::new(mid, y0, 0.0));
    out
}

struct Layout {
    route: Polyline,
    rng: ChaCha8Rng,
    bounds: Bounds,
}

impl Layout {
    fn route_distance(&self, p: Vector2<f64>) -> f64 {
        self.route.project(p).map_or(f64::INFINITY, |q| q.distance)
    }

    /// Uniform landmarks in the sampling box, at least `clearance` from the
    /// route and outside `keep_out` rectangles.
    fn scatter(&mut self, count: usize, clearance: f64, refl: (f64, f64), keep_out: &[([f64; 2], [f64; 2])]) -> Vec<Landmark> {
        let (lo, hi) = ([-22.0, -22.0], [92.0, 52.0]);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let p = Vector2::new(self.rng.gen_range(lo[0]..hi[0]), self.rng.gen_range(lo[1]..hi[1]));
            let blocked = keep_out
                .iter()
                .any(|(a, b)| p.x > a[0] - 0.5 && p.x < b[0] + 0.5 && p.y > a[1] - 0.5 && p.y < b[1] + 0.5);
            if blocked || self.route_distance(p) < clearance {
                continue;
            }
            out.push(Landmark {
                position: [p.x, p.y],
                reflectivity: self.rng.gen_range(refl.0..=refl.1),
            });
        }
        out
    }

    /// Short wall segments ("parked cars") scattered away from the route.
    fn clutter_walls(&mut self, count: usize, clearance: f64) -> Vec<Wall> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let c = Vector2::new(self.rng.gen_range(-18.0..88.0), self.rng.gen_range(-18.0..48.0));
            let heading: f64 = self.rng.gen_range(0.0..PI);
            let half = Vector2::new(heading.cos(), heading.sin()) * 1.5;
            let (a, b) = (c - half, c + half);
            if self.route_distance(a).min(self.route_distance(b)).min(self.route_distance(c)) < clearance {
                continue;
            }
            let inside_building = |p: Vector2<f64>| {
                p.x > BUILDING.0[0] - 1.0 && p.x < BUILDING.1[0] + 1.0 && p.y > BUILDING.0[1] - 1.0 && p.y < BUILDING.1[1] + 1.0
            };
            if inside_building(a) || inside_building(b) {
                continue;
            }
            out.push(Wall {
                points: vec![[a.x, a.y], [b.x, b.y]],
                reflectivity: 0.7,
            });
        }
        out
    }

    /// Landmarks lining the route at small lateral offsets on alternating
    /// sides, like trees along a forest trail.
    fn line_route(&mut self, count: usize, offsets: (f64, f64), refl: (f64, f64)) -> Vec<Landmark> {
        let step = self.route.length() / count as f64;
        let mut out = Vec::with_capacity(count);
        let mut i = 0;
        while out.len() < count {
            let s = (i as f64 + self.rng.gen_range(0.0..1.0)) * step;
            i += 1;
            let seg = self.route.segment_at(s);
            let dir = self.route.direction(seg);
            let side = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let offset = self.rng.gen_range(offsets.0..offsets.1);
            let p = self.route.point_at(s) + Vector2::new(-dir.y, dir.x) * (side * offset);
            // Offsets measured from one segment can come closer to another near corners.
            if self.route_distance(p) < offsets.0 || !self.bounds.contains([p.x, p.y]) {
                if i > 4 * count {
                    break;
                }
                continue;
            }
            out.push(Landmark {
                position: [p.x, p.y],
                reflectivity: self.rng.gen_range(refl.0..=refl.1),
            });
        }
        out
    }
}

fn rectangle(min: [f64; 2], max: [f64; 2]) -> Vec<[f64; 2]> {
    vec![min, [max[0], min[1]], max, [min[0], max[1]], min]
}

/// Builds a builtin scenario. The layout is a pure function of `(name, seed)`.
pub fn builtin_scenario(name: &str, seed: u64) -> Result<Scenario, SimError> {
    let kind: ScenarioKind = name.parse()?;
    let waypoints = rounded_rectangle(LOOP_MIN, LOOP_MAX, LOOP_CORNER_RADIUS, WAYPOINT_SPACING);
    let bounds = Bounds {
        min: [-30.0, -30.0],
        max: [100.0, 60.0],
    };
    let mut layout = Layout {
        route: Polyline::new(waypoints.iter().map(|w| w.translation())),
        rng: stream_rng(seed, LAYOUT_STREAM, kind as u64),
        bounds,
    };
    let (landmarks, walls) = match kind {
        ScenarioKind::Dense => {
            let mut walls = vec![
                Wall {
                    points: rectangle(BUILDING.0, BUILDING.1),
                    reflectivity: 0.9,
                },
                Wall {
                    points: vec![[-12.0, -10.0], [82.0, -10.0], [82.0, 40.0]],
                    reflectivity: 0.8,
                },
                Wall {
                    points: vec![[60.0, 42.0], [10.0, 42.0]],
                    reflectivity: 0.8,
                },
                Wall {
                    points: vec![[-12.0, 5.0], [-12.0, 25.0]],
                    reflectivity: 0.8,
                },
            ];
            walls.extend(layout.clutter_walls(8, 3.0));
            (layout.scatter(300, 2.0, (0.5, 1.0), &[BUILDING]), walls)
        }
        ScenarioKind::Medium => {
            let mut walls = vec![
                Wall {
                    points: vec![[-12.0, -10.0], [40.0, -10.0]],
                    reflectivity: 0.8,
                },
                Wall {
                    points: vec![[82.0, 0.0], [82.0, 20.0]],
                    reflectivity: 0.8,
                },
            ];
            walls.extend(layout.clutter_walls(3, 3.0));
            (layout.scatter(150, 2.0, (0.4, 1.0), &[]), walls)
        }
        ScenarioKind::Sparse => (layout.scatter(40, 2.0, (0.4, 1.0), &[]), Vec::new()),
        ScenarioKind::Cluttered => {
            let mut lm = layout.line_route(150, (0.3, 1.5), (0.1, 0.3));
            let rest = 400 - lm.len();
            lm.extend(layout.scatter(rest, 0.3, (0.1, 0.3), &[]));
            (lm, Vec::new())
        }
    };
    let world = WorldModel {
        bounds,
        landmarks,
        walls,
    };
    world.validate()?;
    Ok(Scenario { kind, world, waypoints })
}
