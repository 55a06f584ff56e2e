use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{
    ideal_returns, simulate_gyro, simulate_scan, stream_rng, ArtifactPattern, GroundTruthLog, GyroMeasurement,
    SensorRig, SimError, WorldModel,
};
use crate::detection::{PolarScan, RadarPointCloud};
use crate::geometry::{segments_intersect, Polyline};
use crate::se2::{Pose2, Twist2};

const SCAN_STREAM: u64 = 0x5c;
const MIN_TURN_RADIUS: f64 = 1.0;

/// Scripted pure-pursuit teach pilot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSettings {
    /// Truth sample period (also the pilot's control period).
    pub truth_dt: f64,
    pub lookahead: f64,
    /// Stationary time before the pilot starts moving.
    pub start_hold: f64,
    /// Longitudinal acceleration limit in m/s^2; unlimited when absent.
    pub max_accel: Option<f64>,
}

impl Default for PilotSettings {
    fn default() -> Self {
        Self {
            truth_dt: 0.01,
            lookahead: 0.8,
            start_hold: 0.0,
            max_accel: None,
        }
    }
}

/// Everything needed to synthesize sensor data on demand for a truth log.
#[derive(Debug, Clone)]
pub struct SensorSuite {
    pub world: WorldModel,
    pub rig: SensorRig,
    pub seed: u64,
    pattern: ArtifactPattern,
}

impl SensorSuite {
    pub fn new(world: WorldModel, rig: SensorRig, seed: u64) -> Result<Self, SimError> {
        world.validate()?;
        rig.validate()?;
        let pattern = ArtifactPattern::from_rig(&rig);
        Ok(Self {
            world,
            rig,
            seed,
            pattern,
        })
    }

    pub fn scan_start(&self, index: usize) -> f64 {
        index as f64 * self.rig.scan_period
    }

    /// Number of complete scans covered by `truth`.
    pub fn scan_count(&self, truth: &GroundTruthLog) -> usize {
        (truth.end_time() / self.rig.scan_period + 1e-9).floor() as usize
    }

    /// Scan `index`; its noise depends only on `(seed, index)`.
    pub fn scan(&self, truth: &GroundTruthLog, index: usize) -> Result<PolarScan, SimError> {
        let mut rng = stream_rng(self.seed, SCAN_STREAM, index as u64);
        simulate_scan(&self.world, truth, &self.rig, &self.pattern, self.scan_start(index), &mut rng)
    }

    /// Exact returns for scan `index`, bypassing detection.
    pub fn ideal_cloud(&self, truth: &GroundTruthLog, index: usize, min_range: f64) -> Result<RadarPointCloud, SimError> {
        ideal_returns(&self.world, truth, &self.rig, self.scan_start(index), min_range)
    }

    pub fn gyro(&self, truth: &GroundTruthLog, t0: f64, t1: f64) -> Result<Vec<GyroMeasurement>, SimError> {
        simulate_gyro(truth, &self.rig, self.seed, t0, t1)
    }
}

/// Output of the teach pilot. Scans are synthesized lazily through
/// [`TeachDrive::scan`]; the gyro stream is small and kept in full.
#[derive(Debug, Clone)]
pub struct TeachDrive {
    pub truth: GroundTruthLog,
    pub sensors: SensorSuite,
    pub gyro: Vec<GyroMeasurement>,
    pub route: Polyline,
}

impl TeachDrive {
    pub fn scan_count(&self) -> usize {
        self.sensors.scan_count(&self.truth)
    }

    pub fn scan(&self, index: usize) -> Result<PolarScan, SimError> {
        self.sensors.scan(&self.truth, index)
    }
}

/// Checks waypoint feasibility and returns the route polyline.
///
/// Rejects fewer than two waypoints, zero-length segments, crossing segments
/// and any corner whose circumscribed turn radius is below 1 m. A route whose
/// last waypoint equals its first is treated as a closed loop.
pub fn validate_waypoints(waypoints: &[Pose2]) -> Result<Polyline, SimError> {
    let fail = |m: String| Err(SimError::InvalidWaypoints(m));
    if waypoints.len() < 2 {
        return fail(format!("need at least two waypoints, got {}", waypoints.len()));
    }
    let pts: Vec<Vector2<f64>> = waypoints.iter().map(|w| w.translation()).collect();
    if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return fail("non-finite waypoint".into());
    }
    for (i, w) in pts.windows(2).enumerate() {
        if (w[1] - w[0]).norm() < 1e-9 {
            return fail(format!("zero-length segment at waypoint {i}"));
        }
    }
    let n = pts.len() - 1;
    let closed = n >= 3 && (pts[n] - pts[0]).norm() < 1e-9;
    for i in 0..n {
        for j in i + 2..n {
            if closed && i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                return fail(format!("segments {i} and {j} intersect"));
            }
        }
    }
    let mut corners: Vec<(Vector2<f64>, Vector2<f64>, Vector2<f64>)> =
        (1..n).map(|i| (pts[i - 1], pts[i], pts[i + 1])).collect();
    if closed {
        corners.push((pts[n - 1], pts[0], pts[1]));
    }
    for (k, (a, b, c)) in corners.into_iter().enumerate() {
        let (ab, bc) = (b - a, c - b);
        let cross = ab.perp(&bc);
        let turn = cross.atan2(ab.dot(&bc)).abs();
        if turn < 1e-12 {
            continue;
        }
        let radius = ab.norm() * bc.norm() * (c - a).norm() / (2.0 * cross.abs());
        if turn > std::f64::consts::FRAC_PI_2 + 1e-9 || radius < MIN_TURN_RADIUS {
            return fail(format!("corner {} turns too sharply (radius {radius:.3} m)", k + 1));
        }
    }
    Ok(Polyline::new(pts))
}

fn pursue(pose: &Pose2, target: Vector2<f64>, speed: f64) -> Twist2 {
    let local = pose.inverse_transform_point(target);
    let d2 = local.norm_squared();
    let curvature = if d2 > 0.0 { 2.0 * local.y / d2 } else { 0.0 };
    let max_omega = speed / MIN_TURN_RADIUS;
    Twist2::new(speed, 0.0, (speed * curvature).clamp(-max_omega, max_omega))
}

/// Drives the route with a pure-pursuit pilot and attaches the sensor suite.
pub fn drive_teach(
    world: &WorldModel,
    rig: &SensorRig,
    waypoints: &[Pose2],
    speed: f64,
    seed: u64,
    settings: &PilotSettings,
) -> Result<TeachDrive, SimError> {
    let route = validate_waypoints(waypoints)?;
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(SimError::InvalidWaypoints(format!("speed must be positive, got {speed}")));
    }
    let sensors = SensorSuite::new(world.clone(), *rig, seed)?;

    let dir = route.direction(0);
    let start = route.points()[0];
    let mut truth = GroundTruthLog::new(Pose2::new(start.x, start.y, dir.y.atan2(dir.x)), settings.truth_dt);
    for _ in 0..(settings.start_hold / settings.truth_dt).round() as usize {
        truth.push(Twist2::zero());
    }

    let total = route.length();
    let end = *route.points().last().expect("validated");
    let end_dir = route.direction(route.segment_count() - 1);
    let max_steps = ((2.0 * total / speed + 10.0) / settings.truth_dt).ceil() as usize;
    let mut progress = 0.0;
    for _ in 0..max_steps {
        let pose = truth.last_pose();
        let p = pose.translation();
        let proj = route
            .project_within(p, progress - 1.0, progress + 3.0)
            .expect("route has segments");
        progress = progress.max(proj.arc_length);
        let remaining = (end - p).dot(&end_dir);
        let near_end = total - progress < settings.lookahead;
        if near_end && remaining <= 1e-6 {
            return Ok(TeachDrive {
                gyro: sensors.gyro(&truth, 0.0, truth.end_time())?,
                truth,
                sensors,
                route,
            });
        }
        let ahead = progress + settings.lookahead;
        let target = if ahead <= total {
            route.point_at(ahead)
        } else {
            end + end_dir * (ahead - total)
        };
        let cruise = match settings.max_accel {
            Some(a) => speed.min(truth.twist(truth.len() - 1).vx + a * settings.truth_dt),
            None => speed,
        };
        let mut twist = pursue(&pose, target, cruise);
        // Land on the final waypoint instead of sailing past it.
        if near_end && remaining < speed * settings.truth_dt {
            twist.vx = remaining / settings.truth_dt;
        }
        truth.push(twist);
    }
    Err(SimError::InvalidWaypoints("pilot did not reach the final waypoint".into()))
}
