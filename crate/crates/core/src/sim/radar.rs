//! Rotating-radar synthesis. Every azimuth is fired from the sensor pose at
//! its own timestamp, so motion distortion is present in the raw scan.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{stream_rng, GroundTruthLog, SensorRig, SimError, WorldModel};
use crate::detection::{PolarScan, RadarPoint, RadarPointCloud};
use crate::se2::{normalize_angle, Pose2};

const BUMP_EXTENT_SIGMAS: f64 = 5.0;
const ARTIFACT_STREAM: u64 = 0xa7;

/// Fixed sensor-frame support of the ring artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPattern {
    /// `(radius, azimuth indices)` per ring.
    pub rings: Vec<(f64, Vec<usize>)>,
}

impl ArtifactPattern {
    pub fn from_rig(rig: &SensorRig) -> Self {
        let a = &rig.artifacts;
        if !a.enabled {
            return Self { rings: Vec::new() };
        }
        let mut rng = stream_rng(a.pattern_seed, ARTIFACT_STREAM, 0);
        let rings = (0..a.ring_count)
            .map(|_| {
                let radius = rng.gen_range(a.min_radius..=a.max_radius);
                let mut support: Vec<usize> = (0..a.points_per_ring.min(rig.azimuth_count))
                    .map(|_| rng.gen_range(0..rig.azimuth_count))
                    .collect();
                support.sort_unstable();
                support.dedup();
                (radius, support)
            })
            .collect();
        Self { rings }
    }
}

/// Sensor poses (world frame) and timestamps for every azimuth of a scan.
struct Sweep {
    times: Vec<f64>,
    angles: Vec<f64>,
    sensor: Vec<Pose2>,
}

fn sweep(truth: &GroundTruthLog, rig: &SensorRig, t_start: f64) -> Result<Sweep, SimError> {
    truth.require(t_start, t_start + rig.scan_period)?;
    let n = rig.azimuth_count;
    let mut times = Vec::with_capacity(n);
    let mut angles = Vec::with_capacity(n);
    let mut sensor = Vec::with_capacity(n);
    for a in 0..n {
        let t = t_start + a as f64 * rig.scan_period / n as f64;
        times.push(t);
        angles.push(a as f64 * TAU / n as f64);
        sensor.push(truth.pose_at(t)?.compose(&rig.radar_extrinsic));
    }
    Ok(Sweep { times, angles, sensor })
}

/// Azimuth indices whose beam may contain a point, given its sensor-frame
/// bearings at the start and end of the sweep.
fn candidate_azimuths(b0: f64, b1: f64, half_width: f64, n: usize) -> impl Iterator<Item = usize> {
    let step = TAU / n as f64;
    let d = normalize_angle(b1 - b0);
    let lo = b0 + d.min(0.0) - half_width - step;
    let hi = b0 + d.max(0.0) + half_width + step;
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    let count = (last - first + 1).clamp(0, n as i64);
    (0..count).map(move |k| (first + k).rem_euclid(n as i64) as usize)
}

fn sensor_frame(sensor: &Pose2, p: Vector2<f64>) -> (f64, f64) {
    let local = sensor.inverse_transform_point(p);
    (local.norm(), local.y.atan2(local.x))
}

fn deposit(row: &mut [f32], range: f64, amplitude: f64, rig: &SensorRig) {
    let center = range / rig.range_resolution;
    let sigma = rig.bump_sigma_bins;
    let extent = (BUMP_EXTENT_SIGMAS * sigma).ceil() as i64;
    let c = center.round() as i64;
    for k in (c - extent).max(0)..=(c + extent).min(row.len() as i64 - 1) {
        let d = k as f64 - center;
        row[k as usize] += (amplitude * (-0.5 * d * d / (sigma * sigma)).exp()) as f32;
    }
}

fn return_amplitude(rig: &SensorRig, reflectivity: f64, range: f64) -> f64 {
    rig.return_gain * reflectivity / range.max(1.0)
}

/// Wall-hit range (clipped to the sensor's reach) for every azimuth.
fn wall_ranges(world: &WorldModel, sw: &Sweep, max_range: f64) -> Vec<Option<(f64, f64)>> {
    sw.sensor
        .iter()
        .zip(&sw.angles)
        .map(|(s, a)| {
            let heading = s.theta + a;
            let dir = Vector2::new(heading.cos(), heading.sin());
            world
                .ray_cast(s.translation(), dir)
                .filter(|h| h.range < max_range)
                .map(|h| (h.range, h.reflectivity))
        })
        .collect()
}

/// Landmark returns as `(azimuth, range, reflectivity, bearing offset)`,
/// respecting wall occlusion.
fn landmark_returns(
    world: &WorldModel,
    sw: &Sweep,
    walls: &[Option<(f64, f64)>],
    rig: &SensorRig,
) -> Vec<(usize, f64, f64, f64)> {
    let n = rig.azimuth_count;
    let max_range = rig.max_range();
    let (first, last) = (&sw.sensor[0], &sw.sensor[n - 1]);
    let mut out = Vec::new();
    for lm in &world.landmarks {
        let p = Vector2::new(lm.position[0], lm.position[1]);
        let (r0, b0) = sensor_frame(first, p);
        if r0 > max_range + 2.0 {
            continue;
        }
        let (_, b1) = sensor_frame(last, p);
        for a in candidate_azimuths(b0, b1, rig.beam_half_width, n) {
            let (range, bearing) = sensor_frame(&sw.sensor[a], p);
            let offset = normalize_angle(sw.angles[a] - bearing);
            if offset.abs() > rig.beam_half_width || range >= max_range {
                continue;
            }
            if walls[a].is_some_and(|(wall, _)| wall <= range) {
                continue;
            }
            out.push((a, range, lm.reflectivity, offset));
        }
    }
    out
}

fn empty_scan(rig: &SensorRig, sw: Sweep) -> PolarScan {
    PolarScan {
        power: vec![0.0; rig.azimuth_count * rig.range_bins],
        range_bins: rig.range_bins,
        azimuth_angles: sw.angles,
        azimuth_timestamps: sw.times,
        range_resolution: rig.range_resolution,
    }
}

/// Synthesizes one polar power scan starting at `t_start`.
///
/// `rng` supplies the noise floor and artifact firing; callers that want
/// scan-level reproducibility pass a generator derived from the scan index.
pub fn simulate_scan(
    world: &WorldModel,
    truth: &GroundTruthLog,
    rig: &SensorRig,
    artifacts: &ArtifactPattern,
    t_start: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PolarScan, SimError> {
    let sw = sweep(truth, rig, t_start)?;
    let walls = wall_ranges(world, &sw, rig.max_range());
    let landmarks = landmark_returns(world, &sw, &walls, rig);
    let mut scan = empty_scan(rig, sw);

    if rig.noise_floor_std > 0.0 {
        let normal = Normal::new(rig.noise_floor_mean, rig.noise_floor_std).expect("validated std");
        for cell in scan.power.iter_mut() {
            *cell = normal.sample(rng).max(0.0) as f32;
        }
    } else if rig.noise_floor_mean > 0.0 {
        scan.power.fill(rig.noise_floor_mean as f32);
    }

    for (a, hit) in walls.iter().enumerate() {
        if let Some((range, refl)) = *hit {
            deposit(scan.row_mut(a), range, return_amplitude(rig, refl, range), rig);
        }
    }
    for &(a, range, refl, _) in &landmarks {
        deposit(scan.row_mut(a), range, return_amplitude(rig, refl, range), rig);
    }
    for (radius, support) in &artifacts.rings {
        for &a in support {
            if rng.gen_bool(rig.artifacts.fire_probability) {
                deposit(scan.row_mut(a), *radius, rig.artifacts.power, rig);
            }
        }
    }
    Ok(scan)
}

/// Exact returns with no detection stage: one point per visible wall hit per
/// azimuth, and one point per landmark at its true sensor-frame position
/// taken at the azimuth closest to its bearing.
pub fn ideal_returns(
    world: &WorldModel,
    truth: &GroundTruthLog,
    rig: &SensorRig,
    t_start: f64,
    min_range: f64,
) -> Result<RadarPointCloud, SimError> {
    let sw = sweep(truth, rig, t_start)?;
    let walls = wall_ranges(world, &sw, rig.max_range());
    let mut points = Vec::new();
    for (a, hit) in walls.iter().enumerate() {
        if let Some((range, refl)) = *hit {
            if range >= min_range {
                let (s, c) = sw.angles[a].sin_cos();
                points.push(RadarPoint {
                    x: range * c,
                    y: range * s,
                    timestamp: sw.times[a],
                    power: return_amplitude(rig, refl, range),
                });
            }
        }
    }
    let mut chosen: Vec<(usize, Vector2<f64>, f64)> = Vec::new();
    for lm in &world.landmarks {
        let p = Vector2::new(lm.position[0], lm.position[1]);
        let mut pick: Option<(usize, f64)> = None;
        let n = rig.azimuth_count;
        let (_, b0) = sensor_frame(&sw.sensor[0], p);
        let (_, b1) = sensor_frame(&sw.sensor[n - 1], p);
        for a in candidate_azimuths(b0, b1, rig.beam_half_width, n) {
            let (range, bearing) = sensor_frame(&sw.sensor[a], p);
            let offset = normalize_angle(sw.angles[a] - bearing).abs();
            if offset > rig.beam_half_width || range >= rig.max_range() || range < min_range {
                continue;
            }
            if walls[a].is_some_and(|(wall, _)| wall <= range) {
                continue;
            }
            if pick.is_none_or(|(_, o)| offset < o) {
                pick = Some((a, offset));
            }
        }
        if let Some((a, _)) = pick {
            chosen.push((a, sw.sensor[a].inverse_transform_point(p), lm.reflectivity));
        }
    }
    chosen.sort_by_key(|c| c.0);
    for (a, local, refl) in chosen {
        points.push(RadarPoint {
            x: local.x,
            y: local.y,
            timestamp: sw.times[a],
            power: return_amplitude(rig, refl, local.norm()),
        });
    }
    Ok(RadarPointCloud { points })
}
