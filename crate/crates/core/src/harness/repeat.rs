use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::frontend::{acquire_cloud, is_recoverable, OdometryFrontend};
use super::report::RunSummary;
use super::teach::TRUTH_PATH_KEY;
use super::{write_file, HarnessError, ResolvedWorld, RunConfig};
use crate::control::{build_reference, solve_mpc, ControlCommand, MpcStatus, ReferencePath};
use crate::estimation::{gyro_rate_update, localize, NeighborIndex};
use crate::geometry::Polyline;
use crate::metrics::{lateral_error, summarize, write_svg, EstimatedError, MeasuredError, PathTrackingReport};
use crate::posegraph::{closest_vertex, load_graph, PoseGraph};
use crate::se2::{flow, Pose2, Twist2};
use crate::sim::{gyro_tick, stream_rng, GroundTruthLog, GyroMeasurement, SensorSuite};

/// Remaining arc length at which a repeat counts as complete.
const FINISH_DISTANCE: f64 = 0.25;
/// Consecutive failed localizations (in scans) before the run is abandoned.
const MAX_LOST_SCANS: usize = 20;
const ACTUATION_STREAM: u64 = 0xac;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaltEvent {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatTraceRow {
    pub t: f64,
    pub true_pose: Pose2,
    /// Localized pose in the teach frame.
    pub estimate: Pose2,
    pub vertex: u32,
    pub inliers: usize,
    pub progress: f64,
    pub command: ControlCommand,
    pub mpc_iterations: usize,
    pub measured: f64,
    pub estimated: f64,
}

#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub report: PathTrackingReport,
    pub halt: Option<HaltEvent>,
    pub localization_failures: usize,
    pub odometry_dropouts: usize,
    pub trace: Vec<RepeatTraceRow>,
    pub warnings: Vec<String>,
    /// Truth positions at each knot with the measured lateral error.
    pub path: Vec<(Vector2<f64>, f64)>,
}

impl RepeatOutcome {
    pub fn completed(&self) -> bool {
        self.halt.is_none()
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "t,true_x,true_y,true_theta,est_x,est_y,est_theta,vertex,inliers,progress,v,omega,mpc_iterations,measured,estimated"
        )?;
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.true_pose.x,
                r.true_pose.y,
                r.true_pose.theta,
                r.estimate.x,
                r.estimate.y,
                r.estimate.theta,
                r.vertex,
                r.inliers,
                r.progress,
                r.command.v,
                r.command.omega,
                r.mpc_iterations,
                r.measured,
                r.estimated
            )?;
        }
        Ok(())
    }
}

/// True teach path stored in the archive for scoring.
pub fn teach_truth_path(graph: &PoseGraph) -> Result<Polyline, HarnessError> {
    let text = graph
        .metadata
        .get(TRUTH_PATH_KEY)
        .ok_or_else(|| HarnessError::Config("archive has no teach truth path".into()))?;
    let points: Vec<[f64; 2]> =
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("teach truth path: {e}")))?;
    Ok(Polyline::new(points.iter().map(|p| Vector2::new(p[0], p[1]))))
}

fn extend_gyro(
    buffer: &mut Vec<GyroMeasurement>,
    truth: &GroundTruthLog,
    sensors: &SensorSuite,
) -> Result<(), HarnessError> {
    let period = sensors.rig.gyro_period();
    let last = (truth.end_time() / period + 1e-9).floor() as u64;
    let next = buffer.last().map_or(0, |m| (m.timestamp / period).round() as u64 + 1);
    for k in next..=last {
        buffer.push(gyro_tick(truth, &sensors.rig, sensors.seed, k)?);
    }
    Ok(())
}

/// One autonomous repeat of the taught route.
///
/// Per scan: odometry, localization against the nearest submap, lateral
/// error bookkeeping at the knot, extrapolation to the end of the scan
/// with the latest gyro reading, and an MPC solve whose command is held
/// over the next scan period. Ground truth is read only to synthesize
/// sensor data and to score the run.
pub fn run_repeat(
    cfg: &RunConfig,
    graph: &PoseGraph,
    world: &ResolvedWorld,
    repeat: usize,
) -> Result<RepeatOutcome, HarnessError> {
    cfg.validate()?;
    let teach_truth = teach_truth_path(graph)?;
    let path = ReferencePath::new(&graph.path.poses)?;
    let teach_line = path.polyline().clone();
    let mut warnings = Vec::new();
    if graph.metadata.get("world_digest").is_some_and(|d| *d != world.digest()) {
        warnings.push("archive was taught in a different world".to_string());
    }

    let sensors = SensorSuite::new(world.world.clone(), cfg.effective_rig(), cfg.stream_seed(1 + repeat as u64))?;
    let period = cfg.rig.scan_period;
    let steps_per_scan = (period / cfg.pilot.truth_dt).round() as usize;
    let mut truth = GroundTruthLog::new(world.start_pose(), cfg.pilot.truth_dt);
    for _ in 0..steps_per_scan {
        truth.push(Twist2::zero());
    }
    let mut gyro = Vec::new();
    extend_gyro(&mut gyro, &truth, &sensors)?;

    let prior_cov = cfg.noise.pose_prior_covariance();
    let mut frontend = OdometryFrontend::new(cfg);
    let mut indices: HashMap<u32, NeighborIndex> = HashMap::new();
    let mut last_fix: Option<(Pose2, Pose2)> = None;
    let mut vertex = 0u32;
    let mut progress = 0.0;
    let mut u_prev = ControlCommand::default();
    let mut measured = Vec::new();
    let mut estimated = Vec::new();
    let mut trace = Vec::new();
    let mut repeat_path = Vec::new();
    let mut failures = 0;
    let mut lost = 0;
    let mut halt = None;
    let mut actuation_rng = stream_rng(cfg.stream_seed(1 + repeat as u64), ACTUATION_STREAM, 0);
    let [v_noise, omega_noise] = cfg.actuation_noise.map(|s| Normal::new(0.0, s).expect("validated std"));
    let timeout = cfg.timeout_factor * path.length() / cfg.mpc.target_speed.max(1e-3) + 10.0;

    for k in 0.. {
        let t_end = sensors.scan_start(k) + period;
        let knot_time = t_end - 0.5 * period;
        let cloud = acquire_cloud(&sensors, &truth, k, cfg)?;
        let step = frontend.process(&cloud, &gyro, knot_time)?;
        let knot = step.knot;

        let prior = match last_fix {
            Some((loc, odom)) => loc.compose(&odom.between(&knot.pose)),
            None => Pose2::identity(),
        };
        vertex = closest_vertex(&prior, graph, vertex).expect("graph has vertices");
        let submap = graph.vertex(vertex).expect("closest vertex exists");
        let index = match indices.entry(vertex) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(NeighborIndex::new(submap.points.clone(), cfg.solver.correspondence_max_dist)?)
            }
        };
        let prior_local = submap.keyframe.inverse().compose(&prior);
        let (localized, inliers) = match localize(&step.points, index, &prior_local, &prior_cov, &cfg.noise, &cfg.solver) {
            Ok(r) => {
                lost = 0;
                (submap.keyframe.compose(&r.pose), r.inliers)
            }
            Err(e) if is_recoverable(&e) => {
                failures += 1;
                lost += 1;
                (prior, 0)
            }
            Err(e) => return Err(e.into()),
        };
        last_fix = Some((localized, knot.pose));

        let true_knot = truth.pose_at(knot_time)?;
        let m = lateral_error(true_knot.translation(), &teach_truth).map_err(|e| HarnessError::Config(e.to_string()))?;
        let e = lateral_error(localized.translation(), &teach_line).map_err(|e| HarnessError::Config(e.to_string()))?;
        measured.push(MeasuredError {
            timestamp: knot_time,
            lateral: m,
        });
        estimated.push(EstimatedError {
            timestamp: knot_time,
            lateral: e,
        });
        repeat_path.push((true_knot.translation(), m));

        let extrapolated = if cfg.no_gyro {
            flow(&knot.pose, &knot.twist, t_end - knot_time)
        } else {
            let tick = gyro.last().expect("gyro buffer covers the scan");
            gyro_rate_update(&knot, tick, &cfg.noise)?
        };
        let current = localized.compose(&knot.pose.between(&extrapolated));
        let refs = build_reference(&path, &current, Some(progress), &cfg.mpc);
        progress = refs.progress;

        let mut row = RepeatTraceRow {
            t: knot_time,
            true_pose: true_knot,
            estimate: localized,
            vertex,
            inliers,
            progress,
            command: ControlCommand::default(),
            mpc_iterations: 0,
            measured: m,
            estimated: e,
        };
        let stop = |reason: &str| {
            let p = truth.last_pose();
            Some(HaltEvent {
                time: t_end,
                x: p.x,
                y: p.y,
                reason: reason.to_string(),
            })
        };
        if path.length() - progress < FINISH_DISTANCE {
            trace.push(row);
            break;
        }
        if lost > MAX_LOST_SCANS {
            trace.push(row);
            halt = stop("localization lost");
            break;
        }
        if t_end > timeout {
            trace.push(row);
            halt = stop("timeout");
            break;
        }
        let sol = solve_mpc(&current, &u_prev, &refs, &cfg.mpc);
        row.command = sol.command;
        row.mpc_iterations = sol.iterations;
        trace.push(row);
        if sol.status == MpcStatus::Infeasible {
            halt = stop(&format!("corridor infeasible (offset {:.3} m)", sol.corridor_offset));
            break;
        }
        let omega_eff = (1.0 - cfg.mpc.alpha) * sol.command.omega + cfg.mpc.alpha * u_prev.omega;
        let v_real = sol.command.v + v_noise.sample(&mut actuation_rng);
        let omega_real = omega_eff + omega_noise.sample(&mut actuation_rng);
        for _ in 0..steps_per_scan {
            truth.push(Twist2::new(v_real, 0.0, omega_real));
        }
        extend_gyro(&mut gyro, &truth, &sensors)?;
        u_prev = sol.command;
    }

    let report = summarize(&measured, &estimated, usize::from(halt.is_some()))
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(RepeatOutcome {
        repeat,
        report,
        halt,
        localization_failures: failures,
        odometry_dropouts: frontend.dropouts(),
        trace,
        warnings,
        path: repeat_path,
    })
}

/// Runs `cfg.repeats` repeats against the archived graph and writes one
/// directory per repeat with the tracking CSV, summary JSON, trace and SVG.
pub fn cmd_repeat(cfg: &RunConfig, archive: &Path) -> Result<Vec<RepeatOutcome>, HarnessError> {
    cfg.validate()?;
    let world = cfg.resolve_world()?;
    let graph = load_graph(archive).map_err(|e| match e {
        crate::posegraph::GraphError::Io { path, message } => HarnessError::Config(format!("{path}: {message}")),
        other => other.into(),
    })?;
    let teach_truth = teach_truth_path(&graph)?;
    let mut outcomes = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let out = run_repeat(cfg, &graph, &world, r)?;
        let dir = cfg.output_dir.join(format!("repeat_{r:02}"));
        let io = |e: std::io::Error| HarnessError::io(&dir, e);
        let mut buf = Vec::new();
        out.report.write_csv(&mut buf).map_err(io)?;
        write_file(&dir.join("tracking.csv"), &buf)?;
        let mut buf = Vec::new();
        out.write_trace_csv(&mut buf).map_err(io)?;
        write_file(&dir.join("trace.csv"), &buf)?;
        let mut buf = Vec::new();
        write_svg(&teach_truth, &out.path, &mut buf).map_err(io)?;
        write_file(&dir.join("path.svg"), &buf)?;
        let summary = RunSummary::from_outcome(&world.name, &cfg.mode_label(), cfg.seed, &out);
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_file(&dir.join("summary.json"), json.as_bytes())?;
        outcomes.push(out);
    }
    Ok(outcomes)
}
