use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::frontend::{acquire_cloud, OdometryFrontend};
use super::{write_file, HarnessError, RunConfig};
use crate::estimation::{write_trace_csv, StepDiagnostics};
use crate::posegraph::{save_graph, GraphBuilder, PoseGraph};
use crate::se2::normalize_angle;
use crate::sim::{drive_teach, GroundTruthLog};

/// Metadata key holding the true teach path in world coordinates, used only
/// to score repeats.
pub(crate) const TRUTH_PATH_KEY: &str = "teach_truth_path";
const TRUTH_PATH_SPACING: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachReport {
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub scans: usize,
    pub vertices: usize,
    pub distance: f64,
    pub odometry_dropouts: usize,
    /// Largest odometry heading error, in radians per 100 m driven.
    pub heading_drift_per_100m: f64,
    /// Final odometry position error as a percentage of distance.
    pub final_position_drift_pct: f64,
}

#[derive(Debug, Clone)]
pub struct TeachOutcome {
    pub graph: PoseGraph,
    pub report: TeachReport,
    pub trace: Vec<StepDiagnostics>,
    pub truth: GroundTruthLog,
}

fn decimate(truth: &GroundTruthLog) -> Vec<[f64; 2]> {
    let mut out: Vec<Vector2<f64>> = Vec::new();
    for p in truth.poses() {
        let q = p.translation();
        if out.last().is_none_or(|l| (q - l).norm() >= TRUTH_PATH_SPACING) {
            out.push(q);
        }
    }
    let last = truth.last_pose().translation();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out.iter().map(|p| [p.x, p.y]).collect()
}

/// Drives the teach route, runs odometry on every scan and builds the graph.
pub fn run_teach(cfg: &RunConfig) -> Result<TeachOutcome, HarnessError> {
    cfg.validate()?;
    let resolved = cfg.resolve_world()?;
    let drive = drive_teach(
        &resolved.world,
        &cfg.effective_rig(),
        &resolved.waypoints,
        cfg.mpc.target_speed,
        cfg.stream_seed(0),
        &cfg.pilot,
    )?;
    let mut frontend = OdometryFrontend::new(cfg);
    let mut builder = GraphBuilder::new(cfg.graph);
    let mut trace = Vec::with_capacity(drive.scan_count());
    let truth0 = drive.truth.pose_at(drive.sensors.scan_start(0) + 0.5 * cfg.rig.scan_period)?;
    let mut max_heading_err: f64 = 0.0;
    let mut final_pos_err = 0.0;
    for k in 0..drive.scan_count() {
        let cloud = acquire_cloud(&drive.sensors, &drive.truth, k, cfg)?;
        let knot_time = drive.sensors.scan_start(k) + 0.5 * cfg.rig.scan_period;
        let step = frontend.process(&cloud, &drive.gyro, knot_time)?;
        let truth_rel = truth0.between(&drive.truth.pose_at(knot_time)?);
        max_heading_err = max_heading_err.max(normalize_angle(step.knot.pose.theta - truth_rel.theta).abs());
        final_pos_err = (step.knot.pose.translation() - truth_rel.translation()).norm();
        builder.push_scan(step.knot.pose, step.points);
        trace.push(step.diagnostics);
    }
    let mut graph = builder.finish();
    let distance = drive.truth.distance();
    graph.metadata.insert("scenario".into(), resolved.name.clone());
    graph.metadata.insert("mode".into(), cfg.mode_label());
    graph.metadata.insert("seed".into(), cfg.seed.to_string());
    graph.metadata.insert("world_digest".into(), resolved.digest());
    graph.metadata.insert(
        TRUTH_PATH_KEY.into(),
        serde_json::to_string(&decimate(&drive.truth)).expect("finite coordinates serialize"),
    );
    let report = TeachReport {
        scenario: resolved.name,
        mode: cfg.mode_label(),
        seed: cfg.seed,
        scans: trace.len(),
        vertices: graph.len(),
        distance,
        odometry_dropouts: frontend.dropouts(),
        heading_drift_per_100m: max_heading_err * 100.0 / distance,
        final_position_drift_pct: final_pos_err * 100.0 / distance,
    };
    Ok(TeachOutcome {
        graph,
        report,
        trace,
        truth: drive.truth,
    })
}

/// Runs the teach and writes `graph.rtrg`, `teach_truth.csv`,
/// `teach_odometry.csv` and `teach_report.json` to the output directory.
pub fn cmd_teach(cfg: &RunConfig) -> Result<TeachOutcome, HarnessError> {
    let out = run_teach(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    save_graph(&out.graph, &dir.join("graph.rtrg"))?;
    let mut buf = Vec::new();
    out.truth.write_csv(&mut buf).map_err(|e| HarnessError::io(dir, e))?;
    write_file(&dir.join("teach_truth.csv"), &buf)?;
    let mut buf = Vec::new();
    write_trace_csv(&out.trace, &mut buf).map_err(|e| HarnessError::io(dir, e))?;
    write_file(&dir.join("teach_odometry.csv"), &buf)?;
    let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
    write_file(&dir.join("teach_report.json"), json.as_bytes())?;
    Ok(out)
}
