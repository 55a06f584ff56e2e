use nalgebra::Vector2;

use super::{HarnessError, RunConfig};
use crate::detection::{scan_to_cloud, RadarPointCloud};
use crate::estimation::{
    deskew, odometry_step, preintegrate_yaw, EstimationError, GaussNewtonSettings, NoiseConfig, SlidingMap,
    StateKnot, StepDiagnostics,
};
use crate::se2::{flow, Pose2, Twist2};
use crate::sim::{GroundTruthLog, GyroMeasurement, SensorSuite};

/// Detected (or, in ideal mode, exact) returns of scan `index`.
pub fn acquire_cloud(
    sensors: &SensorSuite,
    truth: &GroundTruthLog,
    index: usize,
    cfg: &RunConfig,
) -> Result<RadarPointCloud, HarnessError> {
    let bfar = cfg.bfar();
    if cfg.ideal_sensor {
        let min_range = bfar.min_range_bin as f64 * sensors.rig.range_resolution;
        Ok(sensors.ideal_cloud(truth, index, min_range)?)
    } else {
        Ok(scan_to_cloud(&sensors.scan(truth, index)?, &bfar)?)
    }
}

/// Errors after which odometry can coast on its motion prediction.
pub(crate) fn is_recoverable(err: &EstimationError) -> bool {
    matches!(
        err,
        EstimationError::InsufficientCorrespondences { .. } | EstimationError::Diverged(_) | EstimationError::EmptyTarget
    )
}

#[derive(Debug, Clone)]
pub struct FrontendStep {
    pub knot: StateKnot,
    /// Motion-compensated returns in the robot frame at the knot.
    pub points: Vec<Vector2<f64>>,
    pub diagnostics: StepDiagnostics,
    /// Odometry failed and the knot is the motion prediction.
    pub dropout: bool,
}

/// Radar odometry with its sliding map, one knot per scan.
#[derive(Debug, Clone)]
pub struct OdometryFrontend {
    map: SlidingMap,
    prev: Option<StateKnot>,
    extrinsic: Pose2,
    use_gyro: bool,
    noise: NoiseConfig,
    solver: GaussNewtonSettings,
    dropouts: usize,
}

impl OdometryFrontend {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            map: SlidingMap::new(cfg.odometry.map_window, cfg.odometry.map_voxel),
            prev: None,
            extrinsic: cfg.rig.radar_extrinsic,
            use_gyro: !cfg.no_gyro,
            noise: cfg.noise,
            solver: cfg.solver,
            dropouts: 0,
        }
    }

    pub fn dropouts(&self) -> usize {
        self.dropouts
    }

    pub fn last_knot(&self) -> Option<&StateKnot> {
        self.prev.as_ref()
    }

    /// Processes one scan. The first scan anchors the odometry frame at the
    /// identity; `gyro` must cover the interval since the previous knot.
    pub fn process(
        &mut self,
        cloud: &RadarPointCloud,
        gyro: &[GyroMeasurement],
        knot_time: f64,
    ) -> Result<FrontendStep, HarnessError> {
        let (knot, iterations, cost, inliers, dropout) = match &self.prev {
            None => (StateKnot::new(knot_time, Pose2::identity(), Twist2::zero()), 0, 0.0, 0, false),
            Some(prev) => {
                let yaw = if self.use_gyro {
                    Some(preintegrate_yaw(gyro, prev.timestamp, knot_time, &self.noise)?)
                } else {
                    None
                };
                match odometry_step(
                    cloud,
                    &self.map,
                    prev,
                    yaw.as_ref(),
                    &self.extrinsic,
                    knot_time,
                    &self.noise,
                    &self.solver,
                ) {
                    Ok(r) => (r.knot, r.iterations, r.cost, r.correspondences, false),
                    Err(e) if is_recoverable(&e) => {
                        self.dropouts += 1;
                        let dt = knot_time - prev.timestamp;
                        let mut twist = prev.twist;
                        if let Some(y) = &yaw {
                            twist.omega = y.delta_theta / dt;
                        }
                        let pose = flow(&prev.pose, &twist, dt);
                        (StateKnot::new(knot_time, pose, twist), 0, f64::NAN, 0, true)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };
        if !knot.is_finite() {
            return Err(EstimationError::Numerical("non-finite odometry state").into());
        }
        let points = deskew(cloud, &self.extrinsic, &knot);
        self.map.insert(points.iter().map(|p| knot.pose.transform_point(*p)).collect());
        self.prev = Some(knot);
        Ok(FrontendStep {
            knot,
            points,
            diagnostics: StepDiagnostics {
                timestamp: knot_time,
                iterations,
                cost,
                inliers,
                pose: knot.pose,
                twist: knot.twist,
            },
            dropout,
        })
    }
}
