use super::{EstimationError, NoiseConfig, StateKnot};
use crate::se2::{flow, Pose2, Twist2};
use crate::sim::GyroMeasurement;

/// Precision-weighted yaw rate between the knot twist (prior precision
/// `1 / (qc_omega * dt)`) and a gyro reading (precision `1 / r_yaw_rate`).
pub fn fuse_yaw_rate(prior_omega: f64, measured: f64, dt: f64, cfg: &NoiseConfig) -> f64 {
    let prior_precision = 1.0 / (cfg.qc_diag[2] * dt);
    let meas_precision = 1.0 / cfg.r_yaw_rate;
    prior_omega + meas_precision / (prior_precision + meas_precision) * (measured - prior_omega)
}

/// High-rate pose extrapolation from the last radar knot to a gyro tick.
///
/// Minimizing the constant-velocity prior on the yaw rate plus the gyro
/// rate error has the closed-form solution [`fuse_yaw_rate`]; the pose
/// follows by flowing the knot with the fused twist.
pub fn gyro_rate_update(last: &StateKnot, meas: &GyroMeasurement, cfg: &NoiseConfig) -> Result<Pose2, EstimationError> {
    let dt = meas.timestamp - last.timestamp;
    if !(dt > 0.0) {
        return Err(EstimationError::NonMonotonicTimestamp {
            knot: last.timestamp,
            measurement: meas.timestamp,
        });
    }
    let omega = fuse_yaw_rate(last.twist.omega, meas.yaw_rate, dt, cfg);
    Ok(flow(&last.pose, &Twist2::new(last.twist.vx, last.twist.vy, omega), dt))
}
