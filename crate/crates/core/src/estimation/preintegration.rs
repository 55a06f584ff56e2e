use serde::{Deserialize, Serialize};

use super::{EstimationError, NoiseConfig};
use crate::sim::GyroMeasurement;

/// Yaw change between two times, integrated from gyro rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreintegratedYaw {
    pub delta_theta: f64,
    pub variance: f64,
    pub t_a: f64,
    pub t_b: f64,
}

/// Integrates the piecewise-linear interpolant of the gyro samples over
/// `[t_a, t_b]` (the trapezoid rule on the sample grid). The variance
/// assumes white rate noise: each sample period contributes
/// `r_yaw_rate * dt_gyro^2`, i.e. `r_yaw_rate * (t_b - t_a) * dt_gyro` in total.
///
/// `meas` must be sorted by timestamp.
pub fn preintegrate_yaw(
    meas: &[GyroMeasurement],
    t_a: f64,
    t_b: f64,
    cfg: &NoiseConfig,
) -> Result<PreintegratedYaw, EstimationError> {
    if !(t_b > t_a) {
        return Err(EstimationError::DegenerateInterval { t_a, t_b });
    }
    const EPS: f64 = 1e-9;
    let coverage = EstimationError::GyroCoverage { t_a, t_b };
    if meas.len() < 2 || meas[0].timestamp > t_a + EPS || meas[meas.len() - 1].timestamp < t_b - EPS {
        return Err(coverage);
    }
    // Last sample at or before t_a.
    let first = meas.partition_point(|m| m.timestamp <= t_a + EPS).saturating_sub(1);
    let mut delta = 0.0;
    let mut gyro_dt: f64 = 0.0;
    for w in meas[first..].windows(2) {
        let (m0, m1) = (w[0], w[1]);
        if m0.timestamp >= t_b - EPS {
            break;
        }
        let span = m1.timestamp - m0.timestamp;
        if !(span > 0.0) {
            return Err(coverage);
        }
        gyro_dt = gyro_dt.max(span);
        let rate_at = |t: f64| m0.yaw_rate + (m1.yaw_rate - m0.yaw_rate) * (t - m0.timestamp) / span;
        let lo = t_a.max(m0.timestamp);
        let hi = t_b.min(m1.timestamp);
        if hi > lo {
            delta += 0.5 * (hi - lo) * (rate_at(lo) + rate_at(hi));
        }
    }
    Ok(PreintegratedYaw {
        delta_theta: delta,
        variance: cfg.r_yaw_rate * (t_b - t_a) * gyro_dt,
        t_a,
        t_b,
    })
}
