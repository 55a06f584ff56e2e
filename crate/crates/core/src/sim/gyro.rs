use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{stream_rng, GroundTruthLog, SensorRig, SimError};

const GYRO_STREAM: u64 = 0x6e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroMeasurement {
    pub timestamp: f64,
    pub yaw_rate: f64,
}

/// Gyro tick `k` of a run seeded with `seed`. Noise depends only on
/// `(seed, k)`, so any chunking of the timeline yields the same stream.
pub fn gyro_tick(truth: &GroundTruthLog, rig: &SensorRig, seed: u64, k: u64) -> Result<GyroMeasurement, SimError> {
    let t = k as f64 * rig.gyro_period();
    let omega = truth.twist_at(t)?.omega;
    let noise = if rig.gyro_noise_std > 0.0 {
        let mut rng = stream_rng(seed, GYRO_STREAM, k);
        Normal::new(0.0, rig.gyro_noise_std).expect("validated std").sample(&mut rng)
    } else {
        0.0
    };
    Ok(GyroMeasurement {
        timestamp: t,
        yaw_rate: omega + rig.gyro_bias + noise,
    })
}

/// All gyro ticks on the rate grid within `[t0, t1]`.
pub fn simulate_gyro(
    truth: &GroundTruthLog,
    rig: &SensorRig,
    seed: u64,
    t0: f64,
    t1: f64,
) -> Result<Vec<GyroMeasurement>, SimError> {
    truth.require(t0, t1)?;
    let period = rig.gyro_period();
    let first = (t0 / period - 1e-9).ceil().max(0.0) as u64;
    let last = (t1 / period + 1e-9).floor() as u64;
    (first..=last).map(|k| gyro_tick(truth, rig, seed, k)).collect()
}
