use serde::{Deserialize, Serialize};

use super::SimError;
use crate::se2::Pose2;

/// Sensor-centred ring artifacts.
///
/// Each ring has a fixed radius and a fixed set of support azimuths in the
/// sensor frame, both drawn once from `pattern_seed`. Every scan re-samples
/// which support cells light up with probability `fire_probability`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactConfig {
    pub enabled: bool,
    pub ring_count: usize,
    pub points_per_ring: usize,
    pub power: f64,
    pub fire_probability: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub pattern_seed: u64,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            ring_count: 6,
            points_per_ring: 60,
            power: 30.0,
            fire_probability: 0.7,
            min_radius: 4.0,
            max_radius: 30.0,
            pattern_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorRig {
    /// Sensor pose in the robot frame.
    pub radar_extrinsic: Pose2,
    pub scan_period: f64,
    pub azimuth_count: usize,
    pub range_bins: usize,
    pub range_resolution: f64,
    pub noise_floor_mean: f64,
    pub noise_floor_std: f64,
    /// Peak power of a unit-reflectivity return at 1 m; falls off as 1/r.
    pub return_gain: f64,
    /// Width of the deposited range bump, in bins.
    pub bump_sigma_bins: f64,
    pub beam_half_width: f64,
    pub gyro_rate: f64,
    pub gyro_noise_std: f64,
    pub gyro_bias: f64,
    pub artifacts: ArtifactConfig,
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            radar_extrinsic: Pose2::new(0.2, 0.0, 0.0),
            scan_period: 0.25,
            azimuth_count: 400,
            range_bins: 512,
            range_resolution: 0.1,
            noise_floor_mean: 4.0,
            noise_floor_std: 0.5,
            return_gain: 400.0,
            bump_sigma_bins: 1.5,
            beam_half_width: 0.9f64.to_radians(),
            gyro_rate: 100.0,
            gyro_noise_std: 0.01,
            gyro_bias: 0.0005,
            artifacts: ArtifactConfig::default(),
        }
    }
}

impl SensorRig {
    /// Noise-free rig: no floor noise, no gyro noise or bias, no artifacts.
    pub fn noiseless() -> Self {
        Self {
            noise_floor_mean: 0.0,
            noise_floor_std: 0.0,
            gyro_noise_std: 0.0,
            gyro_bias: 0.0,
            ..Self::default()
        }
    }

    pub fn max_range(&self) -> f64 {
        self.range_bins as f64 * self.range_resolution
    }

    pub fn gyro_period(&self) -> f64 {
        1.0 / self.gyro_rate
    }

    pub fn gyro_ticks_per_scan(&self) -> usize {
        (self.scan_period * self.gyro_rate).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: &str| Err(SimError::InvalidRig(m.to_string()));
        if !(self.scan_period > 0.0) || !(self.gyro_rate > 0.0) {
            return fail("scan_period and gyro_rate must be positive");
        }
        let ticks = self.scan_period * self.gyro_rate;
        if (ticks - ticks.round()).abs() > 1e-9 || ticks.round() < 1.0 {
            return fail("gyro_rate / radar rate must be a positive integer");
        }
        if self.azimuth_count < 2 || self.range_bins < 2 {
            return fail("scan grid must have at least two azimuths and two bins");
        }
        if !(self.range_resolution > 0.0) || !(self.bump_sigma_bins > 0.0) || !(self.beam_half_width > 0.0) {
            return fail("range resolution, bump width and beam width must be positive");
        }
        if self.noise_floor_mean < 0.0 || self.noise_floor_std < 0.0 || self.gyro_noise_std < 0.0 {
            return fail("noise parameters must be non-negative");
        }
        if !self.radar_extrinsic.is_finite() || !self.gyro_bias.is_finite() || !(self.return_gain >= 0.0) {
            return fail("extrinsic, bias and gain must be finite");
        }
        let a = &self.artifacts;
        if a.enabled
            && (!(0.0..=1.0).contains(&a.fire_probability) || !(a.min_radius > 0.0) || a.max_radius < a.min_radius)
        {
            return fail("artifact settings out of range");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rig_has_integer_gyro_ratio() {
        let rig = SensorRig::default();
        rig.validate().unwrap();
        assert_eq!(rig.gyro_ticks_per_scan(), 25);
        assert!((rig.max_range() - 51.2).abs() < 1e-12);
    }

    #[test]
    fn fractional_gyro_ratio_is_rejected() {
        let rig = SensorRig {
            gyro_rate: 90.0,
            scan_period: 0.25,
            ..SensorRig::default()
        };
        assert!(rig.validate().is_err());
    }
}
