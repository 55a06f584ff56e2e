//! Planar world, scripted teach pilot and sensor synthesis.
//!
//! Every random draw comes from [`stream_rng`], keyed by the run seed, a
//! purpose tag and an index (scan number, gyro tick), so streams can be
//! produced lazily and in any order without changing their contents.

mod gyro;
mod pilot;
mod radar;
mod rig;
mod scenario;
mod truth;
mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use gyro::{gyro_tick, simulate_gyro, GyroMeasurement};
pub use pilot::{drive_teach, validate_waypoints, PilotSettings, SensorSuite, TeachDrive};
pub use radar::{ideal_returns, simulate_scan, ArtifactPattern};
pub use rig::{ArtifactConfig, SensorRig};
pub use scenario::{builtin_scenario, rounded_rectangle, Scenario, ScenarioKind};
pub use truth::GroundTruthLog;
pub use world::{point_segment_distance, ray_segment, Bounds, Landmark, RayHit, Wall, WorldModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid sensor rig: {0}")]
    InvalidRig(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("ground truth covers [{:.3}, {:.3}] s but [{:.3}, {:.3}] s was requested", available.0, available.1, requested.0, requested.1)]
    TruthCoverage {
        requested: (f64, f64),
        available: (f64, f64),
    },
    #[error("infeasible waypoints: {0}")]
    InvalidWaypoints(String),
    #[error("unknown scenario '{0}' (expected dense, medium, sparse or cluttered)")]
    UnknownScenario(String),
}

/// Independent generator for `(seed, purpose, index)`.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 40) ^ index);
    rng
}
