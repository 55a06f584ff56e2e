//! Teach and repeat experiments over the simulator, run as a deterministic
//! single-threaded event loop.

mod frontend;
mod repeat;
mod report;
mod teach;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::control::{ControlError, MpcConfig};
use crate::detection::{BfarParams, DetectionError};
use crate::estimation::{EstimationError, GaussNewtonSettings, NoiseConfig};
use crate::posegraph::{GraphError, GraphThresholds};
use crate::se2::Pose2;
use crate::sim::{builtin_scenario, validate_waypoints, PilotSettings, SensorRig, SimError, WorldModel};

pub use frontend::{acquire_cloud, FrontendStep, OdometryFrontend};
pub use repeat::{cmd_repeat, run_repeat, teach_truth_path, HaltEvent, RepeatOutcome, RepeatTraceRow};
pub use report::{cmd_report, load_run_summaries, ReportRow, ReportTable, RunSummary};
pub use teach::{cmd_teach, run_teach, TeachOutcome, TeachReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_HALT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_FATAL: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Sim(SimError::UnknownScenario(_)) => EXIT_CONFIG,
            HarnessError::Sim(SimError::InvalidWorld(_) | SimError::InvalidRig(_) | SimError::InvalidWaypoints(_)) => {
                EXIT_CONFIG
            }
            HarnessError::Sim(SimError::Io { .. }) => EXIT_CONFIG,
            _ => EXIT_FATAL,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

/// Odometry map settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometrySettings {
    /// Number of recent scans merged into the sliding map.
    pub map_window: usize,
    pub map_voxel: f64,
}

impl Default for OdometrySettings {
    fn default() -> Self {
        Self {
            map_window: 10,
            map_voxel: 0.2,
        }
    }
}

/// One experiment: world, sensors, pipeline parameters and outputs.
///
/// Loaded from TOML; every table is optional and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Builtin scenario name; ignored when `world_file` is set.
    pub scenario: String,
    /// World description in TOML; requires `waypoints`.
    pub world_file: Option<PathBuf>,
    /// Teach route for a custom world, as `[x, y]` points.
    pub waypoints: Option<Vec<[f64; 2]>>,
    pub seed: u64,
    pub repeats: usize,
    pub output_dir: PathBuf,
    /// Bypass detection with exact landmark and wall returns.
    pub ideal_sensor: bool,
    pub no_gyro: bool,
    /// Enables the radial artifact rings of the rig.
    pub artifacts: bool,
    /// Timeout of a repeat as a multiple of the nominal route time.
    pub timeout_factor: f64,
    /// Standard deviations of white noise added to the realized `(v, omega)`
    /// each scan during repeats.
    pub actuation_noise: [f64; 2],
    pub rig: SensorRig,
    /// Detector thresholds; derived from the rig's noise floor when absent.
    pub detection: Option<BfarParams>,
    pub noise: NoiseConfig,
    pub solver: GaussNewtonSettings,
    pub odometry: OdometrySettings,
    pub graph: GraphThresholds,
    pub mpc: MpcConfig,
    pub pilot: PilotSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "dense".into(),
            world_file: None,
            waypoints: None,
            seed: 1,
            repeats: 1,
            output_dir: PathBuf::from("out"),
            ideal_sensor: false,
            no_gyro: false,
            artifacts: false,
            timeout_factor: 2.0,
            actuation_noise: [0.0, 0.0],
            rig: SensorRig::default(),
            detection: None,
            noise: NoiseConfig::default(),
            solver: GaussNewtonSettings::default(),
            odometry: OdometrySettings::default(),
            graph: GraphThresholds::default(),
            mpc: MpcConfig::default(),
            pilot: PilotSettings {
                start_hold: 0.5,
                max_accel: Some(0.5),
                ..PilotSettings::default()
            },
        }
    }
}

/// World and teach route resolved from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct ResolvedWorld {
    pub name: String,
    pub world: WorldModel,
    pub waypoints: Vec<Pose2>,
}

impl ResolvedWorld {
    /// Where both the teach and every repeat start.
    pub fn start_pose(&self) -> Pose2 {
        let (a, b) = (self.waypoints[0].translation(), self.waypoints[1].translation());
        let d = b - a;
        Pose2::new(a.x, a.y, d.y.atan2(d.x))
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.world.to_toml_string().as_bytes());
        for w in &self.waypoints {
            for v in [w.x, w.y] {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg_err = |m: String| Err(HarnessError::Config(m));
        self.rig.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.bfar().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.mpc.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.odometry.map_window == 0 || !(self.odometry.map_voxel > 0.0) {
            return cfg_err("odometry map window and voxel must be positive".into());
        }
        if !(self.graph.d_pos > 0.0) || !(self.graph.d_theta > 0.0) || !(self.graph.voxel > 0.0) {
            return cfg_err("graph thresholds must be positive".into());
        }
        if !(self.pilot.truth_dt > 0.0) || !(self.pilot.lookahead > 0.0) || !(self.pilot.start_hold >= 0.0) {
            return cfg_err("pilot settings must be positive".into());
        }
        let ratio = self.rig.scan_period / self.pilot.truth_dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return cfg_err("scan period must be a multiple of the truth period".into());
        }
        if (self.mpc.dt - self.rig.scan_period).abs() > 1e-12 {
            return cfg_err("MPC step must equal the scan period".into());
        }
        if self.repeats == 0 {
            return cfg_err("repeats must be at least 1".into());
        }
        if !(self.timeout_factor >= 1.0) {
            return cfg_err("timeout_factor must be at least 1".into());
        }
        if !self.actuation_noise.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return cfg_err("actuation_noise must be finite and non-negative".into());
        }
        if self.world_file.is_some() != self.waypoints.is_some() {
            return cfg_err("world_file and waypoints must be given together".into());
        }
        Ok(())
    }

    /// Rig with the artifact toggle applied.
    pub fn effective_rig(&self) -> SensorRig {
        let mut rig = self.rig;
        rig.artifacts.enabled |= self.artifacts;
        rig
    }

    pub fn bfar(&self) -> BfarParams {
        self.detection.unwrap_or_else(|| BfarParams::for_noise_std(self.rig.noise_floor_std))
    }

    pub fn resolve_world(&self) -> Result<ResolvedWorld, HarnessError> {
        match (&self.world_file, &self.waypoints) {
            (Some(path), Some(points)) => {
                let world = WorldModel::load(path)?;
                let waypoints: Vec<Pose2> = points.iter().map(|p| Pose2::new(p[0], p[1], 0.0)).collect();
                validate_waypoints(&waypoints)?;
                Ok(ResolvedWorld {
                    name: path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned()),
                    world,
                    waypoints,
                })
            }
            _ => {
                let s = builtin_scenario(&self.scenario, self.seed)?;
                Ok(ResolvedWorld {
                    name: s.kind.as_str().to_string(),
                    world: s.world,
                    waypoints: s.waypoints,
                })
            }
        }
    }

    /// Sensor-mode label used to group report rows.
    pub fn mode_label(&self) -> String {
        let mut label = String::from(if self.ideal_sensor { "ideal" } else { "radar" });
        if self.effective_rig().artifacts.enabled {
            label.push_str("+artifacts");
        }
        if self.no_gyro {
            label.push_str("+nogyro");
        }
        label
    }

    /// Digest of everything downstream of detection. Sensor-mode toggles
    /// must not change it.
    pub fn odometry_config_hash(&self) -> String {
        let doc = serde_json::json!({
            "noise": self.noise,
            "solver": self.solver,
            "odometry": self.odometry,
            "graph": self.graph,
            "mpc": self.mpc,
        });
        Sha256::digest(doc.to_string().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seed of the sensor streams for teach (`run == 0`) or repeat
    /// `run - 1`.
    pub fn stream_seed(&self, run: u64) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ run
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}
