//! Corridor-constrained MPC over a unicycle with first-order yaw-rate lag.

mod model;
mod mpc;
mod reference;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::signed_offset;
use crate::se2::Pose2;

pub use model::{rk4_step, rollout};
pub use mpc::{solve_mpc, MpcSolution, MpcStatus};
pub use reference::{build_reference, ReferencePath, ReferenceWindow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("reference path has fewer than two distinct points")]
    EmptyPath,
    #[error("corridor segment has coincident endpoints")]
    DegenerateSegment,
    #[error("expected {expected} inputs, got {got}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub v: f64,
    pub omega: f64,
}

impl ControlCommand {
    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Weight of the previous yaw-rate command in the realized yaw rate.
    pub alpha: f64,
    /// Pose-error weights on (longitudinal, lateral, heading).
    pub q_weights: [f64; 3],
    /// Input weights on (v, omega).
    pub r_weights: [f64; 2],
    pub v_bounds: (f64, f64),
    pub omega_bounds: (f64, f64),
    /// Allowed offset to the left and right of the path.
    pub corridor: (f64, f64),
    pub target_speed: f64,
    pub max_iterations: usize,
    pub penalty_rounds: usize,
    pub initial_penalty: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 12,
            dt: 0.25,
            alpha: 0.4,
            q_weights: [10.0, 10.0, 10.0],
            r_weights: [0.1, 1.0],
            v_bounds: (0.0, 1.5),
            omega_bounds: (-1.0, 1.0),
            corridor: (0.5, 0.5),
            target_speed: 1.0,
            max_iterations: 30,
            penalty_rounds: 4,
            initial_penalty: 100.0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let fail = |m| Err(ControlError::InvalidConfig(m));
        if self.horizon == 0 || !(self.dt > 0.0) {
            return fail("horizon and dt must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail("alpha must lie in [0, 1]");
        }
        if self.q_weights.iter().chain(&self.r_weights).any(|w| !(*w > 0.0)) {
            return fail("weights must be positive");
        }
        if !(self.v_bounds.0 <= self.v_bounds.1) || !(self.omega_bounds.0 <= self.omega_bounds.1) {
            return fail("input bounds must be ordered");
        }
        if !(self.corridor.0 > 0.0) || !(self.corridor.1 > 0.0) {
            return fail("corridor widths must be positive");
        }
        if !(self.target_speed >= 0.0) || self.target_speed > self.v_bounds.1 {
            return fail("target speed must lie within the speed bounds");
        }
        if self.max_iterations == 0 || self.penalty_rounds == 0 || !(self.initial_penalty > 0.0) {
            return fail("solver settings must be positive");
        }
        Ok(())
    }

    pub fn clamp(&self, u: ControlCommand) -> ControlCommand {
        ControlCommand::new(
            u.v.clamp(self.v_bounds.0, self.v_bounds.1),
            u.omega.clamp(self.omega_bounds.0, self.omega_bounds.1),
        )
    }
}

/// Signed perpendicular distance from the pose to the line through the
/// directed segment `a -> b`; positive to the left.
pub fn signed_corridor_offset(pose: &Pose2, a: Vector2<f64>, b: Vector2<f64>) -> Result<f64, ControlError> {
    if (b - a).norm() == 0.0 {
        return Err(ControlError::DegenerateSegment);
    }
    Ok(signed_offset(pose.translation(), a, b))
}
