//! Radar odometry, gyro fusion and localization.
//!
//! All solvers are Gauss-Newton over a small state: the pose and body twist
//! of one knot per scan for odometry, and a single pose for localization.
//! Poses are perturbed additively in `(x, y, theta)`.

mod association;
mod gyro_update;
mod localization;
mod odometry;
mod preintegration;
pub mod residuals;
mod trace;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se2::{Covariance3, Pose2, Twist2};

pub use association::{associate, associate_brute_force, Correspondence, NeighborIndex};
pub use gyro_update::{fuse_yaw_rate, gyro_rate_update};
pub use localization::{localize, LocalizationResult};
pub use odometry::{deskew, odometry_step, OdometryResult, SlidingMap};
pub use preintegration::{preintegrate_yaw, PreintegratedYaw};
pub use trace::{write_trace_csv, StepDiagnostics};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("only {found} correspondences (need at least {required})")]
    InsufficientCorrespondences { found: usize, required: usize },
    #[error("cost increased on {0} consecutive outer iterations")]
    Diverged(usize),
    #[error("association target is empty")]
    EmptyTarget,
    #[error("gyro measurements do not cover [{t_a}, {t_b}]")]
    GyroCoverage { t_a: f64, t_b: f64 },
    #[error("preintegration interval is empty or reversed: [{t_a}, {t_b}]")]
    DegenerateInterval { t_a: f64, t_b: f64 },
    #[error("measurement at {measurement} s is not after the knot at {knot} s")]
    NonMonotonicTimestamp { knot: f64, measurement: f64 },
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
}

/// Minimum number of point pairs for an ICP solve to be trusted.
pub const MIN_CORRESPONDENCES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateKnot {
    pub timestamp: f64,
    pub pose: Pose2,
    pub twist: Twist2,
}

impl StateKnot {
    pub fn new(timestamp: f64, pose: Pose2, twist: Twist2) -> Self {
        Self { timestamp, pose, twist }
    }

    pub fn is_finite(&self) -> bool {
        self.timestamp.is_finite() && self.pose.is_finite() && self.twist.is_finite()
    }
}

/// Noise model. `qc_diag` is the power spectral density of the white-noise
/// acceleration driving the constant-velocity prior, per body axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub qc_diag: [f64; 3],
    /// Isotropic point-to-point variance, m^2.
    pub r_point: f64,
    /// Gyro white-noise variance, (rad/s)^2.
    pub r_yaw_rate: f64,
    /// Localization pose-prior covariance diagonal `(x, y, theta)`.
    pub q_pose: [f64; 3],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            qc_diag: [0.02, 0.005, 0.0005],
            r_point: 0.01,
            r_yaw_rate: 1e-4,
            q_pose: [0.04, 0.04, 0.0025],
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        let all = self.qc_diag.iter().chain(&self.q_pose).chain([&self.r_point, &self.r_yaw_rate]);
        for v in all {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(EstimationError::InvalidConfig("noise parameters must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn pose_prior_covariance(&self) -> Covariance3 {
        Covariance3::diagonal(self.q_pose[0], self.q_pose[1], self.q_pose[2])
    }

    /// Covariance of the constant-velocity prior over `dt`, ordered
    /// `(pose, twist)`.
    pub fn prior_covariance(&self, dt: f64) -> nalgebra::Matrix6<f64> {
        let qc = Matrix3::from_diagonal(&Vector3::from(self.qc_diag));
        let mut q = nalgebra::Matrix6::zeros();
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(&(qc * (dt.powi(3) / 3.0)));
        q.fixed_view_mut::<3, 3>(0, 3).copy_from(&(qc * (dt * dt / 2.0)));
        q.fixed_view_mut::<3, 3>(3, 0).copy_from(&(qc * (dt * dt / 2.0)));
        q.fixed_view_mut::<3, 3>(3, 3).copy_from(&(qc * dt));
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussNewtonSettings {
    pub max_outer_icp_iters: usize,
    pub max_inner_gn_iters: usize,
    pub cost_rel_tol: f64,
    pub correspondence_max_dist: f64,
    pub huber_delta: f64,
}

impl Default for GaussNewtonSettings {
    fn default() -> Self {
        Self {
            max_outer_icp_iters: 20,
            max_inner_gn_iters: 10,
            cost_rel_tol: 1e-6,
            correspondence_max_dist: 1.0,
            huber_delta: 0.35,
        }
    }
}

impl GaussNewtonSettings {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.max_outer_icp_iters == 0
            || self.max_inner_gn_iters == 0
            || !(self.cost_rel_tol > 0.0)
            || !(self.correspondence_max_dist > 0.0)
            || !(self.huber_delta > 0.0)
        {
            return Err(EstimationError::InvalidConfig("solver settings must be positive"));
        }
        Ok(())
    }
}

/// Huber loss and its IRLS weight for a residual of norm `r`.
pub(crate) fn huber(r: f64, delta: f64) -> (f64, f64) {
    if r <= delta {
        (0.5 * r * r, 1.0)
    } else {
        (delta * (r - 0.5 * delta), delta / r)
    }
}

/// Solves `h * dx = -g` for a symmetric positive (semi-)definite `h`.
pub(crate) fn solve_normal_equations(h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>, EstimationError> {
    let rhs = -g;
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    h.lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or(EstimationError::Numerical("singular normal equations"))
}
