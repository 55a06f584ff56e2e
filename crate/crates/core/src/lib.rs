//! Radar teach-and-repeat navigation in the plane: detection, odometry,
//! submap pose graph, localization, corridor MPC and a deterministic
//! simulator to exercise them end to end.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod geometry;
pub mod se2;
pub mod sim;
pub mod estimation;
pub mod voxel;
pub mod posegraph;
pub mod control;
pub mod metrics;
pub mod harness;
