use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::model::rollout_unchecked;
use super::{ControlCommand, MpcConfig, ReferenceWindow};
use crate::geometry::signed_offset;
use crate::se2::{log, normalize_angle, Pose2};

const FD_STEP: f64 = 1e-6;
const FEASIBILITY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MpcStatus {
    Ok,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub command: ControlCommand,
    pub inputs: Vec<ControlCommand>,
    pub predicted: Vec<Pose2>,
    pub status: MpcStatus,
    pub iterations: usize,
    /// Tracking plus input cost, without the corridor penalty.
    pub cost: f64,
    /// Largest corridor excess over the current and predicted poses.
    pub max_violation: f64,
    /// Offset of the current pose from the path.
    pub corridor_offset: f64,
}

fn corridor_excess(offset: f64, cfg: &MpcConfig) -> f64 {
    (offset - cfg.corridor.0).max(0.0) - (-offset - cfg.corridor.1).max(0.0)
}

struct Problem<'a> {
    start: Pose2,
    u_prev: ControlCommand,
    refs: &'a ReferenceWindow,
    cfg: &'a MpcConfig,
    sqrt_q: [f64; 3],
    sqrt_r: [f64; 2],
}

impl Problem<'_> {
    fn inputs(&self, u: &DVector<f64>) -> Vec<ControlCommand> {
        (0..self.cfg.horizon).map(|k| ControlCommand::new(u[2 * k], u[2 * k + 1])).collect()
    }

    fn predict(&self, u: &DVector<f64>) -> Vec<Pose2> {
        rollout_unchecked(&self.start, &self.u_prev, &self.inputs(u), self.cfg)
    }

    fn pose_error(reference: &Pose2, pose: &Pose2) -> [f64; 3] {
        let rel = reference.between(pose);
        match log(&rel) {
            Ok(xi) => [xi.vx, xi.vy, xi.omega],
            // Exactly reversed heading: fall back to the raw components.
            Err(_) => [rel.x, rel.y, normalize_angle(rel.theta)],
        }
    }

    /// Residuals: weighted pose errors, weighted inputs, then the scaled
    /// corridor excess per step.
    fn residuals(&self, u: &DVector<f64>, penalty: f64) -> DVector<f64> {
        let k_max = self.cfg.horizon;
        let mut r = DVector::zeros(6 * k_max);
        let sqrt_mu = penalty.sqrt();
        for (k, pose) in self.predict(u).iter().enumerate() {
            let e = Self::pose_error(&self.refs.poses[k], pose);
            for i in 0..3 {
                r[3 * k + i] = self.sqrt_q[i] * e[i];
            }
            r[3 * k_max + 2 * k] = self.sqrt_r[0] * u[2 * k];
            r[3 * k_max + 2 * k + 1] = self.sqrt_r[1] * u[2 * k + 1];
            let (a, b) = self.refs.segments[k];
            r[5 * k_max + k] = sqrt_mu * corridor_excess(signed_offset(pose.translation(), a, b), self.cfg);
        }
        r
    }

    fn jacobian(&self, u: &DVector<f64>, penalty: f64) -> DMatrix<f64> {
        let n = u.len();
        let mut jac = DMatrix::zeros(6 * self.cfg.horizon, n);
        for j in 0..n {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += FD_STEP;
            um[j] -= FD_STEP;
            let col = (self.residuals(&up, penalty) - self.residuals(&um, penalty)) / (2.0 * FD_STEP);
            jac.set_column(j, &col);
        }
        jac
    }

    fn bounds(&self, j: usize) -> (f64, f64) {
        if j.is_multiple_of(2) {
            self.cfg.v_bounds
        } else {
            self.cfg.omega_bounds
        }
    }

    fn project(&self, u: &mut DVector<f64>) {
        for j in 0..u.len() {
            let (lo, hi) = self.bounds(j);
            u[j] = u[j].clamp(lo, hi);
        }
    }

    /// Projected Gauss-Newton with an active set for inputs held at a bound.
    fn minimize(&self, u: &mut DVector<f64>, penalty: f64) -> usize {
        let cost_of = |u: &DVector<f64>| 0.5 * self.residuals(u, penalty).norm_squared();
        let mut cost = cost_of(u);
        let mut iterations = 0;
        for _ in 0..self.cfg.max_iterations {
            iterations += 1;
            let r = self.residuals(u, penalty);
            let jac = self.jacobian(u, penalty);
            let grad = jac.transpose() * &r;
            let free: Vec<usize> = (0..u.len())
                .filter(|&j| {
                    let (lo, hi) = self.bounds(j);
                    !((u[j] <= lo && grad[j] > 0.0) || (u[j] >= hi && grad[j] < 0.0))
                })
                .collect();
            if free.is_empty() {
                break;
            }
            let jf = jac.select_columns(free.iter());
            let mut h = jf.transpose() * &jf;
            for i in 0..free.len() {
                h[(i, i)] += 1e-9 * (1.0 + h[(i, i)]);
            }
            let gf = jf.transpose() * &r;
            let Some(step) = h.cholesky().map(|c| c.solve(&(-gf))) else {
                break;
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let mut cand = u.clone();
                for (i, &j) in free.iter().enumerate() {
                    cand[j] += alpha * step[i];
                }
                self.project(&mut cand);
                let c = cost_of(&cand);
                if c < cost {
                    let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    let moved = (&cand - &*u).amax();
                    *u = cand;
                    cost = c;
                    accepted = rel > 1e-12 && moved > 1e-12;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        iterations
    }

    fn initial_guess(&self) -> DVector<f64> {
        let mut u = DVector::zeros(2 * self.cfg.horizon);
        let mut prev = self.start;
        for (k, r) in self.refs.poses.iter().enumerate() {
            u[2 * k] = (r.translation() - prev.translation()).norm() / self.cfg.dt;
            u[2 * k + 1] = normalize_angle(r.theta - prev.theta) / self.cfg.dt;
            prev = *r;
        }
        self.project(&mut u);
        u
    }
}

/// Solves the tracking problem by single shooting over the `K` input pairs.
///
/// The corridor enters as a quadratic penalty that grows tenfold per round;
/// after the last round the rollout (and the current pose) must lie inside
/// the corridor to within 1 mm, otherwise the status is `Infeasible`.
pub fn solve_mpc(localized: &Pose2, u_prev: &ControlCommand, refs: &ReferenceWindow, cfg: &MpcConfig) -> MpcSolution {
    assert_eq!(refs.poses.len(), cfg.horizon, "reference window must match the horizon");
    let problem = Problem {
        start: *localized,
        u_prev: *u_prev,
        refs,
        cfg,
        sqrt_q: cfg.q_weights.map(f64::sqrt),
        sqrt_r: cfg.r_weights.map(f64::sqrt),
    };
    let mut u = problem.initial_guess();
    let mut penalty = cfg.initial_penalty;
    let mut iterations = 0;
    let violation = |u: &DVector<f64>| {
        problem
            .predict(u)
            .iter()
            .zip(&refs.segments)
            .map(|(p, &(a, b))| corridor_excess(signed_offset(p.translation(), a, b), cfg).abs())
            .fold(0.0, f64::max)
    };
    for _ in 0..cfg.penalty_rounds {
        iterations += problem.minimize(&mut u, penalty);
        if violation(&u) == 0.0 {
            break;
        }
        penalty *= 10.0;
    }
    let (a, b): (Vector2<f64>, Vector2<f64>) = refs.start_segment;
    let corridor_offset = signed_offset(localized.translation(), a, b);
    let max_violation = violation(&u).max(corridor_excess(corridor_offset, cfg).abs());
    let inputs = problem.inputs(&u);
    let tracking = 0.5 * problem.residuals(&u, 0.0).norm_squared();
    MpcSolution {
        command: inputs[0],
        predicted: problem.predict(&u),
        inputs,
        status: if max_violation > FEASIBILITY_TOL {
            MpcStatus::Infeasible
        } else {
            MpcStatus::Ok
        },
        iterations,
        cost: tracking,
        max_violation,
        corridor_offset,
    }
}
