use super::{ControlCommand, ControlError, MpcConfig};
use crate::se2::Pose2;

/// One RK4 step of `x' = v cos(theta)`, `y' = v sin(theta)`,
/// `theta' = omega_eff` with inputs held constant over `dt`.
pub fn rk4_step(pose: &Pose2, v: f64, omega_eff: f64, dt: f64) -> Pose2 {
    let f = |theta: f64| (v * theta.cos(), v * theta.sin());
    let th = pose.theta;
    let k1 = f(th);
    let k2 = f(th + 0.5 * dt * omega_eff);
    let k3 = k2;
    let k4 = f(th + dt * omega_eff);
    Pose2::new(
        pose.x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        pose.y + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        th + dt * omega_eff,
    )
}

/// Predicted poses after each of the `K` inputs. The realized yaw rate of
/// step `k` blends the current and previous commands:
/// `(1 - alpha) * omega_k + alpha * omega_{k-1}`, with `u_prev` before the
/// first step.
pub fn rollout(
    initial: &Pose2,
    u_prev: &ControlCommand,
    u_seq: &[ControlCommand],
    cfg: &MpcConfig,
) -> Result<Vec<Pose2>, ControlError> {
    if u_seq.len() != cfg.horizon {
        return Err(ControlError::HorizonMismatch {
            expected: cfg.horizon,
            got: u_seq.len(),
        });
    }
    Ok(rollout_unchecked(initial, u_prev, u_seq, cfg))
}

pub(super) fn rollout_unchecked(initial: &Pose2, u_prev: &ControlCommand, u_seq: &[ControlCommand], cfg: &MpcConfig) -> Vec<Pose2> {
    let mut pose = *initial;
    let mut last_omega = u_prev.omega;
    u_seq
        .iter()
        .map(|u| {
            let omega_eff = (1.0 - cfg.alpha) * u.omega + cfg.alpha * last_omega;
            pose = rk4_step(&pose, u.v, omega_eff, cfg.dt);
            last_omega = u.omega;
            pose
        })
        .collect()
}
