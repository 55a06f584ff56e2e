//! Error terms and their analytic Jacobians.
//!
//! Odometry Jacobians are taken with respect to `(x, y, theta, vx, vy, omega)`
//! of the knot being solved; localization Jacobians with respect to
//! `(x, y, theta)`.

use nalgebra::{Matrix2x3, Matrix3, Matrix6, SMatrix, Vector2, Vector3, Vector6};

use super::{EstimationError, StateKnot};
use crate::se2::{flow, flow_point_with_jacobian, log_with_jacobian, normalize_angle, Pose2, Twist2, SKEW};

pub type Matrix2x6 = SMatrix<f64, 2, 6>;

fn log_error(p: &Pose2) -> Result<(Vector3<f64>, Matrix3<f64>), EstimationError> {
    log_with_jacobian(p)
        .map(|(xi, j)| (xi.as_vector(), j))
        .map_err(|_| EstimationError::Numerical("pose error on the log branch boundary"))
}

/// `map_point - T(t_j) * body_point`, where `T(t_j)` flows the knot
/// `(pose, twist)` by `tau = t_j - t_knot`.
pub fn odometry_point(
    pose: &Pose2,
    twist: &Twist2,
    tau: f64,
    body_point: Vector2<f64>,
    map_point: Vector2<f64>,
) -> (Vector2<f64>, Matrix2x6) {
    let (u, du) = flow_point_with_jacobian(twist, tau, body_point);
    let rot = pose.rotation();
    let e = map_point - (rot * u + pose.translation());
    let mut jac = Matrix2x6::zeros();
    jac.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-nalgebra::Matrix2::identity()));
    jac.fixed_view_mut::<2, 1>(0, 2).copy_from(&(-(rot * SKEW * u)));
    jac.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-(rot * du)));
    (e, jac)
}

/// Constant-velocity prior: `[log(predicted^-1 * pose); twist - prev.twist]`
/// with the prediction flowed from `prev` over `dt`.
pub fn motion_prior(
    prev: &StateKnot,
    dt: f64,
    pose: &Pose2,
    twist: &Twist2,
) -> Result<(Vector6<f64>, Matrix6<f64>), EstimationError> {
    let pred = flow(&prev.pose, &prev.twist, dt);
    let (xi, jlog) = log_error(&pred.between(pose))?;
    let mut d = Matrix3::identity();
    d.fixed_view_mut::<2, 2>(0, 0).copy_from(&pred.rotation().transpose());
    let mut e = Vector6::zeros();
    e.fixed_rows_mut::<3>(0).copy_from(&xi);
    e.fixed_rows_mut::<3>(3).copy_from(&(twist.as_vector() - prev.twist.as_vector()));
    let mut jac = Matrix6::zeros();
    jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&(jlog * d));
    jac.fixed_view_mut::<3, 3>(3, 3).copy_from(&Matrix3::identity());
    Ok((e, jac))
}

/// Knot heading change minus the integrated gyro yaw, wrapped. The Jacobian
/// is 1 with respect to the knot heading and 0 elsewhere.
pub fn yaw_error(prev_theta: f64, delta_theta: f64, theta: f64) -> f64 {
    normalize_angle(theta - prev_theta - delta_theta)
}

/// `map_point - pose * body_point`.
pub fn localization_point(pose: &Pose2, body_point: Vector2<f64>, map_point: Vector2<f64>) -> (Vector2<f64>, Matrix2x3<f64>) {
    let rot = pose.rotation();
    let e = map_point - pose.transform_point(body_point);
    let d_theta = -(rot * SKEW * body_point);
    let jac = Matrix2x3::new(-1.0, 0.0, d_theta.x, 0.0, -1.0, d_theta.y);
    (e, jac)
}

/// `log(prior^-1 * pose)`.
pub fn pose_prior(prior: &Pose2, pose: &Pose2) -> Result<(Vector3<f64>, Matrix3<f64>), EstimationError> {
    let (xi, jlog) = log_error(&prior.between(pose))?;
    let mut d = Matrix3::identity();
    d.fixed_view_mut::<2, 2>(0, 0).copy_from(&prior.rotation().transpose());
    Ok((xi, jlog * d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn perturb(x: &Vector6<f64>, i: usize, h: f64) -> (Pose2, Twist2) {
        let mut y = *x;
        y[i] += h;
        (
            Pose2 {
                x: y[0],
                y: y[1],
                theta: y[2],
            },
            Twist2::new(y[3], y[4], y[5]),
        )
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn odometry_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = Vector6::from_fn(|i, _| match i {
                2 => rng.gen_range(-3.0..3.0),
                5 => rng.gen_range(-1.0..1.0),
                _ => rng.gen_range(-2.0..2.0),
            });
            let tau = rng.gen_range(-0.125..0.125);
            let s = Vector2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let m = Vector2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let (p, t) = perturb(&x, 0, 0.0);
            let (_, jac) = odometry_point(&p, &t, tau, s, m);
            let prev = StateKnot::new(0.0, Pose2::new(x[0] - 0.2, x[1] + 0.1, x[2] - 0.05), Twist2::new(1.0, 0.0, 0.2));
            let (_, jp) = motion_prior(&prev, 0.25, &p, &t).unwrap();
            for i in 0..6 {
                let h = 1e-6;
                let (pp, tp) = perturb(&x, i, h);
                let (pm, tm) = perturb(&x, i, -h);
                let fd = (odometry_point(&pp, &tp, tau, s, m).0 - odometry_point(&pm, &tm, tau, s, m).0) / (2.0 * h);
                for r in 0..2 {
                    assert!(rel_err(jac[(r, i)], fd[r]) < 1e-4, "point d{r}/d{i}: {} vs {}", jac[(r, i)], fd[r]);
                }
                let fd = (motion_prior(&prev, 0.25, &pp, &tp).unwrap().0 - motion_prior(&prev, 0.25, &pm, &tm).unwrap().0)
                    / (2.0 * h);
                for r in 0..6 {
                    assert!(rel_err(jp[(r, i)], fd[r]) < 1e-4, "prior d{r}/d{i}: {} vs {}", jp[(r, i)], fd[r]);
                }
            }
        }
    }

    #[test]
    fn localization_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let x = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-3.0..3.0));
            let prior = Pose2::new(x[0] + 0.3, x[1] - 0.2, x[2] + 0.1);
            let s = Vector2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let m = Vector2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let pose = |v: Vector3<f64>| Pose2 {
                x: v[0],
                y: v[1],
                theta: v[2],
            };
            let (_, jl) = localization_point(&pose(x), s, m);
            let (_, jp) = pose_prior(&prior, &pose(x)).unwrap();
            for i in 0..3 {
                let mut d = Vector3::zeros();
                d[i] = 1e-6;
                let fd = (localization_point(&pose(x + d), s, m).0 - localization_point(&pose(x - d), s, m).0) / 2e-6;
                for r in 0..2 {
                    assert!(rel_err(jl[(r, i)], fd[r]) < 1e-4);
                }
                let fd = (pose_prior(&prior, &pose(x + d)).unwrap().0 - pose_prior(&prior, &pose(x - d)).unwrap().0) / 2e-6;
                for r in 0..3 {
                    assert!(rel_err(jp[(r, i)], fd[r]) < 1e-4);
                }
            }
            let h = 1e-6;
            let fd = (yaw_error(0.1, 0.2, x[2] + h) - yaw_error(0.1, 0.2, x[2] - h)) / (2.0 * h);
            assert!((fd - 1.0).abs() < 1e-4);
        }
    }
}
