//! Planar rigid-body primitives.
//!
//! Poses are stored as `(x, y, theta)` with `theta` normalized to `(-pi, pi]`.
//! A pose `T` maps points from its own (body) frame into the parent frame:
//! `p_parent = R(theta) * p_body + t`. Twists are body-frame velocities
//! `(vx, vy, omega)` and double as tangent-space increments for [`exp`] and
//! [`log`].

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use thiserror::Error;

/// Duration of one radar rotation; the longest interval [`interpolate_pose`]
/// accepts on either side of a knot.
pub const SCAN_PERIOD: f64 = 0.25;

const SMALL_ANGLE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se2Error {
    #[error("log is undefined on the branch boundary theta = +/-pi")]
    BranchBoundary,
    #[error("interpolation interval {dt} s exceeds one scan period ({SCAN_PERIOD} s)")]
    IntervalOutOfRange { dt: f64 },
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut wrapped = theta - two_pi * ((theta + PI) / two_pi).floor();
    if wrapped <= -PI {
        wrapped += two_pi;
    }
    if wrapped > PI {
        wrapped -= two_pi;
    }
    wrapped
}

#[inline]
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Generator of planar rotations, `d R(theta) / d theta = R(theta) * SKEW`.
pub const SKEW: Matrix2<f64> = Matrix2::new(0.0, -1.0, 1.0, 0.0);

/// Coefficients `A = sin(phi)/phi` and `B = (1 - cos(phi))/phi` of the left
/// Jacobian `V(phi) = [[A, -B], [B, A]]`, with their derivatives in `phi`.
#[derive(Debug, Clone, Copy)]
struct JacobianCoeffs {
    a: f64,
    b: f64,
    da: f64,
    db: f64,
}

fn jacobian_coeffs(phi: f64) -> JacobianCoeffs {
    if phi.abs() < SMALL_ANGLE {
        let p2 = phi * phi;
        JacobianCoeffs {
            a: 1.0 - p2 / 6.0 + p2 * p2 / 120.0,
            b: phi / 2.0 - phi * p2 / 24.0 + phi * p2 * p2 / 720.0,
            da: -phi / 3.0 + phi * p2 / 30.0,
            db: 0.5 - p2 / 8.0 + p2 * p2 / 144.0,
        }
    } else {
        let (s, c) = phi.sin_cos();
        let half = (0.5 * phi).sin();
        let one_minus_cos = 2.0 * half * half;
        let p2 = phi * phi;
        JacobianCoeffs {
            a: s / phi,
            b: one_minus_cos / phi,
            da: (phi * c - s) / p2,
            db: (phi * s - one_minus_cos) / p2,
        }
    }
}

/// `V(phi)`: maps a tangent translation to the group translation.
pub fn left_jacobian(phi: f64) -> Matrix2<f64> {
    let k = jacobian_coeffs(phi);
    Matrix2::new(k.a, -k.b, k.b, k.a)
}

/// `dV/dphi`.
pub fn left_jacobian_derivative(phi: f64) -> Matrix2<f64> {
    let k = jacobian_coeffs(phi);
    Matrix2::new(k.da, -k.db, k.db, k.da)
}

/// `V(phi)^-1`.
pub fn left_jacobian_inverse(phi: f64) -> Matrix2<f64> {
    let k = jacobian_coeffs(phi);
    let det = k.a * k.a + k.b * k.b;
    Matrix2::new(k.a, k.b, -k.b, k.a) / det
}

/// `d V(phi)^-1 / d phi`.
pub fn left_jacobian_inverse_derivative(phi: f64) -> Matrix2<f64> {
    let k = jacobian_coeffs(phi);
    let det = k.a * k.a + k.b * k.b;
    let ddet = 2.0 * (k.a * k.da + k.b * k.db);
    let m = Matrix2::new(k.a, k.b, -k.b, k.a);
    let dm = Matrix2::new(k.da, k.db, -k.db, k.da);
    dm / det - m * (ddet / (det * det))
}

/// A rigid transform in the plane.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pose2({:.4}, {:.4}, {:.4} rad)", self.x, self.y, self.theta)
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn from_parts(translation: Vector2<f64>, theta: f64) -> Self {
        Self::new(translation.x, translation.y, theta)
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// `self * other`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.rotation() * other.translation() + self.translation();
        Pose2::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        Pose2::new(t.x, t.y, -self.theta)
    }

    /// `self^-1 * other`, the pose of `other` expressed in this frame.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn inverse_transform_point(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.rotation().transpose() * (p - self.translation())
    }

    pub fn distance_to(&self, other: &Pose2) -> f64 {
        (self.translation() - other.translation()).norm()
    }
}

/// Body-frame velocity, also used as a tangent increment.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Twist2 {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist2 {
    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.omega)
    }

    pub fn scaled(&self, s: f64) -> Twist2 {
        Twist2::new(self.vx * s, self.vy * s, self.omega * s)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

/// Symmetric 3x3 covariance over `(x, y, theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3(pub Matrix3<f64>);

impl Covariance3 {
    pub fn diagonal(sx: f64, sy: f64, stheta: f64) -> Self {
        Self(Matrix3::from_diagonal(&Vector3::new(sx, sy, stheta)))
    }

    /// Symmetrizes `m`; returns `None` when the result has an eigenvalue
    /// below `-1e-10`.
    pub fn from_matrix(m: Matrix3<f64>) -> Option<Self> {
        let sym = (m + m.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().min();
        (min_eig >= -1e-10).then_some(Self(sym))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn information(&self) -> Option<Matrix3<f64>> {
        self.0.try_inverse()
    }
}

/// Closed-form SE(2) exponential of a tangent increment.
pub fn exp(xi: &Twist2) -> Pose2 {
    let t = left_jacobian(xi.omega) * Vector2::new(xi.vx, xi.vy);
    Pose2::new(t.x, t.y, xi.omega)
}

/// SE(2) logarithm. Undefined at `theta = +/-pi`, where the rotation angle of
/// the tangent vector is ambiguous.
pub fn log(p: &Pose2) -> Result<Twist2, Se2Error> {
    if p.theta.abs() >= PI {
        return Err(Se2Error::BranchBoundary);
    }
    let rho = left_jacobian_inverse(p.theta) * p.translation();
    Ok(Twist2::new(rho.x, rho.y, p.theta))
}

/// Logarithm together with its Jacobian with respect to `(x, y, theta)` of
/// the argument.
pub fn log_with_jacobian(p: &Pose2) -> Result<(Twist2, Matrix3<f64>), Se2Error> {
    let xi = log(p)?;
    let vinv = left_jacobian_inverse(p.theta);
    let dvinv = left_jacobian_inverse_derivative(p.theta) * p.translation();
    #[rustfmt::skip]
    let jac = Matrix3::new(
        vinv[(0, 0)], vinv[(0, 1)], dvinv.x,
        vinv[(1, 0)], vinv[(1, 1)], dvinv.y,
        0.0,          0.0,          1.0,
    );
    Ok((xi, jac))
}

/// Pose reached by flowing `knot_pose` along the constant body twist for
/// `dt` seconds. `dt` may be negative but must lie within one scan period.
pub fn interpolate_pose(knot_pose: &Pose2, knot_twist: &Twist2, dt: f64) -> Result<Pose2, Se2Error> {
    if !(dt.abs() <= SCAN_PERIOD + 1e-9) {
        return Err(Se2Error::IntervalOutOfRange { dt });
    }
    Ok(flow(knot_pose, knot_twist, dt))
}

/// Unbounded constant-velocity flow; [`interpolate_pose`] without the range
/// check.
pub fn flow(pose: &Pose2, twist: &Twist2, dt: f64) -> Pose2 {
    pose.compose(&exp(&twist.scaled(dt)))
}

/// The rigid motion `exp(dt * twist)` applied to a body-frame point, and the
/// Jacobian of the result with respect to the twist.
pub fn flow_point_with_jacobian(
    twist: &Twist2,
    dt: f64,
    point: Vector2<f64>,
) -> (Vector2<f64>, nalgebra::Matrix2x3<f64>) {
    let phi = dt * twist.omega;
    let v = Vector2::new(twist.vx, twist.vy);
    let vmat = left_jacobian(phi);
    let dvmat = left_jacobian_derivative(phi);
    let rot = rotation(phi);
    let out = rot * point + vmat * v * dt;
    // d/d(vx, vy)
    let d_lin = vmat * dt;
    // d/d omega, through phi = dt * omega
    let d_omega = (rot * SKEW * point + dvmat * v * dt) * dt;
    let jac = nalgebra::Matrix2x3::new(
        d_lin[(0, 0)],
        d_lin[(0, 1)],
        d_omega.x,
        d_lin[(1, 0)],
        d_lin[(1, 1)],
        d_omega.y,
    );
    (out, jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// RK4 integration of the constant-body-twist ODE, used as an oracle.
    fn rk4_twist(twist: &Twist2, duration: f64, steps: usize) -> Pose2 {
        let f = |s: &Vector3<f64>| {
            let (sn, cs) = s.z.sin_cos();
            Vector3::new(
                cs * twist.vx - sn * twist.vy,
                sn * twist.vx + cs * twist.vy,
                twist.omega,
            )
        };
        let h = duration / steps as f64;
        let mut s = Vector3::zeros();
        for _ in 0..steps {
            let k1 = f(&s);
            let k2 = f(&(s + k1 * (h / 2.0)));
            let k3 = f(&(s + k2 * (h / 2.0)));
            let k4 = f(&(s + k3 * h));
            s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        Pose2::new(s.x, s.y, s.z)
    }

    #[test]
    fn exp_identity_and_translation() {
        assert_eq!(exp(&Twist2::zero()), Pose2::identity());
        let p = exp(&Twist2::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_quarter_turn_matches_ode() {
        let xi = Twist2::new(PI / 2.0, 0.0, PI / 2.0);
        let p = exp(&xi);
        let oracle = rk4_twist(&xi, 1.0, 2000);
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.x, oracle.x, epsilon = 1e-10);
        assert_abs_diff_eq!(p.y, oracle.y, epsilon = 1e-10);
        assert_abs_diff_eq!(p.theta, oracle.theta, epsilon = 1e-12);
    }

    #[test]
    fn log_inverts_the_quarter_turn() {
        let xi = log(&Pose2::new(1.0, 1.0, PI / 2.0)).unwrap();
        assert_abs_diff_eq!(xi.vx, PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xi.vy, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xi.omega, PI / 2.0, epsilon = 1e-12);
        assert_eq!(log(&Pose2::identity()).unwrap(), Twist2::zero());
    }

    #[test]
    fn log_rejects_branch_boundary() {
        assert_eq!(
            log(&Pose2::new(1.0, 0.0, PI)),
            Err(Se2Error::BranchBoundary)
        );
    }

    #[test]
    fn normalize_maps_into_half_open_interval() {
        assert_eq!(normalize_angle(-PI), PI);
        assert_eq!(normalize_angle(PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(-0.5 - 4.0 * PI), -0.5, epsilon = 1e-12);
        assert!(normalize_angle(-3.0 * PI) > 0.0);
    }

    #[test]
    fn transform_point_quarter_turn() {
        let p = Pose2::new(0.0, 0.0, PI / 2.0).transform_point(Vector2::new(1.0, 0.0));
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn interpolate_examples() {
        let knot = Pose2::new(2.0, -1.0, 0.3);
        assert_eq!(interpolate_pose(&knot, &Twist2::new(1.0, 0.0, 0.0), 0.0).unwrap(), knot);

        let straight = interpolate_pose(&Pose2::identity(), &Twist2::new(1.0, 0.0, 0.0), 0.25).unwrap();
        assert_abs_diff_eq!(straight.x, 0.25, epsilon = 1e-15);

        let twist = Twist2::new(1.0, 0.0, 0.4);
        let p = interpolate_pose(&Pose2::identity(), &twist, 0.1).unwrap();
        let oracle = rk4_twist(&twist, 0.1, 200);
        assert_abs_diff_eq!(p.x, oracle.x, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, oracle.y, epsilon = 1e-9);
        assert_abs_diff_eq!(p.theta, oracle.theta, epsilon = 1e-9);

        assert!(matches!(
            interpolate_pose(&knot, &twist, 0.3),
            Err(Se2Error::IntervalOutOfRange { .. })
        ));
    }

    fn finite_difference<F: Fn(&Vector3<f64>) -> Vector3<f64>>(f: F, at: Vector3<f64>) -> Matrix3<f64> {
        let h = 1e-6;
        let mut jac = Matrix3::zeros();
        for i in 0..3 {
            let mut plus = at;
            let mut minus = at;
            plus[i] += h;
            minus[i] -= h;
            jac.set_column(i, &((f(&plus) - f(&minus)) / (2.0 * h)));
        }
        jac
    }

    #[test]
    fn log_jacobian_matches_finite_differences() {
        for &(x, y, th) in &[(0.3, -0.2, 0.7), (1.5, 2.0, -2.5), (0.1, 0.1, 1e-8)] {
            let (_, jac) = log_with_jacobian(&Pose2::new(x, y, th)).unwrap();
            let fd = finite_difference(
                |v| log(&Pose2::new(v.x, v.y, v.z)).unwrap().as_vector(),
                Vector3::new(x, y, th),
            );
            assert!((jac - fd).abs().max() < 1e-7, "{jac} vs {fd}");
        }
    }

    #[test]
    fn flow_point_jacobian_matches_finite_differences() {
        let point = Vector2::new(4.0, -2.5);
        for &(vx, vy, w, dt) in &[(1.0, 0.1, 0.4, 0.1), (0.5, 0.0, 1e-9, -0.12), (2.0, -0.3, -1.2, 0.2)] {
            let (_, jac) = flow_point_with_jacobian(&Twist2::new(vx, vy, w), dt, point);
            let h = 1e-6;
            for i in 0..3 {
                let mut plus = Vector3::new(vx, vy, w);
                let mut minus = plus;
                plus[i] += h;
                minus[i] -= h;
                let fp = flow_point_with_jacobian(&Twist2::from_vector(&plus), dt, point).0;
                let fm = flow_point_with_jacobian(&Twist2::from_vector(&minus), dt, point).0;
                let col = (fp - fm) / (2.0 * h);
                assert!((jac.column(i) - col).abs().max() < 1e-7);
            }
        }
    }
}
