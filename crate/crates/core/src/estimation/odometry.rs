use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix6, Vector2, Vector6};

use super::residuals::{motion_prior, odometry_point, yaw_error};
use super::{
    associate, huber, solve_normal_equations, EstimationError, GaussNewtonSettings, NeighborIndex, NoiseConfig,
    PreintegratedYaw, StateKnot, MIN_CORRESPONDENCES,
};
use crate::detection::RadarPointCloud;
use crate::se2::{flow_point_with_jacobian, normalize_angle, Pose2, Twist2};
use crate::voxel::{thin, voxel_downsample};

/// Recent scans merged in the odometry frame.
#[derive(Debug, Clone)]
pub struct SlidingMap {
    window: usize,
    voxel: f64,
    keyframes: VecDeque<Vec<Vector2<f64>>>,
    points: Vec<Vector2<f64>>,
}

impl SlidingMap {
    pub fn new(window: usize, voxel: f64) -> Self {
        assert!(window > 0 && voxel > 0.0, "window and voxel size must be positive");
        Self {
            window,
            voxel,
            keyframes: VecDeque::new(),
            points: Vec::new(),
        }
    }

    /// Adds a keyframe (points already in the odometry frame), evicting the
    /// oldest beyond the window, and rebuilds the merged set.
    pub fn insert(&mut self, points: Vec<Vector2<f64>>) {
        self.keyframes.push_back(points);
        while self.keyframes.len() > self.window {
            self.keyframes.pop_front();
        }
        let all: Vec<Vector2<f64>> = self.keyframes.iter().flatten().copied().collect();
        self.points = thin(&voxel_downsample(&all, self.voxel), 0.5 * self.voxel);
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn voxel(&self) -> f64 {
        self.voxel
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryResult {
    pub knot: StateKnot,
    /// `prev.pose^-1 * knot.pose`.
    pub relative: Pose2,
    pub cost: f64,
    pub iterations: usize,
    pub correspondences: usize,
}

/// Cloud points in the robot frame at the knot time, undoing motion during
/// the sweep with the knot twist.
pub fn deskew(cloud: &RadarPointCloud, extrinsic: &Pose2, knot: &StateKnot) -> Vec<Vector2<f64>> {
    cloud
        .points
        .iter()
        .map(|p| {
            let body = extrinsic.transform_point(Vector2::new(p.x, p.y));
            flow_point_with_jacobian(&knot.twist, p.timestamp - knot.timestamp, body).0
        })
        .collect()
}

struct OdometryProblem<'a> {
    body: Vec<(Vector2<f64>, f64)>,
    prev: &'a StateKnot,
    dt: f64,
    prior_info: Matrix6<f64>,
    yaw: Option<(f64, f64)>,
    point_info: f64,
    huber_delta: f64,
}

#[derive(Clone, Copy)]
struct State {
    pose: Pose2,
    twist: Twist2,
}

impl State {
    fn retract(&self, dx: &DVector<f64>, scale: f64) -> Self {
        Self {
            pose: Pose2::new(
                self.pose.x + scale * dx[0],
                self.pose.y + scale * dx[1],
                self.pose.theta + scale * dx[2],
            ),
            twist: Twist2::new(
                self.twist.vx + scale * dx[3],
                self.twist.vy + scale * dx[4],
                self.twist.omega + scale * dx[5],
            ),
        }
    }
}

impl OdometryProblem<'_> {
    fn world_points(&self, s: &State) -> Vec<Vector2<f64>> {
        self.body
            .iter()
            .map(|&(b, tau)| s.pose.transform_point(flow_point_with_jacobian(&s.twist, tau, b).0))
            .collect()
    }

    /// Cost, and optionally the IRLS normal equations, at `s`.
    fn evaluate(
        &self,
        s: &State,
        pairs: &[(usize, Vector2<f64>)],
        linearize: bool,
    ) -> Result<(f64, Matrix6<f64>, Vector6<f64>), EstimationError> {
        let mut cost = 0.0;
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for &(qi, m) in pairs {
            let (b, tau) = self.body[qi];
            let (e, j) = odometry_point(&s.pose, &s.twist, tau, b, m);
            let (rho, w) = huber(e.norm(), self.huber_delta);
            cost += rho * self.point_info;
            if linearize {
                let wj = w * self.point_info;
                h += j.transpose() * j * wj;
                g += j.transpose() * e * wj;
            }
        }
        let (e, j) = motion_prior(self.prev, self.dt, &s.pose, &s.twist)?;
        cost += 0.5 * (e.transpose() * self.prior_info * e)[0];
        if linearize {
            h += j.transpose() * self.prior_info * j;
            g += j.transpose() * self.prior_info * e;
        }
        if let Some((delta, info)) = self.yaw {
            let e = yaw_error(self.prev.pose.theta, delta, s.pose.theta);
            cost += 0.5 * info * e * e;
            if linearize {
                h[(2, 2)] += info;
                g[2] += info * e;
            }
        }
        Ok((cost, h, g))
    }

    /// Damped Gauss-Newton on fixed pairs; returns the final cost and the
    /// number of accepted steps.
    fn solve_inner(
        &self,
        state: &mut State,
        pairs: &[(usize, Vector2<f64>)],
        settings: &GaussNewtonSettings,
    ) -> Result<(f64, usize), EstimationError> {
        let (mut cost, mut h, mut g) = self.evaluate(state, pairs, true)?;
        let mut steps = 0;
        for _ in 0..settings.max_inner_gn_iters {
            let dx = solve_normal_equations(
                DMatrix::from_column_slice(6, 6, h.as_slice()),
                &DVector::from_column_slice(g.as_slice()),
            )?;
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..10 {
                let cand = state.retract(&dx, scale);
                let (c, _, _) = self.evaluate(&cand, pairs, false)?;
                if c <= cost {
                    accepted = Some((cand, c));
                    break;
                }
                scale *= 0.5;
            }
            let Some((cand, c)) = accepted else { break };
            let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
            *state = cand;
            steps += 1;
            (cost, h, g) = self.evaluate(state, pairs, true)?;
            if rel < settings.cost_rel_tol {
                break;
            }
        }
        Ok((cost, steps))
    }
}

/// One radar odometry update: aligns `cloud` to the sliding map while
/// estimating the pose and twist of a new knot at `knot_time`.
///
/// The cost combines Huber-weighted point-to-point terms evaluated at each
/// point's own timestamp, a constant-velocity prior from `prev`, and (when
/// given) the gyro yaw increment between the two knots.
#[allow(clippy::too_many_arguments)]
pub fn odometry_step(
    cloud: &RadarPointCloud,
    map: &SlidingMap,
    prev: &StateKnot,
    yaw: Option<&PreintegratedYaw>,
    extrinsic: &Pose2,
    knot_time: f64,
    cfg: &NoiseConfig,
    settings: &GaussNewtonSettings,
) -> Result<OdometryResult, EstimationError> {
    let dt = knot_time - prev.timestamp;
    if !(dt > 0.0) {
        return Err(EstimationError::NonMonotonicTimestamp {
            knot: prev.timestamp,
            measurement: knot_time,
        });
    }
    if map.len() < MIN_CORRESPONDENCES || cloud.is_empty() {
        return Err(EstimationError::InsufficientCorrespondences {
            found: map.len().min(cloud.len()),
            required: MIN_CORRESPONDENCES,
        });
    }
    let prior_info = cfg
        .prior_covariance(dt)
        .try_inverse()
        .ok_or(EstimationError::Numerical("singular motion prior"))?;
    let problem = OdometryProblem {
        body: cloud
            .points
            .iter()
            .map(|p| (extrinsic.transform_point(Vector2::new(p.x, p.y)), p.timestamp - knot_time))
            .collect(),
        prev,
        dt,
        prior_info,
        yaw: yaw.map(|y| (y.delta_theta, 1.0 / y.variance)),
        point_info: 1.0 / cfg.r_point,
        huber_delta: settings.huber_delta,
    };
    let index = NeighborIndex::new(map.points().to_vec(), settings.correspondence_max_dist)?;

    let mut pose = crate::se2::flow(&prev.pose, &prev.twist, dt);
    let mut twist = prev.twist;
    if let Some(y) = yaw {
        pose.theta = normalize_angle(prev.pose.theta + y.delta_theta);
        twist.omega = y.delta_theta / dt;
    }
    let mut state = State { pose, twist };

    let gate_cost = huber(settings.correspondence_max_dist, settings.huber_delta).0 * problem.point_info;
    let mut prev_cost = f64::INFINITY;
    let mut prev_gated = f64::INFINITY;
    let mut prev_pairs: Vec<(usize, usize)> = Vec::new();
    let mut rising = 0;
    let mut iterations = 0;
    let mut cost = f64::INFINITY;
    let mut n_pairs = 0;
    for _ in 0..settings.max_outer_icp_iters {
        let query = problem.world_points(&state);
        let corr = associate(&query, &index);
        if corr.len() < MIN_CORRESPONDENCES {
            return Err(EstimationError::InsufficientCorrespondences {
                found: corr.len(),
                required: MIN_CORRESPONDENCES,
            });
        }
        let ids: Vec<(usize, usize)> = corr.iter().map(|c| (c.query, c.target)).collect();
        let pairs: Vec<(usize, Vector2<f64>)> = corr.iter().map(|c| (c.query, index.points()[c.target])).collect();
        let (c, steps) = problem.solve_inner(&mut state, &pairs, settings)?;
        iterations += steps.max(1);
        n_pairs = pairs.len();
        cost = c;
        // Unmatched points are charged the gate cost so that re-association
        // alone never raises the objective.
        let gated = c + (problem.body.len() - n_pairs) as f64 * gate_cost;
        if gated > prev_gated * (1.0 + 1e-9) {
            rising += 1;
            if rising >= 3 {
                return Err(EstimationError::Diverged(rising));
            }
        } else {
            rising = 0;
        }
        let rel = (prev_cost - c).abs() / c.max(f64::MIN_POSITIVE);
        let same_pairs = ids == prev_pairs;
        prev_cost = c;
        prev_gated = gated;
        prev_pairs = ids;
        if same_pairs && (rel < settings.cost_rel_tol || steps == 0) {
            break;
        }
    }
    if !state.pose.is_finite() || !state.twist.is_finite() {
        return Err(EstimationError::Numerical("non-finite odometry state"));
    }
    let knot = StateKnot::new(knot_time, state.pose, state.twist);
    Ok(OdometryResult {
        relative: prev.pose.between(&knot.pose),
        knot,
        cost,
        iterations,
        correspondences: n_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::RadarPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(seed: u64, n: usize) -> Vec<Vector2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)))
            .collect()
    }

    fn cloud_at(points: &[Vector2<f64>], t: f64) -> RadarPointCloud {
        RadarPointCloud {
            points: points
                .iter()
                .map(|p| RadarPoint {
                    x: p.x,
                    y: p.y,
                    timestamp: t,
                    power: 1.0,
                })
                .collect(),
        }
    }

    fn map_of(points: &[Vector2<f64>]) -> SlidingMap {
        let mut map = SlidingMap::new(5, 0.01);
        map.insert(points.to_vec());
        map
    }

    #[test]
    fn stationary_identical_cloud_is_a_fixed_point() {
        let pts = random_points(1, 300);
        let map = map_of(&pts);
        let prev = StateKnot::new(0.0, Pose2::identity(), Twist2::zero());
        let out = odometry_step(
            &cloud_at(map.points(), 0.25),
            &map,
            &prev,
            None,
            &Pose2::identity(),
            0.25,
            &NoiseConfig::default(),
            &GaussNewtonSettings::default(),
        )
        .unwrap();
        let r = out.relative;
        assert!(r.x.abs() < 1e-6 && r.y.abs() < 1e-6 && r.theta.abs() < 1e-6);
    }

    #[test]
    fn recovers_rigid_translation() {
        let pts = random_points(2, 400);
        let map = map_of(&pts);
        let shift = Vector2::new(0.1, 0.0);
        // The robot moved forward by 0.1 m, so it sees the map shifted back.
        let seen: Vec<_> = map.points().iter().map(|p| p - shift).collect();
        let prev = StateKnot::new(0.0, Pose2::identity(), Twist2::zero());
        let yaw = PreintegratedYaw {
            delta_theta: 0.0,
            variance: 1e-6,
            t_a: 0.0,
            t_b: 0.25,
        };
        let cfg = NoiseConfig {
            qc_diag: [100.0, 100.0, 100.0],
            ..NoiseConfig::default()
        };
        let out = odometry_step(
            &cloud_at(&seen, 0.25),
            &map,
            &prev,
            Some(&yaw),
            &Pose2::identity(),
            0.25,
            &cfg,
            &GaussNewtonSettings::default(),
        )
        .unwrap();
        assert!((out.relative.x - 0.1).abs() < 1e-3 && out.relative.y.abs() < 1e-3, "{:?}", out.relative);
    }

    #[test]
    fn too_few_map_points_is_a_dropout() {
        let pts = random_points(3, 5);
        let map = map_of(&pts);
        let prev = StateKnot::new(0.0, Pose2::identity(), Twist2::zero());
        let err = odometry_step(
            &cloud_at(&pts, 0.25),
            &map,
            &prev,
            None,
            &Pose2::identity(),
            0.25,
            &NoiseConfig::default(),
            &GaussNewtonSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EstimationError::InsufficientCorrespondences { .. }));
    }

    #[test]
    fn sliding_map_respects_spacing_and_window() {
        let mut map = SlidingMap::new(2, 0.2);
        for k in 0..4 {
            map.insert(random_points(10 + k, 500));
        }
        let pts = map.points();
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                assert!((a - b).norm() >= 0.1);
            }
        }
        assert!(pts.len() <= 1000);
    }
}
