use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use super::residuals::{localization_point, pose_prior};
use super::{
    associate, huber, solve_normal_equations, EstimationError, GaussNewtonSettings, NeighborIndex, NoiseConfig,
    MIN_CORRESPONDENCES,
};
use crate::se2::{Covariance3, Pose2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationResult {
    /// Robot pose in the submap frame.
    pub pose: Pose2,
    /// Inverse of the Gauss-Newton information at the solution.
    pub covariance: Covariance3,
    pub cost: f64,
    pub inliers: usize,
    pub iterations: usize,
}

fn evaluate(
    pose: &Pose2,
    live: &[Vector2<f64>],
    pairs: &[(usize, Vector2<f64>)],
    prior: &Pose2,
    prior_info: &Matrix3<f64>,
    point_info: f64,
    delta: f64,
) -> Result<(f64, Matrix3<f64>, Vector3<f64>), EstimationError> {
    let mut cost = 0.0;
    let mut h = Matrix3::zeros();
    let mut g = Vector3::zeros();
    for &(qi, m) in pairs {
        let (e, j) = localization_point(pose, live[qi], m);
        let (rho, w) = huber(e.norm(), delta);
        cost += rho * point_info;
        h += j.transpose() * j * (w * point_info);
        g += j.transpose() * e * (w * point_info);
    }
    let (e, j) = pose_prior(prior, pose)?;
    cost += 0.5 * (e.transpose() * prior_info * e)[0];
    h += j.transpose() * prior_info * j;
    g += j.transpose() * prior_info * e;
    Ok((cost, h, g))
}

/// Aligns a motion-compensated live cloud (robot frame) to a submap,
/// regularized by a pose prior in the submap frame.
pub fn localize(
    live: &[Vector2<f64>],
    submap: &NeighborIndex,
    prior: &Pose2,
    prior_cov: &Covariance3,
    cfg: &NoiseConfig,
    settings: &GaussNewtonSettings,
) -> Result<LocalizationResult, EstimationError> {
    if !prior.is_finite() {
        return Err(EstimationError::Numerical("non-finite localization prior"));
    }
    let prior_info = prior_cov
        .information()
        .ok_or(EstimationError::Numerical("singular pose prior covariance"))?;
    let point_info = 1.0 / cfg.r_point;
    let delta = settings.huber_delta;

    let mut pose = *prior;
    let gate_cost = huber(settings.correspondence_max_dist, delta).0 * point_info;
    let mut prev_cost = f64::INFINITY;
    let mut prev_gated = f64::INFINITY;
    let mut prev_ids: Vec<(usize, usize)> = Vec::new();
    let mut rising = 0;
    let mut iterations = 0;
    loop {
        let query: Vec<Vector2<f64>> = live.iter().map(|p| pose.transform_point(*p)).collect();
        let corr = associate(&query, submap);
        if corr.len() < MIN_CORRESPONDENCES {
            return Err(EstimationError::InsufficientCorrespondences {
                found: corr.len(),
                required: MIN_CORRESPONDENCES,
            });
        }
        let ids: Vec<(usize, usize)> = corr.iter().map(|c| (c.query, c.target)).collect();
        let pairs: Vec<(usize, Vector2<f64>)> = corr.iter().map(|c| (c.query, submap.points()[c.target])).collect();
        let eval = |p: &Pose2| evaluate(p, live, &pairs, prior, &prior_info, point_info, delta);

        let (mut cost, mut h, mut g) = eval(&pose)?;
        let mut steps = 0;
        for _ in 0..settings.max_inner_gn_iters {
            let dx = solve_normal_equations(
                DMatrix::from_column_slice(3, 3, h.as_slice()),
                &DVector::from_column_slice(g.as_slice()),
            )?;
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..10 {
                let cand = Pose2::new(pose.x + scale * dx[0], pose.y + scale * dx[1], pose.theta + scale * dx[2]);
                let (c, _, _) = eval(&cand)?;
                if c <= cost {
                    accepted = Some((cand, c));
                    break;
                }
                scale *= 0.5;
            }
            let Some((cand, c)) = accepted else { break };
            let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
            pose = cand;
            steps += 1;
            (cost, h, g) = eval(&pose)?;
            if rel < settings.cost_rel_tol {
                break;
            }
        }
        iterations += 1;
        // Unmatched points are charged the gate cost so that re-association
        // alone never raises the objective.
        let gated = cost + (live.len() - pairs.len()) as f64 * gate_cost;
        if gated > prev_gated * (1.0 + 1e-9) {
            rising += 1;
            if rising >= 3 {
                return Err(EstimationError::Diverged(rising));
            }
        } else {
            rising = 0;
        }
        let rel = (prev_cost - cost).abs() / cost.max(f64::MIN_POSITIVE);
        let converged = ids == prev_ids && (rel < settings.cost_rel_tol || steps == 0);
        prev_cost = cost;
        prev_gated = gated;
        prev_ids = ids;
        if converged || iterations >= settings.max_outer_icp_iters {
            let covariance = h
                .try_inverse()
                .and_then(Covariance3::from_matrix)
                .ok_or(EstimationError::Numerical("singular localization information"))?;
            let inliers = pairs
                .iter()
                .filter(|&&(qi, m)| localization_point(&pose, live[qi], m).0.norm() <= delta)
                .count();
            if inliers < MIN_CORRESPONDENCES {
                return Err(EstimationError::InsufficientCorrespondences {
                    found: inliers,
                    required: MIN_CORRESPONDENCES,
                });
            }
            return Ok(LocalizationResult {
                pose,
                covariance,
                cost,
                inliers,
                iterations,
            });
        }
    }
}
