//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::HashSet;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtr_core::detection::{BfarParams, Peak, RadarPoint, RadarPointCloud};
use rtr_core::estimation::{
    localize, odometry_step, GaussNewtonSettings, NeighborIndex, NoiseConfig, PreintegratedYaw, SlidingMap, StateKnot,
};
use rtr_core::harness::{acquire_cloud, OdometryFrontend, RunConfig};
use rtr_core::se2::{flow, normalize_angle, Covariance3, Pose2, Twist2};
use rtr_core::sim::{drive_teach, Bounds, Landmark, SensorRig, WorldModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<Vector2<f64>> {
    (0..n)
        .map(|_| Vector2::new(rng.gen_range(-half_width..half_width), rng.gen_range(-half_width..half_width)))
        .collect()
}

/// Integer powers keep every training sum exact, so the detector and the
/// oracle must agree bit for bit.
pub fn random_row(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len)
        .map(|_| {
            let base = rng.gen_range(0..6) as f32;
            if rng.gen_bool(0.05) {
                base + rng.gen_range(10..60) as f32
            } else {
                base
            }
        })
        .collect()
}

pub fn random_bfar(rng: &mut ChaCha8Rng) -> BfarParams {
    let guard = rng.gen_range(0..5);
    BfarParams {
        window: guard + rng.gen_range(1..30),
        guard,
        scale_a: rng.gen_range(0.5..2.0),
        offset_b: rng.gen_range(0.0..5.0),
        min_range_bin: rng.gen_range(0..20),
    }
}

/// Threshold test with each training cell summed directly.
pub fn naive_bfar(row: &[f32], p: &BfarParams) -> Vec<bool> {
    let n = row.len() as i64;
    (0..n)
        .map(|i| {
            if (i as usize) < p.min_range_bin {
                return false;
            }
            let (g, w) = (p.guard as i64, p.window as i64);
            let mut sum = 0.0f64;
            let mut count = 0usize;
            for j in (i - g - w)..=(i + g + w) {
                if (j - i).abs() > g && (0..n).contains(&j) {
                    sum += row[j as usize] as f64;
                    count += 1;
                }
            }
            count > 0 && row[i as usize] as f64 > p.scale_a * (sum / count as f64) + p.offset_b
        })
        .collect()
}

/// Two passes: mark run starts, then walk each start to its end.
pub fn naive_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let starts: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] && (i == 0 || !mask[i - 1])).collect();
    starts
        .into_iter()
        .map(|s| {
            let mut e = s;
            while e + 1 < mask.len() && mask[e + 1] {
                e += 1;
            }
            (s, e)
        })
        .collect()
}

pub fn naive_peaks(mask: &[bool], row: &[f32]) -> Vec<Peak> {
    naive_runs(mask)
        .into_iter()
        .map(|(s, e)| {
            let total: f64 = (s..=e).map(|k| row[k] as f64).sum();
            let range_bin = if total > 0.0 {
                (s..=e).map(|k| k as f64 * row[k] as f64).sum::<f64>() / total
            } else {
                (s + e) as f64 / 2.0
            };
            let power = (s..=e).map(|k| row[k] as f64).fold(f64::NEG_INFINITY, f64::max);
            Peak { range_bin, power }
        })
        .collect()
}

/// Nearest target within `max_dist` for each query; ties keep the lower index.
pub fn naive_association(query: &[Vector2<f64>], target: &[Vector2<f64>], max_dist: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (qi, q) in query.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (ti, t) in target.iter().enumerate() {
            let d = ((t.x - q.x).powi(2) + (t.y - q.y).powi(2)).sqrt();
            if d <= max_dist && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((ti, d));
            }
        }
        if let Some((ti, d)) = best {
            out.push((qi, ti, d));
        }
    }
    out
}

pub fn occupied_voxels(points: &[Vector2<f64>], size: f64) -> HashSet<(i64, i64)> {
    points
        .iter()
        .map(|p| ((p.x / size).floor() as i64, (p.y / size).floor() as i64))
        .collect()
}

/// Signed distance to the nearest segment: the closer endpoint or the
/// perpendicular foot, signed by the cross product of that segment.
pub fn exhaustive_lateral(p: Vector2<f64>, path: &[Vector2<f64>]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ab = b - a;
        let along = (p - a).dot(&ab);
        let dist = if along <= 0.0 {
            (p - a).norm()
        } else if along >= ab.norm_squared() {
            (p - b).norm()
        } else {
            (p - (a + ab * (along / ab.norm_squared()))).norm()
        };
        if dist < best.0 {
            let cross = ab.x * (p.y - a.y) - ab.y * (p.x - a.x);
            best = (dist, cross);
        }
    }
    if best.1 < 0.0 {
        -best.0
    } else {
        best.0
    }
}

pub fn random_polyline(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector2<f64>> {
    let mut p = Vector2::new(0.0, 0.0);
    let mut heading: f64 = 0.0;
    let mut out = vec![p];
    for _ in 1..n {
        heading += rng.gen_range(-1.0..1.0);
        p += Vector2::new(heading.cos(), heading.sin()) * rng.gen_range(0.5..4.0);
        out.push(p);
    }
    out
}

/// Error of localizing a noise-free copy of a random submap seen from
/// `truth`, starting at identity under a loose prior.
pub fn icp_case(rng: &mut ChaCha8Rng) -> (Pose2, Pose2) {
    let map = random_points(rng, 400, 12.0);
    let t = loop {
        let t = Vector2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        if t.norm() <= 0.3 {
            break t;
        }
    };
    let truth = Pose2::new(t.x, t.y, rng.gen_range(-0.1..0.1));
    let live: Vec<_> = map.iter().map(|p| truth.inverse_transform_point(*p)).collect();
    let index = NeighborIndex::new(map, GaussNewtonSettings::default().correspondence_max_dist).unwrap();
    let out = localize(
        &live,
        &index,
        &Pose2::identity(),
        &Covariance3::diagonal(100.0, 100.0, 100.0),
        &NoiseConfig::default(),
        &GaussNewtonSettings::default(),
    )
    .unwrap();
    (out.pose, truth)
}

/// One odometry step on a synthetic sweep: the robot moves with `twist`
/// from identity at t = 0 and each landmark is observed at the time the
/// beam passes its bearing. Returns the recovered knot at t = 0.25.
pub fn constant_twist_sweep(twist: Twist2, prev_twist: Twist2, seed: u64) -> StateKnot {
    let mut rng = rng(seed);
    let world = random_points(&mut rng, 800, 25.0);
    let (knot_time, period) = (0.25, 0.25);
    let knot_pose = flow(&Pose2::identity(), &twist, knot_time);
    let points = world
        .iter()
        .map(|w| {
            let rel = knot_pose.inverse_transform_point(*w);
            let bearing = rel.y.atan2(rel.x).rem_euclid(std::f64::consts::TAU);
            let t = knot_time - 0.5 * period + period * bearing / std::f64::consts::TAU;
            let body = flow(&Pose2::identity(), &twist, t).inverse_transform_point(*w);
            RadarPoint {
                x: body.x,
                y: body.y,
                timestamp: t,
                power: 1.0,
            }
        })
        .collect();
    let mut map = SlidingMap::new(1, 0.01);
    map.insert(world);
    let yaw = PreintegratedYaw {
        delta_theta: twist.omega * knot_time,
        variance: 1e-6,
        t_a: 0.0,
        t_b: knot_time,
    };
    let prev = StateKnot::new(0.0, Pose2::identity(), prev_twist);
    odometry_step(
        &RadarPointCloud { points },
        &map,
        &prev,
        Some(&yaw),
        &Pose2::identity(),
        knot_time,
        &NoiseConfig::default(),
        &GaussNewtonSettings::default(),
    )
    .unwrap()
    .knot
}

/// Four staggered landmark rows along a 100 m straight; no walls, since
/// long parallel walls leave motion along them unobservable.
pub fn landmark_corridor() -> WorldModel {
    let mut world = WorldModel::empty(Bounds {
        min: [-60.0, -60.0],
        max: [160.0, 60.0],
    });
    for i in 0..40 {
        let x = -20.0 + 4.0 * i as f64 + (i * 7 % 5) as f64 * 0.37;
        for (k, y) in [-6.0, 7.5, -13.0, 16.0].iter().enumerate() {
            world.landmarks.push(Landmark {
                position: [x + k as f64 * 1.3, y + ((i + k) * 3 % 4) as f64 * 0.4],
                reflectivity: 0.8,
            });
        }
    }
    world
}

/// Final odometry position error over a noise-free 100 m straight, in
/// percent of the distance driven.
pub fn zero_noise_straight_drift_pct() -> f64 {
    let cfg = RunConfig {
        ideal_sensor: true,
        rig: SensorRig::noiseless(),
        ..RunConfig::default()
    };
    let world = landmark_corridor();
    let route = [Pose2::new(0.0, 0.0, 0.0), Pose2::new(100.0, 0.0, 0.0)];
    let drive = drive_teach(&world, &cfg.rig, &route, 1.0, 1, &cfg.pilot).unwrap();
    let half = 0.5 * cfg.rig.scan_period;
    let origin = drive.truth.pose_at(drive.sensors.scan_start(0) + half).unwrap();
    let mut frontend = OdometryFrontend::new(&cfg);
    let mut err = 0.0;
    for k in 0..drive.scan_count() {
        let cloud = acquire_cloud(&drive.sensors, &drive.truth, k, &cfg).unwrap();
        let t = drive.sensors.scan_start(k) + half;
        let step = frontend.process(&cloud, &drive.gyro, t).unwrap();
        let truth = origin.between(&drive.truth.pose_at(t).unwrap());
        err = (step.knot.pose.translation() - truth.translation()).norm();
    }
    100.0 * err / drive.truth.distance()
}

pub fn pose_error(a: &Pose2, b: &Pose2) -> (f64, f64) {
    (a.distance_to(b), normalize_angle(a.theta - b.theta).abs())
}

/// Detector mask and peak list against the naive oracles on random rows.
pub fn check_detection(seed: u64, cases: usize) -> Result<(), String> {
    use rtr_core::detection::{bfar_detect, extract_peaks};
    let mut rng = rng(seed);
    for case in 0..cases {
        let p = random_bfar(&mut rng);
        let len = p.min_row_len() + rng.gen_range(0..300);
        let row = random_row(&mut rng, len);
        let mask = bfar_detect(&row, &p).map_err(|e| e.to_string())?;
        if mask != naive_bfar(&row, &p) {
            return Err(format!("case {case}: mask differs"));
        }
        let peaks = extract_peaks(&mask, &row).map_err(|e| e.to_string())?;
        let oracle = naive_peaks(&mask, &row);
        if peaks.len() != oracle.len() {
            return Err(format!("case {case}: {} peaks, oracle {}", peaks.len(), oracle.len()));
        }
        for (a, b) in peaks.iter().zip(&oracle) {
            if (a.range_bin - b.range_bin).abs() > 1e-12 || a.power != b.power {
                return Err(format!("case {case}: peak {a:?} vs {b:?}"));
            }
        }
    }
    Ok(())
}

pub fn check_association(seed: u64, cases: usize) -> Result<(), String> {
    use rtr_core::estimation::associate;
    let mut rng = rng(seed);
    for case in 0..cases {
        let radius = rng.gen_range(0.2..2.0);
        let n = rng.gen_range(1..200);
        let target = random_points(&mut rng, n, 10.0);
        let n = rng.gen_range(1..200);
        let query = random_points(&mut rng, n, 11.0);
        let index = NeighborIndex::new(target.clone(), radius).map_err(|e| e.to_string())?;
        let got: Vec<_> = associate(&query, &index).iter().map(|c| (c.query, c.target, c.distance)).collect();
        let oracle = naive_association(&query, &target, radius);
        if got.len() != oracle.len() {
            return Err(format!("case {case}: {} pairs, oracle {}", got.len(), oracle.len()));
        }
        for (a, b) in got.iter().zip(&oracle) {
            if a.0 != b.0 || a.1 != b.1 || (a.2 - b.2).abs() > 1e-12 {
                return Err(format!("case {case}: pair {a:?} vs {b:?}"));
            }
        }
    }
    Ok(())
}

pub fn check_voxels(seed: u64, cases: usize) -> Result<(), String> {
    use rtr_core::voxel::voxel_downsample;
    let mut rng = rng(seed);
    for case in 0..cases {
        let size = rng.gen_range(0.05..1.0);
        let n = rng.gen_range(1..500);
        let points = random_points(&mut rng, n, 5.0);
        let out = voxel_downsample(&points, size);
        let expected = occupied_voxels(&points, size).len();
        if out.len() != expected {
            return Err(format!("case {case}: {} voxels, oracle {expected}", out.len()));
        }
    }
    Ok(())
}

pub fn check_lateral(seed: u64, cases: usize) -> Result<(), String> {
    use rtr_core::geometry::Polyline;
    use rtr_core::metrics::lateral_error;
    let mut rng = rng(seed);
    for case in 0..cases {
        let n = rng.gen_range(2..12);
        let path = random_polyline(&mut rng, n);
        let line = Polyline::new(path.iter().copied());
        let p = Vector2::new(rng.gen_range(-10.0..20.0), rng.gen_range(-15.0..15.0));
        let got = lateral_error(p, &line).map_err(|e| e.to_string())?;
        let oracle = exhaustive_lateral(p, &path);
        if (got - oracle).abs() > 1e-12 {
            return Err(format!("case {case}: {got} vs {oracle}"));
        }
    }
    Ok(())
}

/// Closed-form unicycle motion at constant `(v, omega)`.
pub fn arc(pose: &Pose2, v: f64, omega: f64, dt: f64) -> Pose2 {
    let th = pose.theta + omega * dt;
    if omega.abs() < 1e-12 {
        return Pose2::new(pose.x + v * dt * pose.theta.cos(), pose.y + v * dt * pose.theta.sin(), th);
    }
    let r = v / omega;
    Pose2::new(
        pose.x + r * (th.sin() - pose.theta.sin()),
        pose.y - r * (th.cos() - pose.theta.cos()),
        th,
    )
}

/// Largest single-step RK4 error against the arc over a range of headings.
pub fn rk4_step_error(v: f64, omega: f64, dt: f64) -> f64 {
    use rtr_core::control::rk4_step;
    (0..16)
        .map(|k| {
            let p = Pose2::new(1.0, -2.0, -3.0 + 0.4 * k as f64);
            let (a, b) = (rk4_step(&p, v, omega, dt), arc(&p, v, omega, dt));
            (a.x - b.x).hypot(a.y - b.y).max(normalize_angle(a.theta - b.theta).abs())
        })
        .fold(0.0, f64::max)
}

/// Commands for the same scene solved in the original frame and after a
/// rigid transform `g` of path and robot.
pub fn mpc_in_two_frames(
    g: &Pose2,
    curvature: f64,
    start: &Pose2,
    u_prev: rtr_core::control::ControlCommand,
) -> (rtr_core::control::MpcSolution, rtr_core::control::MpcSolution) {
    use rtr_core::control::{build_reference, solve_mpc, MpcConfig, ReferencePath};
    let cfg = MpcConfig::default();
    let knots: Vec<Pose2> = (0..80)
        .map(|k| flow(&Pose2::identity(), &Twist2::new(1.0, 0.0, curvature), k as f64 * 0.25))
        .collect();
    let moved: Vec<Pose2> = knots.iter().map(|k| g.compose(k)).collect();
    let solve = |poses: &[Pose2], start: &Pose2| {
        let path = ReferencePath::new(poses).unwrap();
        solve_mpc(start, &u_prev, &build_reference(&path, start, None, &cfg), &cfg)
    };
    (solve(&knots, start), solve(&moved, &g.compose(start)))
}

/// Worst relative deviation of the analytic residual Jacobians from central
/// differences over random evaluation points.
pub fn jacobian_worst_error() -> f64 {
    use nalgebra::{DMatrix, DVector, Vector2};
    use rtr_core::estimation::residuals::{localization_point, motion_prior, odometry_point, pose_prior};
    use rtr_core::estimation::StateKnot;
    use rtr_core::se2::{flow, Twist2};

    fn numeric(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
        let h = 1e-6;
        let cols: Vec<DVector<f64>> = (0..x.len())
            .map(|i| {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect();
        DMatrix::from_columns(&cols)
    }
    fn rel(analytic: DMatrix<f64>, numeric: DMatrix<f64>) -> f64 {
        (analytic - &numeric).amax() / numeric.amax().max(1.0)
    }
    let p = |v: &DVector<f64>| Pose2::new(v[0], v[1], v[2]);
    let t = |v: &DVector<f64>| Twist2::new(v[3], v[4], v[5]);

    let mut rng = rng(707);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mut r = || rng.gen_range(-1.0..1.0);
        let body = Vector2::new(20.0 * r(), 20.0 * r());
        let map = Vector2::new(20.0 * r(), 20.0 * r());
        let tau = 0.125 * r();
        let x = DVector::from_vec(vec![5.0 * r(), 5.0 * r(), 3.0 * r(), 2.0 * r(), 0.5 * r(), r()]);

        let (_, j) = odometry_point(&p(&x), &t(&x), tau, body, map);
        let f = |y: &DVector<f64>| DVector::from_column_slice(odometry_point(&p(y), &t(y), tau, body, map).0.as_slice());
        worst = worst.max(rel(DMatrix::from_column_slice(2, 6, j.as_slice()), numeric(&f, &x)));

        let prev = StateKnot::new(0.0, Pose2::new(r(), r(), r()), t(&x));
        let near = flow(&prev.pose, &prev.twist, 0.25).compose(&Pose2::new(0.2 * r(), 0.2 * r(), 0.2 * r()));
        let y0 = DVector::from_vec(vec![near.x, near.y, near.theta, x[3] + 0.1 * r(), x[4] + 0.1 * r(), x[5] + 0.1 * r()]);
        let (_, j) = motion_prior(&prev, 0.25, &p(&y0), &t(&y0)).unwrap();
        let f = |y: &DVector<f64>| DVector::from_column_slice(motion_prior(&prev, 0.25, &p(y), &t(y)).unwrap().0.as_slice());
        worst = worst.max(rel(DMatrix::from_column_slice(6, 6, j.as_slice()), numeric(&f, &y0)));

        let q = DVector::from_vec(vec![5.0 * r(), 5.0 * r(), 3.0 * r()]);
        let (_, j) = localization_point(&p(&q), body, map);
        let f = |y: &DVector<f64>| DVector::from_column_slice(localization_point(&p(y), body, map).0.as_slice());
        worst = worst.max(rel(DMatrix::from_column_slice(2, 3, j.as_slice()), numeric(&f, &q)));

        let prior = Pose2::new(q[0] + 0.3 * r(), q[1] + 0.3 * r(), q[2] + 0.3 * r());
        let (_, j) = pose_prior(&prior, &p(&q)).unwrap();
        let f = |y: &DVector<f64>| DVector::from_column_slice(pose_prior(&prior, &p(y)).unwrap().0.as_slice());
        worst = worst.max(rel(DMatrix::from_column_slice(3, 3, j.as_slice()), numeric(&f, &q)));
    }
    worst
}
