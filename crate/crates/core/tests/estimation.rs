mod common;

use approx::assert_relative_eq;
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtr_core::detection::{scan_to_cloud, BfarParams};
use rtr_core::se2::{Pose2, Twist2};
use rtr_core::sim::{simulate_scan, ArtifactPattern, Bounds, GroundTruthLog, Landmark, SensorRig, WorldModel};

#[test]
fn constant_twist_sweep_is_deskewed() {
    let truth = Twist2::new(1.0, 0.0, 0.2);
    // Steady motion: the previous knot already carries the twist.
    for seed in 0..3 {
        let knot = common::constant_twist_sweep(truth, truth, seed);
        assert_relative_eq!(knot.twist.vx, 1.0, max_relative = 0.02);
        assert_relative_eq!(knot.twist.omega, 0.2, max_relative = 0.02);
        assert!(knot.twist.vy.abs() < 0.02, "{:?}", knot.twist);
    }
    let knot = common::constant_twist_sweep(truth, truth.scaled(0.95), 0);
    assert_relative_eq!(knot.twist.vx, 1.0, max_relative = 0.02);
    assert_relative_eq!(knot.twist.omega, 0.2, max_relative = 0.02);
}

#[test]
fn icp_recovers_random_rigid_transforms() {
    let mut rng = common::rng(21);
    for case in 0..100 {
        let (est, truth) = common::icp_case(&mut rng);
        let (dt, dth) = common::pose_error(&est, &truth);
        assert!(dt < 1e-3 && dth < 1e-3, "case {case}: {est:?} vs {truth:?}");
    }
}

#[test]
fn zero_noise_straight_drifts_less_than_a_tenth_of_a_percent() {
    let pct = common::zero_noise_straight_drift_pct();
    assert!(pct < 0.1, "drift {pct:.4}%");
}

#[test]
fn landmark_ahead_is_extracted_where_it_stands() {
    let rig = SensorRig {
        radar_extrinsic: Pose2::identity(),
        ..SensorRig::noiseless()
    };
    let mut world = WorldModel::empty(Bounds {
        min: [-50.0, -50.0],
        max: [50.0, 50.0],
    });
    world.landmarks.push(Landmark {
        position: [10.0, 0.0],
        reflectivity: 1.0,
    });
    let mut truth = GroundTruthLog::new(Pose2::identity(), 0.01);
    for _ in 0..100 {
        truth.push(Twist2::zero());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scan = simulate_scan(&world, &truth, &rig, &ArtifactPattern::from_rig(&rig), 0.0, &mut rng).unwrap();
    let cloud = scan_to_cloud(&scan, &BfarParams::for_noise_std(0.1)).unwrap();
    // The beam also paints neighbouring azimuths; the strongest return is
    // the one on the landmark bearing.
    // The beam also paints the neighbouring azimuths at full strength.
    let target = Vector2::new(10.0, 0.0);
    let nearest = cloud.points.iter().map(|p| (Vector2::new(p.x, p.y) - target).norm()).fold(f64::INFINITY, f64::min);
    assert!(nearest < 0.15, "nearest {nearest}");
    for p in &cloud.points {
        assert!((p.x.hypot(p.y) - 10.0).abs() < 0.1 && p.y.atan2(p.x).abs() <= rig.beam_half_width + 1e-12, "{p:?}");
    }
}

#[test]
fn residual_jacobians_match_central_differences() {
    let worst = common::jacobian_worst_error();
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}
