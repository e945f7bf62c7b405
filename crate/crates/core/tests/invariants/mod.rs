//! Property checks shared by the property-test suite and the acceptance
//! run. Each check drives its own strategy through a deterministic runner.

#![allow(dead_code)]

use std::f64::consts::{PI, TAU};
use std::fmt::Debug;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use tiltnav_core::entropy::{binary_entropy, cell_entropy, EntropyGrid, LogOddsParams};
use tiltnav_core::imu::{
    bezier_interpolate, estimate_tilt, preintegrate, propagate_state, undistort_point, ImuSample,
    LidarExtrinsic, ScanMotion, UndistortStats,
};
use tiltnav_core::lio::{detect_degeneracy, ieskf_update, point_plane_residual, Covariance, LioConfig};
use tiltnav_core::so3::{so3_exp, wrap_angle, Rotation};
use tiltnav_core::state::{ErrorState, StateVector, GRAVITY};
use tiltnav_core::traj::{solve_coefficients, total_cost, BoundaryState, PlannerLimits, SAMPLES_PER_PIECE};
use tiltnav_core::voxel::{adapt_resolution, DualVoxelMap, Layer, Plane, VoxelMapConfig, VoxelStats};
use tiltnav_core::yaw::{build_layers, energy_cost, receding_replan, TargetObservation, YawConfig};

pub type Outcome = Result<(), String>;

pub struct Invariant {
    pub name: &'static str,
    pub cases: u32,
    check: fn(&mut TestRunner) -> Outcome,
}

impl Invariant {
    pub fn run(&self) -> Outcome {
        let config = Config {
            cases: self.cases,
            failure_persistence: None,
            ..Config::default()
        };
        let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
        (self.check)(&mut runner)
    }
}

pub fn find(name: &str) -> &'static Invariant {
    ALL.iter().find(|i| i.name == name).unwrap_or_else(|| panic!("no invariant named {name}"))
}

fn check<S>(runner: &mut TestRunner, strategy: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Outcome
where
    S: Strategy,
    S::Value: Debug,
{
    runner.run(&strategy, f).map_err(|e| e.to_string())
}

macro_rules! invariants {
    ($($name:ident: $cases:expr),* $(,)?) => {
        pub static ALL: &[Invariant] = &[$(Invariant { name: stringify!($name), cases: $cases, check: $name }),*];
    };
}

invariants! {
    exp_is_orthonormal: 200,
    retract_adds_vector_blocks_and_composes_parallel_axes: 200,
    bezier_hits_endpoints_and_stays_in_hull: 200,
    preintegration_velocity_is_additive: 200,
    stationary_undistortion_is_identity: 200,
    tilt_ignores_accelerometer_scale: 200,
    streaming_covariance_matches_batch: 200,
    voxel_statistics_ignore_insertion_order: 200,
    cell_entropy_shape: 200,
    resolution_shrinks_with_density: 200,
    residual_vanishes_on_plane_and_whitens: 200,
    degeneracy_projector_is_idempotent: 200,
    entropy_extremes: 200,
    jerk_energy_nonnegative_and_penalties_match_samples: 200,
    energy_cost_is_wrap_correct: 200,
    yaw_replan_is_deterministic_and_rate_limited: 24,
    update_pipeline_replays_exactly: 24,
}

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation> {
    vec3(3.0).prop_map(|w| so3_exp(&w))
}

fn nonzero(range: f64, min: f64) -> impl Strategy<Value = Vector3<f64>> {
    vec3(range).prop_filter("nonzero", move |v| v.norm() > min)
}

fn close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
    (a - b).norm() <= tol
}

// --- rotations and state ---

fn exp_is_orthonormal(r: &mut TestRunner) -> Outcome {
    check(r, vec3(3.0).prop_filter("|w| ≤ 3", |w| w.norm() <= 3.0), |w| {
        let m = so3_exp(&w).matrix();
        prop_assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-12);
        Ok(())
    })
}

fn retract_adds_vector_blocks_and_composes_parallel_axes(r: &mut TestRunner) -> Outcome {
    let s = (rotation(), nonzero(1.0, 1e-3), -1.0..1.0f64, -1.0..1.0f64, proptest::collection::vec(vec3(5.0), 5));
    check(r, s, |(rot, axis, a, b, blocks)| {
        let xi = StateVector { attitude: rot, ..StateVector::default() };
        let u = axis.normalize();
        let d = ErrorState::from_blocks(blocks[0], u * a, blocks[1], blocks[2], blocks[3], blocks[4]);
        let out = xi.retract(&d);
        prop_assert_eq!(out.position, xi.position + blocks[0]);
        prop_assert_eq!(out.velocity, xi.velocity + blocks[1]);
        prop_assert_eq!(out.accel_bias, xi.accel_bias + blocks[2]);
        prop_assert_eq!(out.gyro_bias, xi.gyro_bias + blocks[3]);
        prop_assert_eq!(out.gravity_correction, xi.gravity_correction + blocks[4]);
        let z = Vector3::zeros();
        let step = |s: f64| ErrorState::from_blocks(z, u * s, z, z, z, z);
        let twice = xi.retract(&step(a)).retract(&step(b));
        let once = xi.retract(&step(a + b));
        prop_assert!(twice.attitude.ominus(&once.attitude).norm() < 1e-12);
        Ok(())
    })
}

// --- IMU front-end ---

fn bezier_hits_endpoints_and_stays_in_hull(r: &mut TestRunner) -> Outcome {
    check(r, (proptest::collection::vec(vec3(10.0), 3), 0.0..=1.0f64), |(p, mu)| {
        prop_assert_eq!(bezier_interpolate(&p[0], &p[1], &p[2], 0.0).value, p[0]);
        prop_assert_eq!(bezier_interpolate(&p[0], &p[1], &p[2], 1.0).value, p[2]);
        let v = bezier_interpolate(&p[0], &p[1], &p[2], mu).value;
        for a in 0..3 {
            let lo = p.iter().map(|q| q[a]).fold(f64::INFINITY, f64::min);
            let hi = p.iter().map(|q| q[a]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v[a] >= lo - 1e-12 && v[a] <= hi + 1e-12);
        }
        Ok(())
    })
}

fn preintegration_velocity_is_additive(r: &mut TestRunner) -> Outcome {
    let s = (
        proptest::collection::vec(vec3(1.0), 12),
        proptest::collection::vec(vec3(12.0), 12),
        1usize..11,
        rotation(),
    );
    check(r, s, |(gyro, accel, split, rot)| {
        let samples: Vec<ImuSample> = (0..12)
            .map(|i| ImuSample { stamp: i as f64 * 0.005, gyro: gyro[i], accel: accel[i] })
            .collect();
        let xi = StateVector { attitude: rot, velocity: Vector3::new(0.3, -0.1, 0.2), ..StateVector::default() };
        let whole = preintegrate(&samples, &xi).unwrap();
        let first = preintegrate(&samples[..=split], &xi).unwrap();
        let mid = propagate_state(&xi, &first);
        let second = preintegrate(&samples[split..], &mid).unwrap();
        prop_assert!(close(&whole.dv, &(first.dv + second.dv), 1e-9));
        prop_assert!(close(&whole.dpos, &(first.dpos + second.dpos), 1e-9));
        Ok(())
    })
}

fn stationary_undistortion_is_identity(r: &mut TestRunner) -> Outcome {
    let s = (
        vec3(20.0),
        proptest::collection::vec(vec3(30.0), 1..40),
        proptest::collection::vec(0.0..=0.1f64, 40),
    );
    check(r, s, |(origin, points, taus)| {
        let xi = StateVector { position: origin, ..StateVector::default() };
        let samples: Vec<ImuSample> = (0..21)
            .map(|i| ImuSample { stamp: i as f64 * 0.005, gyro: Vector3::zeros(), accel: Vector3::new(0.0, 0.0, GRAVITY) })
            .collect();
        let motion = ScanMotion::new(&xi, &samples, 0.0, 0.1).unwrap();
        let mut stats = UndistortStats::default();
        for (p, tau) in points.iter().zip(&taus) {
            let out = undistort_point(p, *tau, &motion, &LidarExtrinsic::default(), &mut stats).unwrap();
            prop_assert_eq!(out, p + origin);
        }
        Ok(())
    })
}

fn tilt_ignores_accelerometer_scale(r: &mut TestRunner) -> Outcome {
    check(r, (-1.2..1.2f64, 0.2..5.0f64), |(pitch, scale)| {
        let f = Vector3::new(-pitch.sin(), 0.0, pitch.cos()) * GRAVITY;
        let make = |k: f64| -> Vec<ImuSample> {
            (0..50).map(|i| ImuSample { stamp: i as f64 * 0.005, gyro: Vector3::zeros(), accel: f * k }).collect()
        };
        let a = estimate_tilt(&make(1.0), 0.05).unwrap();
        let b = estimate_tilt(&make(scale), 0.05).unwrap();
        prop_assert!((a.pitch - b.pitch).abs() < 1e-12);
        Ok(())
    })
}

// --- voxel statistics and entropy ---

fn streaming_covariance_matches_batch(r: &mut TestRunner) -> Outcome {
    let s = proptest::collection::vec(vec3(0.5).prop_map(|p| p + Vector3::new(3.0, -2.0, 1.0)), 2..60);
    check(r, s, |points| {
        let mut stats = VoxelStats::default();
        for p in &points {
            stats.push(p);
        }
        let n = points.len() as f64;
        let mean = points.iter().sum::<Vector3<f64>>() / n;
        let batch = points.iter().map(|p| (p - mean) * (p - mean).transpose()).sum::<Matrix3<f64>>() / n;
        prop_assert!((stats.covariance() - batch).norm() <= 1e-9 * batch.norm().max(1e-12));
        prop_assert!(close(&stats.mean, &mean, 1e-12));
        Ok(())
    })
}

fn voxel_statistics_ignore_insertion_order(r: &mut TestRunner) -> Outcome {
    check(r, (proptest::collection::vec(vec3(2.0), 10..80), any::<u64>()), |(points, seed)| {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = points.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mut a = DualVoxelMap::new(VoxelMapConfig::default());
        let mut b = DualVoxelMap::new(VoxelMapConfig::default());
        a.insert_points(&points, &Vector3::zeros());
        b.insert_points(&shuffled, &Vector3::zeros());
        prop_assert_eq!(a.fine_len(), b.fine_len());
        prop_assert_eq!(a.coarse_len(), b.coarse_len());
        for p in &points {
            for (va, vb) in [(a.fine_voxel(p), b.fine_voxel(p)), (a.coarse_voxel(p), b.coarse_voxel(p))] {
                let (va, vb) = (va.unwrap(), vb.unwrap());
                prop_assert_eq!(va.count, vb.count);
                prop_assert!(close(&va.mean, &vb.mean, 1e-9));
                prop_assert!((va.covariance() - vb.covariance()).norm() <= 1e-9);
                prop_assert_eq!(va.normal.is_some(), vb.normal.is_some());
            }
        }
        Ok(())
    })
}

fn cell_entropy_shape(r: &mut TestRunner) -> Outcome {
    check(r, (0.0..=1.0f64, 0.0..10.0f64, 0.0..10.0f64), |(p, r1, r2)| {
        let (near, far) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(cell_entropy(p, far) <= cell_entropy(p, near));
        prop_assert!(cell_entropy(p, near) <= cell_entropy(0.5, near));
        prop_assert!((binary_entropy(p) - binary_entropy(1.0 - p)).abs() < 1e-12);
        prop_assert!((cell_entropy(p, r1) - (-r1).exp() * binary_entropy(p)).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&binary_entropy(p)));
        Ok(())
    })
}

fn resolution_shrinks_with_density(r: &mut TestRunner) -> Outcome {
    check(r, (0.1..1.0f64, 1usize..50_000, 1usize..50_000), |(d, n1, n2)| {
        let (lo, hi) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
        let bounds = (0.05, 2.0);
        prop_assert!(adapt_resolution(d, hi, 10_000, 0.1, bounds) <= adapt_resolution(d, lo, 10_000, 0.1, bounds));
        prop_assert_eq!(adapt_resolution(d, 10_000, 10_000, 0.1, bounds), d);
        Ok(())
    })
}

// --- estimator ---

fn residual_vanishes_on_plane_and_whitens(r: &mut TestRunner) -> Outcome {
    let s = (rotation(), vec3(5.0), nonzero(1.0, 1e-2), vec3(3.0), 0.01..100.0f64);
    check(r, s, |(rot, t, normal, offset, k)| {
        let n = normal.normalize();
        let center = Vector3::new(1.0, 2.0, 0.5);
        let in_plane = offset - n * n.dot(&offset);
        let world = center + in_plane;
        let xi = StateVector { position: t, attitude: rot, ..StateVector::default() };
        let body = rot.inverse() * (world - t);
        let cov = Matrix3::identity() * 1e-3 + n * n.transpose() * 1e-4;
        let plane = Plane { normal: n, center, covariance: cov, layer: Layer::Fine };
        let res = point_plane_residual(&body, &xi, &plane).unwrap();
        prop_assert!(res.value.abs() < 1e-9);
        let off = body + rot.inverse() * (n * 0.2);
        let a = point_plane_residual(&off, &xi, &plane).unwrap().value;
        let scaled = Plane { covariance: cov * k, ..plane };
        let b = point_plane_residual(&off, &xi, &scaled).unwrap().value;
        prop_assert!((b - a / k.sqrt()).abs() <= 1e-12 * a.abs().max(1.0));
        Ok(())
    })
}

fn degeneracy_projector_is_idempotent(r: &mut TestRunner) -> Outcome {
    check(r, (proptest::collection::vec(-2.0..2.0f64, 9), 0.0..0.5f64), |(m, theta)| {
        let a = Matrix3::from_row_slice(&m);
        let cov = a * a.transpose();
        let rep = detect_degeneracy(&cov, 0.75, theta);
        let p = rep.projection;
        prop_assert!((p * p - p).norm() < 1e-9);
        prop_assert!((p - p.transpose()).norm() < 1e-12);
        prop_assert!(rep.entropy <= 3f64.ln() + 1e-12);
        Ok(())
    })
}

fn entropy_extremes(r: &mut TestRunner) -> Outcome {
    check(r, (1e-3..1e3f64, nonzero(1.0, 1e-2)), |(scale, dir)| {
        let equal = detect_degeneracy(&(Matrix3::identity() * scale), 0.75, 0.05);
        prop_assert!((equal.entropy - 3f64.ln()).abs() < 1e-12);
        let d = dir.normalize();
        let rank1 = detect_degeneracy(&(d * d.transpose() * scale), 0.75, 0.05);
        prop_assert!(rank1.entropy.abs() < 1e-9);
        Ok(())
    })
}

// --- trajectory cost ---

fn jerk_energy_nonnegative_and_penalties_match_samples(r: &mut TestRunner) -> Outcome {
    let s = (vec3(3.0), vec3(3.0), 0.3..3.0f64, 0.3..3.0f64, 0.2..3.0f64);
    check(r, s, |(goal, q, t1, t2, vmax)| {
        let start = BoundaryState::rest(Vector3::zeros());
        let end = BoundaryState::rest(goal);
        let limits = PlannerLimits { vel_max: vmax, acc_max: 1e9, jer_max: 1e9, ..PlannerLimits::default() };
        let c = total_cost(&[q], &[t1, t2], &start, &end, &limits, None).unwrap();
        prop_assert!(c.smoothness >= 0.0);
        let traj = solve_coefficients(&[q], &[t1, t2], &start, &end).unwrap();
        let mut violated = false;
        for (i, tp) in [t1, t2].iter().enumerate() {
            let count = if i == 1 { SAMPLES_PER_PIECE + 1 } else { SAMPLES_PER_PIECE };
            for j in 0..count {
                let v = traj.eval_piece(i, tp * j as f64 / SAMPLES_PER_PIECE as f64, 1);
                violated |= v.norm_squared() > vmax * vmax;
            }
        }
        prop_assert_eq!(c.velocity > 0.0, violated);
        prop_assert_eq!(c.acceleration + c.jerk, 0.0);
        Ok(())
    })
}

// --- yaw planning ---

fn energy_cost_is_wrap_correct(r: &mut TestRunner) -> Outcome {
    check(r, (-10.0..10.0f64, -10.0..10.0f64, -3i32..3), |(a, b, k)| {
        let e = energy_cost(a, b);
        prop_assert!(e >= 0.0 && e <= PI * PI + 1e-12);
        prop_assert!((energy_cost(a + k as f64 * TAU, b) - e).abs() < 1e-9);
        prop_assert!((e - energy_cost(b, a)).abs() < 1e-9);
        prop_assert!((e.sqrt() - wrap_angle(a - b).abs()).abs() < 1e-12);
        Ok(())
    })
}

fn yaw_replan_is_deterministic_and_rate_limited(r: &mut TestRunner) -> Outcome {
    check(r, (any::<u64>(), -3.1..3.1f64, vec3(4.0)), |(seed, psi, target)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut grid = EntropyGrid::new(Vector3::new(-5.0, -5.0, 0.0), Vector3::new(5.0, 5.0, 2.0), 0.5, LogOddsParams::default());
        let [nx, ny, nz] = grid.dims();
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    grid.set_probability([i, j, k], rng.random_range(0.12..0.97));
                }
            }
        }
        let traj = solve_coefficients(
            &[],
            &[5.0],
            &BoundaryState::rest(Vector3::new(0.0, 0.0, 1.0)),
            &BoundaryState::rest(Vector3::new(2.0, 1.0, 1.0)),
        )
        .unwrap();
        let config = YawConfig::default();
        let obs = TargetObservation::at(target);
        let a = receding_replan(&traj, 0.5, psi, &grid, &obs, &config).unwrap();
        let b = receding_replan(&traj, 0.5, psi, &grid, &obs, &config).unwrap();
        prop_assert_eq!(&a, &b);
        let span = config.omega_max * config.dt;
        for w in a.points.windows(2) {
            prop_assert!(wrap_angle(w[1].1 - w[0].1).abs() <= span);
        }
        let graph = build_layers(&traj, 0.5, psi, &config).unwrap();
        prop_assert_eq!(graph.layers.len(), a.layers);
        Ok(())
    })
}

fn update_pipeline_replays_exactly(r: &mut TestRunner) -> Outcome {
    check(r, (vec3(0.1), -0.05..0.05f64), |(offset, yaw)| {
        let mut world = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                let (u, v) = (-4.0 + 0.2 * i as f64, -4.0 + 0.2 * j as f64);
                world.push(Vector3::new(u, v, -0.5));
                world.push(Vector3::new(4.5, u, 0.1 * v + 0.5));
                world.push(Vector3::new(u, 4.5, 0.1 * v + 0.5));
            }
        }
        let mut map = DualVoxelMap::new(VoxelMapConfig::default());
        map.insert_points(&world, &Vector3::zeros());
        let prior = StateVector { position: offset, attitude: Rotation::rot_z(yaw), ..StateVector::default() };
        let cov = Covariance::identity() * 1e-2;
        let a = ieskf_update(&prior, &cov, &world, &map, &LioConfig::default());
        let b = ieskf_update(&prior, &cov, &world, &map, &LioConfig::default());
        prop_assert_eq!(a.state, b.state);
        prop_assert_eq!(a.covariance, b.covariance);
        prop_assert_eq!(a.report.iterations, b.report.iterations);
        Ok(())
    })
}
