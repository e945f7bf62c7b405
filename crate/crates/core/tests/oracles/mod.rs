//! Brute-force references and synthetic scenes shared by the integration
//! suites and the acceptance run.

#![allow(dead_code)]

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tiltnav_core::entropy::{EntropyGrid, LogOddsParams};
use tiltnav_core::lio::Covariance;
use tiltnav_core::state::StateVector;
use tiltnav_core::traj::{solve_coefficients, BoundaryState, DistanceField, PiecewiseTrajectory};
use tiltnav_core::voxel::{DualVoxelMap, VoxelMapConfig};
use tiltnav_core::yaw::YawGraph;

/// Best path by enumerating every index combination; ties go to the
/// lexicographically smallest index path.
pub fn exhaustive<F: Fn(usize, f64, usize) -> f64>(graph: &YawGraph, reward: F) -> (Vec<usize>, f64) {
    let n = graph.layers.len();
    let sizes: Vec<usize> = graph.layers.iter().map(|l| l.indices.len()).collect();
    let mut choice = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let mut prev = graph.start_yaw;
        let mut total = 0.0;
        let mut ok = true;
        for k in 0..n {
            let yaw = graph.lattice[graph.layers[k].indices[choice[k]]];
            if !graph.edge_allowed(k, prev, yaw) {
                ok = false;
                break;
            }
            total += reward(k, prev, choice[k]);
            prev = yaw;
        }
        if ok {
            let path: Vec<usize> = (0..n).map(|k| graph.layers[k].indices[choice[k]]).collect();
            let better = match &best {
                None => true,
                Some((p, v)) => total > *v + 1e-12 || ((total - v).abs() <= 1e-12 && path < *p),
            };
            if better {
                best = Some((path, total));
            }
        }
        let mut k = n;
        loop {
            if k == 0 {
                return best.expect("some path is feasible");
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < sizes[k] {
                break;
            }
            choice[k] = 0;
        }
    }
}

pub fn path_traj(rng: &mut ChaCha8Rng) -> PiecewiseTrajectory {
    let goal = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 1.0);
    solve_coefficients(
        &[],
        &[4.0],
        &BoundaryState::rest(Vector3::new(0.0, 0.0, 1.0)),
        &BoundaryState::rest(goal),
    )
    .unwrap()
}

pub fn random_grid(rng: &mut ChaCha8Rng) -> EntropyGrid {
    let mut grid = EntropyGrid::new(
        Vector3::new(-4.0, -4.0, 0.0),
        Vector3::new(4.0, 4.0, 2.0),
        0.5,
        LogOddsParams::default(),
    );
    let [nx, ny, nz] = grid.dims();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let p = match rng.random_range(0..3) {
                    0 => 0.5,
                    1 => 0.12,
                    _ => rng.random_range(0.12..0.97),
                };
                grid.set_probability([i, j, k], p);
            }
        }
    }
    grid
}

/// Smooth field around two spheres so finite differences see no kinks
/// beyond the trilinear cell seams.
pub fn sphere_field() -> DistanceField {
    let centers = [Vector3::new(1.0, 0.7, 0.0), Vector3::new(2.5, -0.6, 0.3)];
    DistanceField::from_fn(Vector3::new(-1.5, -2.5, -2.0), [40, 20, 16], 0.25, move |p| {
        centers
            .iter()
            .map(|c| (p - c).norm() - 0.3)
            .fold(f64::INFINITY, f64::min)
    })
}

/// Samples an axis-aligned rectangle `fixed_axis = value` over the two other
/// axes' ranges with spacing `step`.
pub fn rect(fixed_axis: usize, value: f64, a: (f64, f64), b: (f64, f64), step: f64) -> Vec<Vector3<f64>> {
    let (u, v) = match fixed_axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut out = Vec::new();
    let (na, nb) = (((a.1 - a.0) / step) as usize, ((b.1 - b.0) / step) as usize);
    for i in 0..=na {
        for j in 0..=nb {
            let mut p = Vector3::zeros();
            p[fixed_axis] = value;
            p[u] = a.0 + i as f64 * step;
            p[v] = b.0 + j as f64 * step;
            out.push(p);
        }
    }
    out
}

pub fn room(step: f64) -> Vec<Vector3<f64>> {
    // Planes sit mid-way through coarse voxels so that shifted points still
    // land in a populated cell.
    let mut pts = rect(2, -0.5, (-4.0, 4.0), (-4.0, 4.0), step);
    pts.extend(rect(0, 4.5, (-4.0, 4.0), (-0.4, 2.0), step));
    pts.extend(rect(1, 4.5, (-4.0, 4.0), (-0.4, 2.0), step));
    pts
}

pub fn corridor(step: f64) -> Vec<Vector3<f64>> {
    let mut pts = rect(2, -0.5, (-9.93, 9.93), (-1.4, 1.4), step);
    pts.extend(rect(1, 1.5, (-9.93, 9.93), (-0.4, 2.0), step));
    pts.extend(rect(1, -1.5, (-9.93, 9.93), (-0.4, 2.0), step));
    pts
}

pub fn build_map(world: &[Vector3<f64>]) -> DualVoxelMap {
    let mut map = DualVoxelMap::new(VoxelMapConfig::default());
    map.insert_points(world, &Vector3::zeros());
    map
}

pub fn to_body(world: &[Vector3<f64>], truth: &StateVector) -> Vec<Vector3<f64>> {
    let inv = truth.attitude.inverse();
    world.iter().map(|p| inv * (p - truth.position)).collect()
}

pub fn prior_cov(pos: f64, rot: f64) -> Covariance {
    let mut p = Covariance::identity() * 1e-2;
    for k in 0..3 {
        p[(k, k)] = pos * pos;
        p[(3 + k, 3 + k)] = rot * rot;
    }
    p
}
