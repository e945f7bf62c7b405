//! LiDAR-inertial estimator: whitened point-to-plane residuals, constraint
//! degeneracy analysis and the iterated error-state Kalman update.

mod descriptor;
mod odometry;

pub use descriptor::{
    descriptor_distance, relocalize, sh_descriptor, KeyframeDatabase, Match, ShDescriptor,
    MAX_BAND,
};
pub use odometry::{
    propagate_covariance, LidarInertialOdometry, OdometryConfig, OdometryError, ScanDiagnostics,
};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use thiserror::Error;

use crate::so3::hat;
use crate::state::{ErrorState, ErrorVector, StateVector, ERROR_DIM, POS, ROT};
use crate::voxel::{sorted_eigen, DualVoxelMap, Plane};

pub type Covariance = SMatrix<f64, ERROR_DIM, ERROR_DIM>;

/// Plane uncertainties `nᵀΣn` at or below this are treated as a failed fit.
pub const MIN_PLANE_VARIANCE: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LioError {
    #[error("plane normal has norm {0}, expected 1")]
    NonUnitNormal(f64),
    #[error("plane variance along the normal is {0}")]
    DegeneratePlane(f64),
    #[error("non-finite residual")]
    NonFinite,
}

/// One whitened point-to-plane constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub value: f64,
    /// Derivative of `value` with respect to the 18 error-state components.
    pub jacobian: ErrorVector,
    /// Point in the IMU frame at the update epoch.
    pub point: Vector3<f64>,
    pub plane: Plane,
}

/// Residual of the body-frame point `p_body` mapped through `xi` against
/// `plane`, whitened by the plane covariance along its normal.
pub fn point_plane_residual(
    p_body: &Vector3<f64>,
    xi: &StateVector,
    plane: &Plane,
) -> Result<Residual, LioError> {
    let n = plane.normal;
    let norm = n.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(LioError::NonUnitNormal(norm));
    }
    let var = n.dot(&(plane.covariance * n));
    if !(var > MIN_PLANE_VARIANCE) {
        return Err(LioError::DegeneratePlane(var));
    }
    let sigma = var.sqrt();
    let rot = xi.attitude.matrix();
    let p_world = rot * p_body + xi.position;
    let value = n.dot(&(p_world - plane.center)) / sigma;
    // d(R exp(δφ) p)/dδφ = −R [p]×
    let d_rot = -(n.transpose() * rot * hat(p_body)) / sigma;
    let mut jacobian = ErrorVector::zeros();
    jacobian.fixed_rows_mut::<3>(POS).copy_from(&(n / sigma));
    jacobian
        .fixed_rows_mut::<3>(ROT)
        .copy_from(&d_rot.transpose());
    if !value.is_finite() || !jacobian.iter().all(|c| c.is_finite()) {
        return Err(LioError::NonFinite);
    }
    Ok(Residual {
        value,
        jacobian,
        point: *p_body,
        plane: *plane,
    })
}

/// Eigen-structure of a constraint matrix and the projector onto its weak
/// directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegeneracyReport {
    pub entropy: f64,
    /// Normalised eigenvalues in descending order, summing to one.
    pub ratios: Vector3<f64>,
    pub eigenvectors: [Vector3<f64>; 3],
    pub degenerate: bool,
    pub projection: Matrix3<f64>,
}

/// Shannon entropy of the normalised eigenvalue spectrum of `local_cov`;
/// eigen-directions whose share falls below `theta_th` span the projector.
pub fn detect_degeneracy(local_cov: &Matrix3<f64>, h_th: f64, theta_th: f64) -> DegeneracyReport {
    let sym = 0.5 * (local_cov + local_cov.transpose());
    let (vals, vecs) = sorted_eigen(&sym);
    let vals = vals.map(|v| v.max(0.0));
    let mass = vals.sum();
    if !(mass > 0.0) || !mass.is_finite() {
        return DegeneracyReport {
            entropy: 0.0,
            ratios: Vector3::zeros(),
            eigenvectors: vecs,
            degenerate: true,
            projection: Matrix3::identity(),
        };
    }
    let ratios = vals / mass;
    let entropy = -ratios
        .iter()
        .filter(|g| **g > 0.0)
        .map(|g| g * g.ln())
        .sum::<f64>();
    let mut projection = Matrix3::zeros();
    for (g, v) in ratios.iter().zip(vecs.iter()) {
        if *g < theta_th {
            projection += v * v.transpose();
        }
    }
    DegeneracyReport {
        entropy,
        ratios,
        eigenvectors: vecs,
        degenerate: entropy < h_th,
        projection,
    }
}

/// Population covariance of a point set.
pub fn point_covariance(points: &[Vector3<f64>]) -> Matrix3<f64> {
    if points.is_empty() {
        return Matrix3::zeros();
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    points
        .iter()
        .map(|p| (p - mean) * (p - mean).transpose())
        .sum::<Matrix3<f64>>()
        / n
}

/// Mean outer product `E[n nᵀ]` of plane normals. A translation along `d`
/// is observable in proportion to `dᵀ E[n nᵀ] d`.
pub fn normal_moment(normals: &[Vector3<f64>]) -> Matrix3<f64> {
    if normals.is_empty() {
        return Matrix3::zeros();
    }
    normals.iter().map(|n| n * n.transpose()).sum::<Matrix3<f64>>() / normals.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LioConfig {
    pub h_th: f64,
    pub theta_th: f64,
    /// Information added along degenerate directions.
    pub damping: f64,
    pub min_matches: usize,
    pub max_iterations: usize,
    pub convergence: f64,
    /// Isotropic point noise (m) added to every plane covariance.
    pub point_sigma: f64,
    /// Matches farther than this from the plane (m) are discarded.
    pub max_plane_distance: f64,
    /// Planes whose standard deviation along the normal exceeds this (m)
    /// are not matched. Voxels straddling two surfaces can still pass the
    /// planarity ratio and would bias the fit.
    pub max_plane_thickness: f64,
}

impl Default for LioConfig {
    fn default() -> Self {
        Self {
            h_th: 0.75,
            theta_th: 0.05,
            damping: 1e3,
            min_matches: 50,
            max_iterations: 5,
            convergence: 1e-6,
            point_sigma: 0.02,
            max_plane_distance: 0.5,
            max_plane_thickness: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateReport {
    pub iterations: usize,
    pub matched: usize,
    /// Set when fewer than the minimum number of points matched.
    pub skipped: bool,
    pub degeneracy: Option<DegeneracyReport>,
    /// Norm of each applied iteration step.
    pub step_norms: Vec<f64>,
    /// State after each iteration, starting with the prior.
    pub iterates: Vec<StateVector>,
}

pub struct UpdateOutcome {
    pub state: StateVector,
    pub covariance: Covariance,
    pub report: UpdateReport,
}

struct Linearization {
    hessian: SMatrix<f64, 6, 6>,
    gradient: SVector<f64, 6>,
    normals: Vec<Vector3<f64>>,
}

fn linearize(
    xi: &StateVector,
    scan_body: &[Vector3<f64>],
    map: &DualVoxelMap,
    config: &LioConfig,
) -> Linearization {
    let mut lin = Linearization {
        hessian: SMatrix::zeros(),
        gradient: SVector::zeros(),
        normals: Vec::new(),
    };
    let rot = xi.attitude.matrix();
    let noise = Matrix3::identity() * config.point_sigma * config.point_sigma;
    for p in scan_body {
        let p_world = rot * p + xi.position;
        let Some(mut plane) = map.query_plane(&p_world) else {
            continue;
        };
        if plane.normal.dot(&(p_world - plane.center)).abs() > config.max_plane_distance
            || plane.normal.dot(&(plane.covariance * plane.normal)) > config.max_plane_thickness.powi(2)
        {
            continue;
        }
        plane.covariance += noise;
        let Ok(r) = point_plane_residual(p, xi, &plane) else {
            continue;
        };
        let j: SVector<f64, 6> = r.jacobian.fixed_rows::<6>(0).into_owned();
        lin.hessian += j * j.transpose();
        lin.gradient += j * r.value;
        lin.normals.push(plane.normal);
    }
    lin
}

/// Iterated error-state update of `xi_prior` against the map.
///
/// Each iteration solves the Gauss–Newton system of the posterior
/// `‖r(ξ)‖² + ‖ξ ⊟ ξ_prior‖²_{P⁻¹}` with correspondences re-associated at
/// the current iterate. Directions flagged by [`detect_degeneracy`] on the
/// matched plane normals receive extra information in the position and
/// attitude blocks.
pub fn ieskf_update(
    xi_prior: &StateVector,
    p_prior: &Covariance,
    scan_body: &[Vector3<f64>],
    map: &DualVoxelMap,
    config: &LioConfig,
) -> UpdateOutcome {
    let p_sym = 0.5 * (p_prior + p_prior.transpose());
    let info_prior = p_sym
        .try_inverse()
        .unwrap_or_else(|| p_sym.pseudo_inverse(1e-12).expect("svd of a symmetric matrix"));
    let mut report = UpdateReport {
        iterations: 0,
        matched: 0,
        skipped: false,
        degeneracy: None,
        step_norms: Vec::new(),
        iterates: vec![*xi_prior],
    };
    let mut xi = *xi_prior;
    let mut info_post = info_prior;
    for _ in 0..config.max_iterations.max(1) {
        let lin = linearize(&xi, scan_body, map, config);
        report.matched = lin.normals.len();
        if lin.normals.len() < config.min_matches {
            if report.iterations == 0 {
                report.skipped = true;
                return UpdateOutcome {
                    state: *xi_prior,
                    covariance: *p_prior,
                    report,
                };
            }
            break;
        }
        let degen = detect_degeneracy(&normal_moment(&lin.normals), config.h_th, config.theta_th);
        report.degeneracy = Some(degen);

        let mut info = info_prior;
        let mut block = info.fixed_view_mut::<6, 6>(0, 0);
        block += &lin.hessian;
        info_post = info;
        if degen.degenerate {
            let damp = degen.projection * config.damping;
            let mut pos = info.fixed_view_mut::<3, 3>(POS, POS);
            pos += &damp;
            let mut rot = info.fixed_view_mut::<3, 3>(ROT, ROT);
            rot += &damp;
        }
        let offset = xi_prior.local(&xi).0;
        let mut rhs: ErrorVector = -(info_prior * offset);
        let mut head = rhs.fixed_rows_mut::<6>(0);
        head -= &lin.gradient;
        let step = match info.cholesky() {
            Some(c) => c.solve(&rhs),
            None => match info.lu().solve(&rhs) {
                Some(s) => s,
                None => break,
            },
        };
        if !step.iter().all(|c| c.is_finite()) {
            break;
        }
        xi = xi.retract(&ErrorState(step));
        report.iterations += 1;
        report.step_norms.push(step.norm());
        report.iterates.push(xi);
        if step.norm() < config.convergence {
            break;
        }
    }
    let covariance = info_post
        .try_inverse()
        .map(|c| 0.5 * (c + c.transpose()))
        .unwrap_or(*p_prior);
    UpdateOutcome {
        state: xi,
        covariance,
        report,
    }
}
