//! Ring detection by RANSAC over three-point circles.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::Rng;

use tiltnav_core::voxel::sorted_eigen;

pub const MIN_CANDIDATES: usize = 10;
pub const INLIER_TOLERANCE: f64 = 0.03;
pub const MIN_INLIER_FRACTION: f64 = 0.6;
/// Hypotheses whose radius differs from the prior by more than this
/// fraction are discarded without scoring.
pub const RADIUS_SLACK: f64 = 0.25;
pub const ITERATIONS: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingDetection {
    pub center: Vector3<f64>,
    /// Unit normal of the ring plane, sign fixed so the first nonzero
    /// component is positive.
    pub normal: Vector3<f64>,
    pub radius: f64,
    pub inlier_fraction: f64,
}

#[derive(Clone, Copy, Debug)]
struct Circle {
    center: Vector3<f64>,
    normal: Vector3<f64>,
    radius: f64,
}

impl Circle {
    fn through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Self> {
        let u = b - a;
        let v = c - a;
        let n = u.cross(&v);
        let nn = n.norm_squared();
        if nn < 1e-12 * u.norm_squared() * v.norm_squared() || nn == 0.0 {
            return None;
        }
        let offset = (v * u.norm_squared() - u * v.norm_squared()).cross(&n) / (2.0 * nn);
        Some(Self {
            center: a + offset,
            normal: n / nn.sqrt(),
            radius: offset.norm(),
        })
    }

    fn distance(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.center;
        let axial = self.normal.dot(&d);
        let radial = (d - self.normal * axial).norm();
        axial.hypot(radial - self.radius)
    }
}

fn canonical_normal(n: Vector3<f64>) -> Vector3<f64> {
    let first = n.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
    if first < 0.0 {
        -n
    } else {
        n
    }
}

/// Plane fit followed by an algebraic circle fit inside that plane.
fn refine(points: &[Vector3<f64>]) -> Option<Circle> {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n;
    let (_, vecs) = sorted_eigen(&cov);
    let (e1, e2, normal) = (vecs[0], vecs[1], vecs[2]);
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in points {
        let d = p - mean;
        let (x, y) = (d.dot(&e1), d.dot(&e2));
        let row = Vector3::new(x, y, 1.0);
        ata += row * row.transpose();
        atb -= row * (x * x + y * y);
    }
    let sol = ata.lu().solve(&atb)?;
    let (cx, cy) = (-sol.x / 2.0, -sol.y / 2.0);
    let r2 = cx * cx + cy * cy - sol.z;
    if !(r2 > 0.0) {
        return None;
    }
    Some(Circle {
        center: mean + e1 * cx + e2 * cy,
        normal,
        radius: r2.sqrt(),
    })
}

/// Finds a ring of roughly `radius_prior` among `points`, or `None` when
/// no circle explains enough of them.
pub fn detect_ring<R: Rng + ?Sized>(points: &[Vector3<f64>], radius_prior: f64, rng: &mut R) -> Option<RingDetection> {
    if points.len() < MIN_CANDIDATES || !(radius_prior > 0.0) {
        return None;
    }
    let mut best: Option<(usize, Circle)> = None;
    for _ in 0..ITERATIONS {
        let idx = sample(rng, points.len(), 3);
        let Some(circle) = Circle::through(&points[idx.index(0)], &points[idx.index(1)], &points[idx.index(2)]) else {
            continue;
        };
        if (circle.radius - radius_prior).abs() > RADIUS_SLACK * radius_prior {
            continue;
        }
        let count = points.iter().filter(|p| circle.distance(p) <= INLIER_TOLERANCE).count();
        if best.as_ref().map_or(true, |(c, _)| count > *c) {
            best = Some((count, circle));
        }
    }
    let (count, circle) = best?;
    if (count as f64) < MIN_INLIER_FRACTION * points.len() as f64 {
        return None;
    }
    let inliers: Vec<_> = points
        .iter()
        .copied()
        .filter(|p| circle.distance(p) <= INLIER_TOLERANCE)
        .collect();
    let fitted = refine(&inliers).unwrap_or(circle);
    // Keep the hypothesis if refinement wandered off the prior.
    let fitted = if (fitted.radius - radius_prior).abs() > RADIUS_SLACK * radius_prior {
        circle
    } else {
        fitted
    };
    Some(RingDetection {
        center: fitted.center,
        normal: canonical_normal(fitted.normal),
        radius: fitted.radius,
        inlier_fraction: count as f64 / points.len() as f64,
    })
}
