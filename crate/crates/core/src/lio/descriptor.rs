//! Rotation-invariant place descriptors from real spherical harmonics.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::state::Pose;

/// Highest supported band.
pub const MAX_BAND: usize = 6;

/// Spherical-harmonic expansion of a range-weighted angular point density.
#[derive(Clone, Debug, PartialEq)]
pub struct ShDescriptor {
    pub max_band: usize,
    /// Real-basis coefficients, `a_lm` stored at index `l² + l + m`.
    pub coefficients: Vec<f64>,
    /// `Σ_m a_lm²` per band.
    pub band_energy: Vec<f64>,
}

impl ShDescriptor {
    /// # Panics
    /// If `l` exceeds the descriptor band or `|m| > l`.
    pub fn coefficient(&self, l: usize, m: i64) -> f64 {
        assert!(l <= self.max_band && m.unsigned_abs() as usize <= l, "no coefficient ({l}, {m})");
        self.coefficients[((l * l + l) as i64 + m) as usize]
    }

    fn signature(&self) -> Vec<f64> {
        self.band_energy.iter().map(|e| e.sqrt()).collect()
    }
}

/// Associated Legendre values `P_l^m(x)` for `0 ≤ m ≤ l ≤ max_band`,
/// without the Condon–Shortley phase, indexed `[l][m]`.
fn legendre(x: f64, max_band: usize) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut p = vec![vec![0.0; max_band + 1]; max_band + 1];
    p[0][0] = 1.0;
    for m in 1..=max_band {
        p[m][m] = p[m - 1][m - 1] * (2 * m - 1) as f64 * s;
    }
    for m in 0..max_band {
        p[m + 1][m] = (2 * m + 1) as f64 * x * p[m][m];
    }
    for m in 0..=max_band {
        for l in (m + 2)..=max_band {
            p[l][m] = ((2 * l - 1) as f64 * x * p[l - 1][m] - (l + m - 1) as f64 * p[l - 2][m])
                / (l - m) as f64;
        }
    }
    p
}

fn factorial_ratio(l: usize, m: usize) -> f64 {
    // (l−m)!/(l+m)!
    ((l - m + 1)..=(l + m)).fold(1.0, |acc, k| acc / k as f64)
}

/// Real spherical harmonics `Y_lm(θ, φ)` (θ polar, φ azimuth), orthonormal
/// over the unit sphere, stored at `l² + l + m`.
fn real_harmonics(theta: f64, phi: f64, max_band: usize) -> Vec<f64> {
    let p = legendre(theta.cos(), max_band);
    let mut out = vec![0.0; (max_band + 1) * (max_band + 1)];
    for l in 0..=max_band {
        let base = l * l + l;
        for m in 0..=l {
            let k = ((2 * l + 1) as f64 / (4.0 * PI) * factorial_ratio(l, m)).sqrt();
            if m == 0 {
                out[base] = k * p[l][0];
            } else {
                let scaled = std::f64::consts::SQRT_2 * k * p[l][m];
                out[base + m] = scaled * (m as f64 * phi).cos();
                out[base - m] = scaled * (m as f64 * phi).sin();
            }
        }
    }
    out
}

/// Projects the neighbourhood `points` (platform frame) onto spherical
/// harmonics up to `max_band`, each point weighted by its range.
///
/// # Panics
/// If `max_band` exceeds [`MAX_BAND`].
pub fn sh_descriptor(points: &[Vector3<f64>], max_band: usize) -> ShDescriptor {
    assert!(max_band <= MAX_BAND, "band {max_band} above {MAX_BAND}");
    let n = (max_band + 1) * (max_band + 1);
    let mut coefficients = vec![0.0; n];
    for p in points {
        let r = p.norm();
        if !(r > 0.0) || !r.is_finite() {
            continue;
        }
        let theta = (p.z / r).clamp(-1.0, 1.0).acos();
        let phi = p.y.atan2(p.x);
        for (c, y) in coefficients.iter_mut().zip(real_harmonics(theta, phi, max_band)) {
            *c += r * y;
        }
    }
    let band_energy = (0..=max_band)
        .map(|l| coefficients[l * l..(l + 1) * (l + 1)].iter().map(|a| a * a).sum())
        .collect();
    ShDescriptor {
        max_band,
        coefficients,
        band_energy,
    }
}

/// Relative distance between the square-root band-energy signatures.
/// Zero for identical descriptors, infinite when exactly one is empty.
pub fn descriptor_distance(a: &ShDescriptor, b: &ShDescriptor) -> f64 {
    let (sa, sb) = (a.signature(), b.signature());
    let bands = sa.len().min(sb.len());
    let diff: f64 = (0..bands).map(|l| (sa[l] - sb[l]).powi(2)).sum::<f64>().sqrt();
    let scale = 0.5
        * (sa[..bands].iter().map(|x| x * x).sum::<f64>().sqrt()
            + sb[..bands].iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        if diff == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        diff / scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    pub index: usize,
    pub pose: Pose,
    pub distance: f64,
}

/// Nearest database entry by [`descriptor_distance`], if closer than
/// `threshold`. Ties resolve to the lowest index.
pub fn relocalize(
    descriptor: &ShDescriptor,
    candidate_db: &[(Pose, ShDescriptor)],
    threshold: f64,
) -> Option<Match> {
    let mut best: Option<Match> = None;
    for (index, (pose, cand)) in candidate_db.iter().enumerate() {
        let distance = descriptor_distance(descriptor, cand);
        if best.is_none_or(|b| distance < b.distance) {
            best = Some(Match {
                index,
                pose: *pose,
                distance,
            });
        }
    }
    best.filter(|b| b.distance < threshold)
}

/// Keyframe descriptors sampled at fixed travel intervals.
#[derive(Clone, Debug)]
pub struct KeyframeDatabase {
    pub spacing: f64,
    pub max_band: usize,
    /// Only points within this range of the keyframe enter its descriptor.
    pub radius: f64,
    pub entries: Vec<(Pose, ShDescriptor)>,
    travelled: f64,
    last: Option<Vector3<f64>>,
}

impl KeyframeDatabase {
    pub fn new(spacing: f64, max_band: usize, radius: f64) -> Self {
        Self {
            spacing,
            max_band,
            radius,
            entries: Vec::new(),
            travelled: 0.0,
            last: None,
        }
    }

    pub fn describe(&self, points_body: &[Vector3<f64>]) -> ShDescriptor {
        let r2 = self.radius * self.radius;
        let near: Vec<_> = points_body
            .iter()
            .filter(|p| p.norm_squared() <= r2)
            .copied()
            .collect();
        sh_descriptor(&near, self.max_band)
    }

    /// Accumulates travel and stores a keyframe when the spacing is reached
    /// (always for the first call). Returns whether one was stored.
    pub fn observe(&mut self, pose: &Pose, points_body: &[Vector3<f64>]) -> bool {
        if let Some(last) = self.last {
            self.travelled += (pose.translation - last).norm();
        }
        self.last = Some(pose.translation);
        if !self.entries.is_empty() && self.travelled < self.spacing {
            return false;
        }
        self.travelled = 0.0;
        let d = self.describe(points_body);
        self.entries.push((*pose, d));
        true
    }

    pub fn query(&self, points_body: &[Vector3<f64>], threshold: f64) -> Option<Match> {
        if self.entries.is_empty() {
            return None;
        }
        relocalize(&self.describe(points_body), &self.entries, threshold)
    }
}
