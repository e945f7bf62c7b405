//! Dual-resolution voxel hash map holding incremental plane statistics.
//!
//! Every inserted point updates the running mean and scatter of its voxel
//! in both the fine and the coarse layer. Only points within the activation
//! radius of the platform are inserted. Normals and eigenvalues of touched
//! voxels are refreshed once per insertion batch, so readers always see a
//! consistent snapshot between batches.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;
use std::io::{self, Write};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

/// Hash map with a fixed-key hasher so iteration order is reproducible.
pub type DetHashMap<K, V> = HashMap<K, V, BuildHasherDefault<DefaultHasher>>;

/// Minimum voxel population before a plane is fitted.
pub const MIN_FIT_POINTS: usize = 6;
/// Maximum `λ3/λ1` for a voxel to count as planar.
pub const PLANARITY_RATIO: f64 = 0.1;
/// Minimum `λ2/λ1`; below it the points are collinear and the normal is
/// undetermined.
pub const LINEARITY_RATIO: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey(pub [i64; 3]);

impl VoxelKey {
    pub fn from_point(p: &Vector3<f64>, resolution: f64) -> Self {
        VoxelKey([
            (p.x / resolution).floor() as i64,
            (p.y / resolution).floor() as i64,
            (p.z / resolution).floor() as i64,
        ])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelStats {
    pub count: usize,
    pub mean: Vector3<f64>,
    scatter: Matrix3<f64>,
    /// Unit normal, present once `count ≥ MIN_FIT_POINTS`.
    pub normal: Option<Vector3<f64>>,
    /// Eigenvalues of the covariance, sorted descending.
    pub eigenvalues: Vector3<f64>,
    pub last_touched: u64,
    dirty: bool,
}

impl Default for VoxelStats {
    fn default() -> Self {
        Self {
            count: 0,
            mean: Vector3::zeros(),
            scatter: Matrix3::zeros(),
            normal: None,
            eigenvalues: Vector3::zeros(),
            last_touched: 0,
            dirty: false,
        }
    }
}

impl VoxelStats {
    /// Welford update of mean and scatter.
    pub fn push(&mut self, p: &Vector3<f64>) {
        self.count += 1;
        let n = self.count as f64;
        let delta = p - self.mean;
        self.mean += delta / n;
        self.scatter += delta * delta.transpose() * ((n - 1.0) / n);
        self.dirty = true;
    }

    /// Population covariance of the member points.
    pub fn covariance(&self) -> Matrix3<f64> {
        if self.count == 0 {
            Matrix3::zeros()
        } else {
            self.scatter / self.count as f64
        }
    }

    pub fn refresh(&mut self) {
        self.dirty = false;
        if self.count < MIN_FIT_POINTS {
            self.normal = None;
            self.eigenvalues = Vector3::zeros();
            return;
        }
        let (values, vectors) = sorted_eigen(&self.covariance());
        self.eigenvalues = values;
        self.normal = Some(vectors[2]);
    }

    pub fn is_planar(&self) -> bool {
        self.normal.is_some()
            && self.eigenvalues[0] > 0.0
            && self.eigenvalues[2] / self.eigenvalues[0] < PLANARITY_RATIO
            && self.eigenvalues[1] / self.eigenvalues[0] > LINEARITY_RATIO
    }
}

/// Eigen-decomposition of a symmetric 3×3 matrix, eigenvalues descending.
/// Eigenvectors are unit length with their largest-magnitude component
/// made positive so results are reproducible.
pub fn sorted_eigen(m: &Matrix3<f64>) -> (Vector3<f64>, [Vector3<f64>; 3]) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let vectors = order.map(|i| {
        let mut v: Vector3<f64> = eig.eigenvectors.column(i).into_owned().normalize();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        v
    });
    (values, vectors)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Fine,
    Coarse,
}

/// Local plane returned by [`DualVoxelMap::query_plane`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub center: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub layer: Layer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelMapConfig {
    pub fine_resolution: f64,
    pub coarse_resolution: f64,
    pub activation_radius: f64,
    pub min_resolution: f64,
    pub max_resolution: f64,
}

impl Default for VoxelMapConfig {
    fn default() -> Self {
        Self {
            fine_resolution: 0.25,
            coarse_resolution: 1.0,
            activation_radius: 30.0,
            min_resolution: 0.1,
            max_resolution: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InsertSummary {
    pub inserted: usize,
    pub outside_radius: usize,
    pub fine_touched: usize,
    pub coarse_touched: usize,
}

#[derive(Clone, Debug)]
pub struct DualVoxelMap {
    config: VoxelMapConfig,
    fine: DetHashMap<VoxelKey, VoxelStats>,
    coarse: DetHashMap<VoxelKey, VoxelStats>,
    /// Current adaptive scan-filter resolution.
    pub resolution: f64,
    batch: u64,
}

impl DualVoxelMap {
    /// # Panics
    /// If the layer resolutions are not `0 < fine < coarse`.
    pub fn new(config: VoxelMapConfig) -> Self {
        assert!(
            config.fine_resolution > 0.0 && config.coarse_resolution > config.fine_resolution,
            "voxel layers must satisfy 0 < fine < coarse"
        );
        Self {
            resolution: config.fine_resolution,
            config,
            fine: DetHashMap::default(),
            coarse: DetHashMap::default(),
            batch: 0,
        }
    }

    pub fn config(&self) -> &VoxelMapConfig {
        &self.config
    }

    pub fn fine_len(&self) -> usize {
        self.fine.len()
    }

    pub fn coarse_len(&self) -> usize {
        self.coarse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }

    pub fn fine_voxel(&self, p: &Vector3<f64>) -> Option<&VoxelStats> {
        self.fine.get(&VoxelKey::from_point(p, self.config.fine_resolution))
    }

    pub fn coarse_voxel(&self, p: &Vector3<f64>) -> Option<&VoxelStats> {
        self.coarse.get(&VoxelKey::from_point(p, self.config.coarse_resolution))
    }

    pub fn insert_points(
        &mut self,
        points: &[Vector3<f64>],
        platform: &Vector3<f64>,
    ) -> InsertSummary {
        self.batch += 1;
        let mut summary = InsertSummary::default();
        let mut fine_keys = Vec::new();
        let mut coarse_keys = Vec::new();
        let r2 = self.config.activation_radius * self.config.activation_radius;
        for p in points {
            if !p.iter().all(|c| c.is_finite()) || (p - platform).norm_squared() > r2 {
                summary.outside_radius += 1;
                continue;
            }
            summary.inserted += 1;
            for (layer, res, keys) in [
                (&mut self.fine, self.config.fine_resolution, &mut fine_keys),
                (&mut self.coarse, self.config.coarse_resolution, &mut coarse_keys),
            ] {
                let key = VoxelKey::from_point(p, res);
                let stats = layer.entry(key).or_default();
                if !stats.dirty {
                    keys.push(key);
                }
                stats.push(p);
                stats.last_touched = self.batch;
            }
        }
        summary.fine_touched = fine_keys.len();
        summary.coarse_touched = coarse_keys.len();
        for key in fine_keys {
            if let Some(s) = self.fine.get_mut(&key) {
                s.refresh();
            }
        }
        for key in coarse_keys {
            if let Some(s) = self.coarse.get_mut(&key) {
                s.refresh();
            }
        }
        summary
    }

    /// Plane of the fine voxel containing `p` if it is populated and planar,
    /// otherwise that of the coarse voxel, otherwise `None`.
    pub fn query_plane(&self, p: &Vector3<f64>) -> Option<Plane> {
        let pick = |stats: Option<&VoxelStats>, layer| {
            stats.filter(|s| s.is_planar()).map(|s| Plane {
                normal: s.normal.expect("planar voxel has a normal"),
                center: s.mean,
                covariance: s.covariance(),
                layer,
            })
        };
        pick(self.fine_voxel(p), Layer::Fine).or_else(|| pick(self.coarse_voxel(p), Layer::Coarse))
    }

    /// Writes fine-voxel centroids as an ASCII PLY point cloud.
    pub fn write_ply<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut keys: Vec<_> = self.fine.keys().copied().collect();
        keys.sort();
        writeln!(out, "ply\nformat ascii 1.0")?;
        writeln!(out, "element vertex {}", keys.len())?;
        writeln!(out, "property float x\nproperty float y\nproperty float z")?;
        writeln!(out, "property uint count\nend_header")?;
        for k in keys {
            let s = &self.fine[&k];
            writeln!(out, "{:.4} {:.4} {:.4} {}", s.mean.x, s.mean.y, s.mean.z, s.count)?;
        }
        Ok(())
    }
}

/// Density-driven voxel resize `d·exp(−η (N − N*)/N*)`, clamped.
pub fn adapt_resolution(
    d_old: f64,
    n_current: usize,
    n_target: usize,
    eta: f64,
    bounds: (f64, f64),
) -> f64 {
    assert!(d_old > 0.0 && n_target > 0, "invalid resolution update");
    let excess = (n_current as f64 - n_target as f64) / n_target as f64;
    (d_old * (-eta * excess).exp()).clamp(bounds.0, bounds.1)
}

/// Keeps the first point landing in each voxel of side `resolution`,
/// preserving input order. Returns the kept indices.
pub fn voxel_downsample(points: &[Vector3<f64>], resolution: f64) -> Vec<usize> {
    let mut seen: DetHashMap<VoxelKey, ()> = DetHashMap::default();
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| seen.insert(VoxelKey::from_point(p, resolution), ()).is_none())
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_plane(n: usize, z: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|i| {
                let (a, b) = ((i % 10) as f64, (i / 10) as f64);
                Vector3::new(0.01 + a * 0.023, 0.01 + b * 0.023, z)
            })
            .collect()
    }

    #[test]
    fn key_is_constant_within_cell() {
        let a = VoxelKey::from_point(&Vector3::new(0.01, 0.24, -0.01), 0.25);
        let b = VoxelKey::from_point(&Vector3::new(0.2, 0.0, -0.2), 0.25);
        assert_eq!(a, b);
        assert_eq!(a, VoxelKey([0, 0, -1]));
    }

    #[test]
    fn planar_points_give_vertical_normal() {
        let mut map = DualVoxelMap::new(VoxelMapConfig::default());
        map.insert_points(&grid_plane(100, 0.0), &Vector3::zeros());
        let v = map.fine_voxel(&Vector3::new(0.1, 0.1, 0.0)).unwrap();
        let n = v.normal.unwrap();
        assert!((n.abs() - Vector3::z()).norm() < 1e-6);
        assert!(v.eigenvalues[2] / v.eigenvalues[0] < 1e-6);
    }

    #[test]
    fn activation_gate() {
        let mut map = DualVoxelMap::new(VoxelMapConfig::default());
        let far = Vector3::new(60.0, 0.0, 0.0);
        let s = map.insert_points(&[far], &Vector3::zeros());
        assert_eq!(s.inserted, 0);
        assert_eq!(s.fine_touched + s.coarse_touched, 0);
        assert!(map.is_empty());
    }

    #[test]
    fn duplicate_insert_keeps_mean() {
        let mut map = DualVoxelMap::new(VoxelMapConfig::default());
        let p = Vector3::new(0.1, 0.2, 0.3);
        map.insert_points(&[p, p], &Vector3::zeros());
        let v = map.fine_voxel(&p).unwrap();
        assert_eq!(v.count, 2);
        assert!((v.mean - p).norm() < 1e-15);
    }

    #[test]
    fn query_plane_layers() {
        let mut map = DualVoxelMap::new(VoxelMapConfig::default());
        assert!(map.query_plane(&Vector3::new(5.0, 5.0, 5.0)).is_none());
        // 50 coplanar points spread over one coarse voxel; the fine voxel at
        // the query location receives just two of them.
        let mut pts = Vec::new();
        for i in 0..48 {
            let (a, b) = ((i % 8) as f64, (i / 8) as f64);
            pts.push(Vector3::new(0.3 + a * 0.09, 0.3 + b * 0.11, 0.5));
        }
        pts.push(Vector3::new(0.05, 0.05, 0.5));
        pts.push(Vector3::new(0.2, 0.1, 0.5));
        map.insert_points(&pts, &Vector3::zeros());
        let q = Vector3::new(0.1, 0.1, 0.5);
        assert_eq!(map.fine_voxel(&q).unwrap().count, 2);
        let plane = map.query_plane(&q).unwrap();
        assert_eq!(plane.layer, Layer::Coarse);
        assert!((plane.normal.abs() - Vector3::z()).norm() < 1e-9);
    }

    #[test]
    fn adapt_resolution_examples() {
        let b = (0.1, 1.0);
        assert_eq!(adapt_resolution(0.4, 1000, 1000, 0.5, b), 0.4);
        let d = adapt_resolution(0.4, 2000, 1000, 0.5, b);
        assert!((d - 0.4 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(adapt_resolution(0.11, 100_000, 1000, 0.5, b), 0.1);
        assert_eq!(adapt_resolution(0.9, 0, 1000, 2.0, b), 1.0);
    }

    #[test]
    fn downsample_keeps_first_per_voxel() {
        let pts = vec![
            Vector3::new(0.01, 0.0, 0.0),
            Vector3::new(0.02, 0.0, 0.0),
            Vector3::new(0.3, 0.0, 0.0),
        ];
        assert_eq!(voxel_downsample(&pts, 0.25), vec![0, 2]);
    }

    #[test]
    fn ply_header_counts_vertices() {
        let mut map = DualVoxelMap::new(VoxelMapConfig::default());
        map.insert_points(&grid_plane(30, 0.0), &Vector3::zeros());
        let mut buf = Vec::new();
        map.write_ply(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 1\n"));
        assert_eq!(text.lines().count(), 9);
    }
}
