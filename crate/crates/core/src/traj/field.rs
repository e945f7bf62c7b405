//! Euclidean distance field over a regular occupancy grid.

use nalgebra::Vector3;

/// Distances sampled at cell centres, interpolated trilinearly.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    origin: Vector3<f64>,
    resolution: f64,
    dims: [usize; 3],
    values: Vec<f64>,
}

/// Stand-in for an infinite squared distance; large enough to dominate any
/// grid distance yet small enough to keep parabola intersections exact.
const FAR: f64 = 1e12;

/// Distance reported by a field with no occupied cell (m).
pub const NO_OBSTACLE: f64 = 1e6;

/// Exact 1-D squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let meet = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..f.len() {
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

impl DistanceField {
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    /// Builds the field from an `x`-fastest occupancy array. Values are the
    /// distance from each free cell centre to the nearest occupied cell
    /// centre, less half a cell so they approximate the distance to the
    /// obstacle surface. Without any occupied cell every value is [`NO_OBSTACLE`].
    ///
    /// # Panics
    /// If `occupied.len()` does not match `dims`, or a dimension is below 2.
    pub fn from_occupancy(origin: Vector3<f64>, dims: [usize; 3], resolution: f64, occupied: &[bool]) -> Self {
        assert!(dims.iter().all(|d| *d >= 2), "each dimension needs two cells");
        assert_eq!(occupied.len(), dims[0] * dims[1] * dims[2]);
        let mut sq: Vec<f64> = occupied
            .iter()
            .map(|o| if *o { 0.0 } else { FAR })
            .collect();
        let longest = *dims.iter().max().expect("three dims");
        let (mut f, mut out) = (vec![0.0; longest], vec![0.0; longest]);
        let (mut v, mut z) = (vec![0usize; longest], vec![0.0; longest + 1]);
        let stride = [1, dims[0], dims[0] * dims[1]];
        for axis in 0..3 {
            let n = dims[axis];
            let (a, b) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for u in 0..dims[a] {
                for w in 0..dims[b] {
                    let base = u * stride[a] + w * stride[b];
                    for t in 0..n {
                        f[t] = sq[base + t * stride[axis]];
                    }
                    edt_1d(&f[..n], &mut out[..n], &mut v[..n], &mut z[..n + 1]);
                    for t in 0..n {
                        sq[base + t * stride[axis]] = out[t];
                    }
                }
            }
        }
        let values = sq
            .into_iter()
            .map(|d| {
                if d >= 0.5 * FAR {
                    NO_OBSTACLE
                } else if d == 0.0 {
                    0.0
                } else {
                    (d.sqrt() - 0.5) * resolution
                }
            })
            .collect();
        Self {
            origin,
            resolution,
            dims,
            values,
        }
    }

    /// Samples an arbitrary distance function at the cell centres.
    pub fn from_fn(
        origin: Vector3<f64>,
        dims: [usize; 3],
        resolution: f64,
        f: impl Fn(&Vector3<f64>) -> f64,
    ) -> Self {
        assert!(dims.iter().all(|d| *d >= 2), "each dimension needs two cells");
        let mut field = Self {
            origin,
            resolution,
            dims,
            values: Vec::with_capacity(dims[0] * dims[1] * dims[2]),
        };
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let c = field.center(i, j, k);
                    field.values.push(f(&c).max(0.0));
                }
            }
        }
        field
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.resolution
    }

    pub fn cell_value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.distance_gradient(p).0
    }

    /// Trilinear interpolant and its exact gradient. Outside the grid the
    /// query is clamped to the boundary and the outward gradient is zero.
    pub fn distance_gradient(&self, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut inside = [true; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.resolution - 0.5;
            let top = (self.dims[a] - 1) as f64;
            let uc = u.clamp(0.0, top);
            inside[a] = u == uc;
            let i0 = (uc.floor() as usize).min(self.dims[a] - 2);
            base[a] = i0;
            frac[a] = uc - i0 as f64;
        }
        let mut value = 0.0;
        let mut grad = Vector3::zeros();
        for corner in 0..8 {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let v = self.cell_value(base[0] + off[0], base[1] + off[1], base[2] + off[2]);
            let w: [f64; 3] = std::array::from_fn(|a| if off[a] == 1 { frac[a] } else { 1.0 - frac[a] });
            let dw: [f64; 3] = std::array::from_fn(|a| if off[a] == 1 { 1.0 } else { -1.0 });
            value += v * w[0] * w[1] * w[2];
            grad.x += v * dw[0] * w[1] * w[2];
            grad.y += v * w[0] * dw[1] * w[2];
            grad.z += v * w[0] * w[1] * dw[2];
        }
        for a in 0..3 {
            if !inside[a] {
                grad[a] = 0.0;
            }
        }
        (value, grad / self.resolution)
    }
}
