//! Static box geometry over a ground plane, plus an optional moving ring.

use nalgebra::{Vector2, Vector3};

use tiltnav_core::so3::Rotation;

/// Box rotated about the vertical axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Vector3<f64>,
    pub half: Vector3<f64>,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn from_bounds(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self {
            center: 0.5 * (min + max),
            half: 0.5 * (max - min),
            yaw: 0.0,
        }
    }

    /// Vertical wall of the given thickness standing on the ground between
    /// two plan-view points.
    pub fn wall(a: Vector2<f64>, b: Vector2<f64>, thickness: f64, height: f64) -> Self {
        let d = b - a;
        let mid = 0.5 * (a + b);
        Self {
            center: Vector3::new(mid.x, mid.y, 0.5 * height),
            half: Vector3::new(0.5 * d.norm(), 0.5 * thickness, 0.5 * height),
            yaw: d.y.atan2(d.x),
        }
    }

    fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center;
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    fn dir_to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let l = self.to_local(p);
        (0..3).all(|a| l[a].abs() <= self.half[a])
    }

    pub fn top(&self) -> f64 {
        self.center.z + self.half.z
    }

    pub fn bottom(&self) -> f64 {
        self.center.z - self.half.z
    }

    /// Entry distance along a unit ray, slab method.
    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.to_local(origin);
        let d = self.dir_to_local(dir);
        let (mut t0, mut t1) = (0.0_f64, f64::INFINITY);
        for a in 0..3 {
            if d[a].abs() < 1e-15 {
                if o[a].abs() > self.half[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[a];
            let (mut lo, mut hi) = ((-self.half[a] - o[a]) * inv, (self.half[a] - o[a]) * inv);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return None;
            }
        }
        (t0 > 0.0).then_some(t0)
    }
}

/// Ring carried along a polyline at constant speed, reversing at the ends.
/// Its plane is vertical and faces the direction of travel.
#[derive(Clone, Debug, PartialEq)]
pub struct RingTarget {
    pub path: Vec<Vector3<f64>>,
    pub speed: f64,
    pub radius: f64,
    pub tube: f64,
    /// Distance already travelled along the back-and-forth cycle at t = 0.
    pub start: f64,
}

/// Speed cap for the ground vehicle carrying the ring (m/s).
pub const MAX_TARGET_SPEED: f64 = 1.5;

impl RingTarget {
    fn length(&self) -> f64 {
        self.path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Centre and unit velocity direction at time `t`.
    fn locate(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        if self.path.len() < 2 {
            return (self.path.first().copied().unwrap_or_default(), Vector3::x());
        }
        let total = self.length();
        if total <= 0.0 {
            return (self.path[0], Vector3::x());
        }
        let speed = self.speed.min(MAX_TARGET_SPEED);
        let s = (speed * t.max(0.0) + self.start).rem_euclid(2.0 * total);
        let (s, sign) = if s <= total { (s, 1.0) } else { (2.0 * total - s, -1.0) };
        let mut acc = 0.0;
        for w in self.path.windows(2) {
            let seg = (w[1] - w[0]).norm();
            if acc + seg >= s && seg > 0.0 {
                let u = (s - acc) / seg;
                let dir = (w[1] - w[0]) / seg;
                return (w[0] + (w[1] - w[0]) * u, dir * sign);
            }
            acc += seg;
        }
        let n = self.path.len();
        (self.path[n - 1], (self.path[n - 1] - self.path[n - 2]).normalize() * sign)
    }

    pub fn center(&self, t: f64) -> Vector3<f64> {
        self.locate(t).0
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        self.locate(t).1 * self.speed.min(MAX_TARGET_SPEED)
    }

    /// Unit normal of the ring plane (horizontal, along travel).
    pub fn normal(&self, t: f64) -> Vector3<f64> {
        let d = self.locate(t).1;
        let h = Vector3::new(d.x, d.y, 0.0);
        if h.norm() < 1e-9 {
            Vector3::x()
        } else {
            h.normalize()
        }
    }

    fn frame(&self, t: f64) -> (Vector3<f64>, Rotation) {
        let n = self.normal(t);
        (self.center(t), Rotation::rot_z(n.y.atan2(n.x)))
    }

    /// First intersection with the ring tube, by sphere tracing its signed
    /// distance in the ring frame (normal along local x).
    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t: f64, max_range: f64) -> Option<f64> {
        let (c, rot) = self.frame(t);
        let inv = rot.inverse();
        let o = inv * (origin - c);
        let d = inv * *dir;
        // Bounding sphere.
        let bound = self.radius + self.tube;
        let b = o.dot(&d);
        let disc = b * b - (o.norm_squared() - bound * bound);
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        let (enter, exit) = (-b - root, -b + root);
        if exit <= 0.0 {
            return None;
        }
        let sdf = |p: &Vector3<f64>| {
            let radial = p.y.hypot(p.z) - self.radius;
            radial.hypot(p.x) - self.tube
        };
        let mut s = enter.max(0.0);
        for _ in 0..128 {
            let p = o + d * s;
            let dist = sdf(&p);
            if dist < 1e-7 {
                return (s <= max_range).then_some(s);
            }
            s += dist;
            if s > exit {
                return None;
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitKind {
    Ground,
    Structure,
    Target,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct World {
    pub boxes: Vec<OrientedBox>,
    pub ground: bool,
    pub target: Option<RingTarget>,
    /// Planning and mapping extent.
    pub bounds_min: Vector3<f64>,
    pub bounds_max: Vector3<f64>,
}

impl World {
    /// Nearest return along a unit ray at scene time `t`.
    pub fn raycast(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        max_range: f64,
        t: f64,
    ) -> Option<(f64, HitKind)> {
        let mut best: Option<(f64, HitKind)> = None;
        let consider = |best: &mut Option<(f64, HitKind)>, r: f64, kind: HitKind| {
            if r <= max_range && best.is_none_or(|b| r < b.0) {
                *best = Some((r, kind));
            }
        };
        if self.ground && dir.z < 0.0 && origin.z > 0.0 {
            consider(&mut best, -origin.z / dir.z, HitKind::Ground);
        }
        for b in &self.boxes {
            if let Some(r) = b.ray_hit(origin, dir) {
                consider(&mut best, r, HitKind::Structure);
            }
        }
        if let Some(ring) = &self.target {
            let limit = best.map_or(max_range, |b| b.0);
            if let Some(r) = ring.ray_hit(origin, dir, t, limit) {
                consider(&mut best, r, HitKind::Target);
            }
        }
        best
    }

    pub fn is_occupied(&self, p: &Vector3<f64>) -> bool {
        (self.ground && p.z < 0.0) || self.boxes.iter().any(|b| b.contains(p))
    }

    /// Tallest static structure (m).
    pub fn max_height(&self) -> f64 {
        self.boxes.iter().map(|b| b.top()).fold(0.0, f64::max)
    }

    /// `x`-fastest occupancy over the bounds with one cell of ground below
    /// `z = 0`. Returns the grid origin, dimensions and cells.
    pub fn occupancy(&self, resolution: f64) -> (Vector3<f64>, [usize; 3], Vec<bool>) {
        let origin = Vector3::new(self.bounds_min.x, self.bounds_min.y, self.bounds_min.z.min(0.0) - resolution);
        let dims = [0, 1, 2].map(|a| (((self.bounds_max[a] - origin[a]) / resolution).ceil() as usize).max(2));
        let mut cells = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let c = origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * resolution;
                    cells.push(self.is_occupied(&c));
                }
            }
        }
        (origin, dims, cells)
    }
}
