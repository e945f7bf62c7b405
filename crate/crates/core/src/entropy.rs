//! Occupancy grid updated by ray casting, and the distance-attenuated
//! binary entropy used to score unexplored space.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use nalgebra::Vector3;

/// Side length (m) of the square planning window centred on the platform.
pub const WINDOW_SIDE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogOddsParams {
    pub hit: f64,
    pub miss: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Skip miss updates on cells currently believed occupied.
    pub protect_occupied: bool,
}

impl Default for LogOddsParams {
    fn default() -> Self {
        Self {
            hit: 0.85,
            miss: -0.4,
            p_min: 0.12,
            p_max: 0.97,
            protect_occupied: true,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Binary Shannon entropy in bits with `0·log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// `e^{−R}·H₂(p)`.
pub fn cell_entropy(p: f64, distance: f64) -> f64 {
    (-distance).exp() * binary_entropy(p)
}

/// Half-open polar interval `[start, start + width)`, angles wrapped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sector {
    pub start: f64,
    pub width: f64,
}

impl Sector {
    pub fn full() -> Self {
        Self { start: -PI, width: TAU }
    }

    pub fn centered(heading: f64, width: f64) -> Self {
        Self {
            start: heading - 0.5 * width,
            width,
        }
    }

    pub fn contains(&self, angle: f64) -> bool {
        self.width >= TAU || (angle - self.start).rem_euclid(TAU) < self.width
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RaycastSummary {
    pub rays: usize,
    pub hit_cells: usize,
    pub miss_cells: usize,
}

/// Dense 3D occupancy grid stored as log-odds.
#[derive(Clone, Debug)]
pub struct EntropyGrid {
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    log_odds: Vec<f64>,
    params: LogOddsParams,
    stamp: Vec<u32>,
    miss_stamp: Vec<u32>,
    scan: u32,
}

impl EntropyGrid {
    /// Grid covering the box `[min, max]` with cubic cells of side `cell`.
    pub fn new(min: Vector3<f64>, max: Vector3<f64>, cell: f64, params: LogOddsParams) -> Self {
        let dims = [0, 1, 2].map(|i| (((max[i] - min[i]) / cell).ceil() as usize).max(1));
        let n = dims[0] * dims[1] * dims[2];
        Self {
            origin: min,
            cell,
            dims,
            log_odds: vec![0.0; n],
            params,
            stamp: vec![0; n],
            miss_stamp: vec![0; n],
            scan: 0,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.log_odds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_odds.is_empty()
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn cell_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for i in 0..3 {
            let f = ((p[i] - self.origin[i]) / self.cell).floor();
            if !(f >= 0.0 && (f as usize) < self.dims[i]) {
                return None;
            }
            c[i] = f as usize;
        }
        Some(c)
    }

    pub fn cell_center(&self, c: [usize; 3]) -> Vector3<f64> {
        self.origin + Vector3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * self.cell
    }

    pub fn probability(&self, c: [usize; 3]) -> f64 {
        sigmoid(self.log_odds[self.index(c)])
    }

    pub fn set_probability(&mut self, c: [usize; 3], p: f64) {
        let i = self.index(c);
        self.log_odds[i] = if p <= 0.0 {
            f64::NEG_INFINITY
        } else if p >= 1.0 {
            f64::INFINITY
        } else {
            logit(p)
        };
    }

    pub fn fill(&mut self, p: f64) {
        for i in 0..self.dims[0] {
            for j in 0..self.dims[1] {
                for k in 0..self.dims[2] {
                    self.set_probability([i, j, k], p);
                }
            }
        }
    }

    /// Updates the grid with one scan. Each cell receives at most one update
    /// per call; a cell holding any ray endpoint takes the hit update.
    pub fn raycast_update(&mut self, origin: &Vector3<f64>, hits: &[Vector3<f64>]) -> RaycastSummary {
        self.scan = self.scan.wrapping_add(1);
        if self.scan == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.miss_stamp.iter_mut().for_each(|s| *s = 0);
            self.scan = 1;
        }
        let mut summary = RaycastSummary {
            rays: hits.len(),
            ..Default::default()
        };
        let hit_mark = self.scan;
        let mut hit_cells = Vec::new();
        for h in hits {
            if let Some(c) = self.cell_of(h) {
                let i = self.index(c);
                if self.stamp[i] != hit_mark {
                    self.stamp[i] = hit_mark;
                    hit_cells.push(i);
                }
            }
        }
        let mut miss_cells = Vec::new();
        let mut traversed = Vec::new();
        for h in hits {
            traversed.clear();
            self.traverse(origin, h, &mut traversed);
            for &i in &traversed {
                if self.stamp[i] != hit_mark && self.miss_stamp[i] != hit_mark {
                    self.miss_stamp[i] = hit_mark;
                    miss_cells.push(i);
                }
            }
        }
        let (lo, hi) = (logit(self.params.p_min), logit(self.params.p_max));
        for &i in &miss_cells {
            if self.params.protect_occupied && self.log_odds[i] > 0.0 {
                continue;
            }
            self.log_odds[i] = (self.log_odds[i] + self.params.miss).clamp(lo, hi);
        }
        for &i in &hit_cells {
            self.log_odds[i] = (self.log_odds[i] + self.params.hit).clamp(lo, hi);
        }
        summary.hit_cells = hit_cells.len();
        summary.miss_cells = miss_cells.len();
        summary
    }

    /// Cells strictly between `from` and the cell containing `to`
    /// (3D DDA), clipped to the grid.
    fn traverse(&self, from: &Vector3<f64>, to: &Vector3<f64>, out: &mut Vec<usize>) {
        let d = to - from;
        let len = d.norm();
        if len < 1e-12 {
            return;
        }
        let dir = d / len;
        // Clip the segment against the grid box.
        let max = self.origin + Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.cell;
        let (mut t0, mut t1) = (0.0f64, len);
        for i in 0..3 {
            if dir[i].abs() < 1e-15 {
                if from[i] < self.origin[i] || from[i] >= max[i] {
                    return;
                }
            } else {
                let a = (self.origin[i] - from[i]) / dir[i];
                let b = (max[i] - from[i]) / dir[i];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t0 >= t1 {
            return;
        }
        let start = from + dir * (t0 + 1e-9);
        let mut cell = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            let f = ((start[i] - self.origin[i]) / self.cell).floor();
            cell[i] = (f as i64).clamp(0, self.dims[i] as i64 - 1);
            if dir[i] > 0.0 {
                step[i] = 1;
                let boundary = self.origin[i] + (cell[i] + 1) as f64 * self.cell;
                t_max[i] = t0 + (boundary - start[i]) / dir[i];
                t_delta[i] = self.cell / dir[i];
            } else if dir[i] < 0.0 {
                step[i] = -1;
                let boundary = self.origin[i] + cell[i] as f64 * self.cell;
                t_max[i] = t0 + (boundary - start[i]) / dir[i];
                t_delta[i] = -self.cell / dir[i];
            }
        }
        let end_cell = self.cell_of(to);
        loop {
            let c = [cell[0] as usize, cell[1] as usize, cell[2] as usize];
            if Some(c) == end_cell {
                return;
            }
            out.push(self.index(c));
            let axis = if t_max[0] < t_max[1] {
                if t_max[0] < t_max[2] { 0 } else { 2 }
            } else if t_max[1] < t_max[2] {
                1
            } else {
                2
            };
            if t_max[axis] > t1 {
                return;
            }
            cell[axis] += step[axis];
            if cell[axis] < 0 || cell[axis] >= self.dims[axis] as i64 {
                return;
            }
            t_max[axis] += t_delta[axis];
        }
    }

    /// Sum of binary entropy over all cells, without distance attenuation.
    pub fn total_entropy(&self) -> f64 {
        self.log_odds.iter().map(|&l| binary_entropy(sigmoid(l))).sum()
    }

    /// Entropy summed over z for each `(x, y)` column, row-major in y.
    pub fn column_entropy(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let mut out = vec![0.0; nx * ny];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    out[j * nx + i] += binary_entropy(self.probability([i, j, k]));
                }
            }
        }
        out
    }

    /// Writes the column-summed entropy as an 8-bit binary PGM, one pixel
    /// per column, north up. Zero entropy maps to black.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        let [nx, ny, nz] = self.dims;
        let cols = self.column_entropy();
        write!(out, "P5\n{nx} {ny}\n255\n")?;
        let mut row = vec![0u8; nx];
        for j in (0..ny).rev() {
            for i in 0..nx {
                let v = (cols[j * nx + i] / nz as f64).clamp(0.0, 1.0);
                row[i] = (v * 255.0).round() as u8;
            }
            out.write_all(&row)?;
        }
        Ok(())
    }

    /// Window cells around `platform` with their polar angle, attenuated
    /// entropy and the attenuated entropy an unobserved cell would have.
    pub fn window(&self, platform: &Vector3<f64>) -> WindowEntropy {
        let half = 0.5 * WINDOW_SIDE;
        let lo = [0, 1].map(|i| ((platform[i] - half - self.origin[i]) / self.cell).floor().max(0.0) as usize);
        let hi = [0, 1].map(|i| {
            (((platform[i] + half - self.origin[i]) / self.cell).ceil().max(0.0) as usize).min(self.dims[i])
        });
        let mut cells = Vec::new();
        for k in 0..self.dims[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    let c = self.cell_center([i, j, k]);
                    let d = c - platform;
                    if d.x.abs() > half || d.y.abs() > half {
                        continue;
                    }
                    let mut angle = d.y.atan2(d.x);
                    if angle >= PI {
                        angle -= TAU;
                    }
                    let atten = (-d.norm()).exp();
                    cells.push(WindowCell {
                        angle,
                        entropy: atten * binary_entropy(self.probability([i, j, k])),
                        max_entropy: atten,
                    });
                }
            }
        }
        WindowEntropy { cells }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowCell {
    pub angle: f64,
    pub entropy: f64,
    pub max_entropy: f64,
}

/// Snapshot of the planning window used to score many sectors cheaply.
#[derive(Clone, Debug, Default)]
pub struct WindowEntropy {
    pub cells: Vec<WindowCell>,
}

impl WindowEntropy {
    /// `(Σ H_i, Σ H_i^max)` over cells whose polar angle lies in `sector`.
    pub fn sector(&self, sector: &Sector) -> (f64, f64) {
        self.cells
            .iter()
            .filter(|c| sector.contains(c.angle))
            .fold((0.0, 0.0), |(h, m), c| (h + c.entropy, m + c.max_entropy))
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().map(|c| c.entropy).sum()
    }
}

/// Attenuated entropy summed over the planning-window cells in `sector`.
pub fn sector_entropy(grid: &EntropyGrid, platform: &Vector3<f64>, sector: &Sector) -> f64 {
    grid.window(platform).sector(sector).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> EntropyGrid {
        EntropyGrid::new(Vector3::new(-5.0, -5.0, 0.0), Vector3::new(5.0, 5.0, 2.0), 0.25, LogOddsParams::default())
    }

    #[test]
    fn entropy_spot_values() {
        assert_eq!(cell_entropy(0.5, 0.0), 1.0);
        assert_eq!(cell_entropy(0.0, 3.0), 0.0);
        assert_eq!(cell_entropy(1.0, 0.0), 0.0);
        assert!((cell_entropy(0.5, std::f64::consts::LN_2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_ray_marks_hit_and_free() {
        let mut g = room();
        let origin = Vector3::new(-4.1, 0.1, 1.1);
        let wall = Vector3::new(3.9, 0.1, 1.1);
        g.raycast_update(&origin, &[wall]);
        assert!(g.probability(g.cell_of(&wall).unwrap()) > 0.5);
        for x in [-3.0, -1.0, 0.0, 2.0, 3.5] {
            let c = g.cell_of(&Vector3::new(x, 0.1, 1.1)).unwrap();
            assert!(g.probability(c) < 0.5, "x={x}");
        }
        // An untouched cell keeps its prior.
        assert_eq!(g.probability(g.cell_of(&Vector3::new(0.0, 3.0, 1.1)).unwrap()), 0.5);
    }

    #[test]
    fn repeated_hits_saturate() {
        let mut g = room();
        let origin = Vector3::new(0.1, 0.1, 1.0);
        let hit = Vector3::new(2.1, 1.1, 0.6);
        for _ in 0..50 {
            g.raycast_update(&origin, &[hit]);
        }
        let p = g.probability(g.cell_of(&hit).unwrap());
        assert!(p >= 0.97 - 1e-9, "{p}");
    }

    #[test]
    fn no_rays_no_change() {
        let mut g = room();
        let before = g.total_entropy();
        g.raycast_update(&Vector3::zeros(), &[]);
        assert_eq!(g.total_entropy(), before);
    }

    #[test]
    fn sector_partition_is_additive() {
        let mut g = room();
        g.raycast_update(&Vector3::new(0.0, 0.0, 1.0), &[Vector3::new(2.0, 1.0, 0.1), Vector3::new(-2.0, -1.0, 0.1)]);
        let p = Vector3::new(0.05, 0.05, 1.0);
        let full = sector_entropy(&g, &p, &Sector::full());
        let a = sector_entropy(&g, &p, &Sector { start: -PI, width: PI });
        let b = sector_entropy(&g, &p, &Sector { start: 0.0, width: PI });
        assert!((a + b - full).abs() < 1e-9);
        let w = g.window(&p);
        assert!((w.total() - full).abs() < 1e-9);
        let (q1, q2) = (Sector::centered(1.0, 2.0), Sector { start: 2.0, width: TAU - 2.0 });
        assert!((w.sector(&q1).0 + w.sector(&q2).0 - full).abs() < 1e-9);
    }

    #[test]
    fn known_grid_has_no_sector_entropy() {
        let mut g = room();
        g.fill(1.0);
        let s = sector_entropy(&g, &Vector3::new(0.0, 0.0, 1.0), &Sector::centered(0.3, 1.2));
        assert_eq!(s, 0.0);
        g.fill(0.0);
        assert_eq!(g.total_entropy(), 0.0);
    }

    #[test]
    fn pgm_has_expected_size() {
        let g = room();
        let mut buf = Vec::new();
        g.write_pgm(&mut buf).unwrap();
        let header = b"P5\n40 40\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 1600);
        assert!(buf[header.len()..].iter().all(|&b| b == 255));
    }
}
