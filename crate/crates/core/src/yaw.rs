//! Receding-horizon yaw planning over a layered graph of yaw samples placed
//! along the trajectory, searched with Dijkstra.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::entropy::{EntropyGrid, Sector, WindowEntropy};
use crate::so3::wrap_angle;
use crate::traj::PiecewiseTrajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum YawError {
    #[error("yaw weights ({0}, {1}, {2}) are not a point of the unit simplex")]
    Weights(f64, f64, f64),
    #[error("invalid planner setting: {0}")]
    Config(&'static str),
    #[error("query time {0} outside the trajectory span")]
    OutOfSpan(f64),
    #[error("node reward {reward} exceeds the bound {bound}")]
    RewardBound { reward: f64, bound: f64 },
}

/// Weights of exploration, tracking and yaw effort.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YawCostWeights {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl YawCostWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, YawError> {
        let ok = [alpha, beta, gamma].iter().all(|w| w.is_finite() && *w >= 0.0)
            && (alpha + beta + gamma - 1.0).abs() <= 1e-12;
        if ok {
            Ok(Self { alpha, beta, gamma })
        } else {
            Err(YawError::Weights(alpha, beta, gamma))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Moves the tracking weight onto exploration when no target is held.
    pub fn without_target(&self) -> Self {
        Self {
            alpha: self.alpha + self.beta,
            beta: 0.0,
            gamma: self.gamma,
        }
    }
}

impl Default for YawCostWeights {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.6,
            gamma: 0.1,
        }
    }
}

/// Current estimate of the tracked target, extrapolated at constant velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TargetObservation {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub valid: bool,
}

impl TargetObservation {
    pub fn lost() -> Self {
        Self::default()
    }

    pub fn at(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            valid: true,
        }
    }

    pub fn predict(&self, dt: f64) -> Vector3<f64> {
        self.position + self.velocity * dt
    }

    /// Offsets of the target along and across the sensing axis at yaw `psi`.
    pub fn offsets(&self, platform: &Vector3<f64>, psi: f64, dt: f64) -> (f64, f64) {
        let d = self.predict(dt) - platform;
        let (s, c) = psi.sin_cos();
        (c * d.x + s * d.y, -s * d.x + c * d.y)
    }
}

/// Signed horizontal angle from yaw `psi` to the target bearing.
pub fn tracking_angle(platform: &Vector3<f64>, psi: f64, target: &Vector3<f64>) -> f64 {
    let d = target - platform;
    if d.x == 0.0 && d.y == 0.0 {
        return 0.0;
    }
    wrap_angle(d.y.atan2(d.x) - psi)
}

/// `(ψ/π)²` with `ψ` the offset angle, zeroed inside the dead zone.
pub fn tracking_cost(dx: f64, dy: f64, psi_th: f64) -> f64 {
    if dx == 0.0 && dy == 0.0 {
        return 0.0;
    }
    let theta = dy.atan2(dx);
    if theta.abs() <= psi_th {
        0.0
    } else {
        (theta / PI).powi(2)
    }
}

/// Squared wrapped yaw change.
pub fn energy_cost(psi_t: f64, psi_prev: f64) -> f64 {
    wrap_angle(psi_t - psi_prev).powi(2)
}

/// `α·H − β·T − γ·E` with `H` the normalised sector entropy.
pub fn node_cost(entropy: f64, tracking: f64, energy: f64, w: &YawCostWeights) -> f64 {
    w.alpha * entropy - w.beta * tracking - w.gamma * energy
}

/// Largest yaw change allowed between consecutive layers.
pub fn pruned_span(omega_max: f64, dt: f64) -> f64 {
    omega_max * dt
}

/// `n` yaws evenly spaced over `[−π, π)`.
pub fn yaw_lattice(n: usize) -> Vec<f64> {
    (0..n).map(|j| -PI + TAU * j as f64 / n as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YawConfig {
    pub n_yaw: usize,
    pub dt: f64,
    pub horizon: f64,
    pub omega_max: f64,
    /// Dead-zone half-width around the sensing axis (rad).
    pub psi_th: f64,
    /// Horizontal field of view used for the entropy sector (rad).
    pub fov: f64,
    pub replan_rate: f64,
    pub prune: bool,
    pub weights: YawCostWeights,
}

impl Default for YawConfig {
    fn default() -> Self {
        Self {
            n_yaw: 24,
            dt: 0.4,
            horizon: 2.4,
            omega_max: 1.8,
            psi_th: 0.1,
            fov: 70.6_f64.to_radians(),
            replan_rate: 5.0,
            prune: true,
            weights: YawCostWeights::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct YawLayer {
    pub t: f64,
    pub position: Vector3<f64>,
    /// Lattice indices of the candidate yaws, ascending.
    pub indices: Vec<usize>,
    /// Pruning left no candidate and the layer fell back to the full lattice.
    pub relaxed: bool,
}

/// Start node plus one layer per step of the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct YawGraph {
    pub start_time: f64,
    pub start_yaw: f64,
    pub start_position: Vector3<f64>,
    pub lattice: Vec<f64>,
    pub layers: Vec<YawLayer>,
    pub span: Option<f64>,
    /// The horizon ran past the end of the trajectory.
    pub truncated: bool,
}

impl YawGraph {
    pub fn node_count(&self) -> usize {
        self.layers.iter().map(|l| l.indices.len()).sum()
    }

    /// Whether the step from `from` to `to` entering layer `k` is allowed.
    pub fn edge_allowed(&self, k: usize, from: f64, to: f64) -> bool {
        match self.span {
            Some(span) if !self.layers[k].relaxed => wrap_angle(to - from).abs() <= span,
            _ => true,
        }
    }

    fn yaw(&self, k: usize, j: usize) -> f64 {
        self.lattice[self.layers[k].indices[j]]
    }
}

/// Places layers at `t0 + k·dt` along `traj` and keeps, with pruning, only
/// lattice yaws reachable from the previous layer.
pub fn build_layers(
    traj: &PiecewiseTrajectory,
    t0: f64,
    psi0: f64,
    config: &YawConfig,
) -> Result<YawGraph, YawError> {
    if !(config.dt > 0.0) {
        return Err(YawError::Config("dt must be positive"));
    }
    if config.n_yaw < 4 {
        return Err(YawError::Config("need at least four yaw samples"));
    }
    if !(config.horizon >= 0.0) || !(config.omega_max >= 0.0) {
        return Err(YawError::Config("horizon and rate limit must be nonnegative"));
    }
    let duration = traj.duration();
    if !(0.0..=duration + 1e-9).contains(&t0) {
        return Err(YawError::OutOfSpan(t0));
    }
    let lattice = yaw_lattice(config.n_yaw);
    let span = config.prune.then(|| pruned_span(config.omega_max, config.dt));
    let steps = (config.horizon / config.dt + 1e-9).floor() as usize;
    let mut layers: Vec<YawLayer> = Vec::with_capacity(steps);
    let mut truncated = false;
    let mut previous = vec![wrap_angle(psi0)];
    for k in 1..=steps {
        let t = t0 + k as f64 * config.dt;
        if t > duration + 1e-9 {
            truncated = true;
            break;
        }
        let mut indices: Vec<usize> = match span {
            Some(s) => (0..lattice.len())
                .filter(|&j| previous.iter().any(|p| wrap_angle(lattice[j] - p).abs() <= s))
                .collect(),
            None => (0..lattice.len()).collect(),
        };
        let relaxed = indices.is_empty();
        if relaxed {
            indices = (0..lattice.len()).collect();
        }
        previous = indices.iter().map(|&j| lattice[j]).collect();
        layers.push(YawLayer {
            t,
            position: traj.eval(t, 0).value,
            indices,
            relaxed,
        });
    }
    Ok(YawGraph {
        start_time: t0,
        start_yaw: wrap_angle(psi0),
        start_position: traj.eval(t0, 0).value,
        lattice,
        layers,
        span,
        truncated,
    })
}

/// Planned yaws with search diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct YawSequence {
    /// `(t, ψ)` starting with the current yaw.
    pub points: Vec<(f64, f64)>,
    /// Lattice index chosen in each layer.
    pub indices: Vec<usize>,
    pub reward: f64,
    pub layers: usize,
    pub pruned_fraction: f64,
    pub truncated: bool,
    pub relaxed: bool,
}

impl YawSequence {
    /// Yaw at time `t`, interpolated along the shorter arc and held past
    /// either end.
    pub fn yaw_at(&self, t: f64) -> f64 {
        let (first, last) = (self.points[0], self.points[self.points.len() - 1]);
        if t <= first.0 {
            return first.1;
        }
        if t >= last.0 {
            return last.1;
        }
        let i = self.points.partition_point(|p| p.0 <= t) - 1;
        let (ta, a) = self.points[i];
        let (tb, b) = self.points[i + 1];
        let u = (t - ta) / (tb - ta);
        wrap_angle(a + u * wrap_angle(b - a))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,yaw")?;
        for (t, psi) in &self.points {
            writeln!(out, "{t:.6},{psi:.9}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    cost: f64,
    layer: usize,
    node: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    // Reversed so the heap pops the cheapest label, lower layers first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.layer.cmp(&self.layer))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Maximum-reward path through one node per layer. `reward(k, ψ_prev, j)`
/// scores candidate `j` of layer `k` entered from yaw `ψ_prev` and must not
/// exceed `bound`; Dijkstra runs on `bound − reward`. Equal-cost paths are
/// resolved to the lexicographically smallest sequence of lattice indices.
pub fn search_yaw_sequence<F>(graph: &YawGraph, mut reward: F, bound: f64) -> Result<YawSequence, YawError>
where
    F: FnMut(usize, f64, usize) -> f64,
{
    let n_layers = graph.layers.len();
    let mut points = vec![(graph.start_time, graph.start_yaw)];
    let total_nodes = n_layers * graph.lattice.len();
    let pruned_fraction = if total_nodes == 0 {
        0.0
    } else {
        1.0 - graph.node_count() as f64 / total_nodes as f64
    };
    let relaxed = graph.layers.iter().any(|l| l.relaxed);
    if n_layers == 0 {
        return Ok(YawSequence {
            points,
            indices: Vec::new(),
            reward: 0.0,
            layers: 0,
            pruned_fraction,
            truncated: graph.truncated,
            relaxed,
        });
    }
    let mut dist: Vec<Vec<f64>> = graph.layers.iter().map(|l| vec![f64::INFINITY; l.indices.len()]).collect();
    let mut path: Vec<Vec<Vec<usize>>> = graph.layers.iter().map(|l| vec![Vec::new(); l.indices.len()]).collect();
    let mut done: Vec<Vec<bool>> = graph.layers.iter().map(|l| vec![false; l.indices.len()]).collect();
    let mut heap = BinaryHeap::new();

    let relax = |k: usize,
                     j: usize,
                     cost: f64,
                     prefix: &[usize],
                     dist: &mut Vec<Vec<f64>>,
                     path: &mut Vec<Vec<Vec<usize>>>,
                     heap: &mut BinaryHeap<Queued>| {
        let better = match cost.total_cmp(&dist[k][j]) {
            Ordering::Less => true,
            Ordering::Equal => prefix < &path[k][j][..k],
            Ordering::Greater => false,
        };
        if better {
            dist[k][j] = cost;
            let mut p = prefix.to_vec();
            p.push(graph.layers[k].indices[j]);
            path[k][j] = p;
            heap.push(Queued { cost, layer: k, node: j });
        }
    };

    for j in 0..graph.layers[0].indices.len() {
        let to = graph.yaw(0, j);
        if graph.edge_allowed(0, graph.start_yaw, to) {
            let r = reward(0, graph.start_yaw, j);
            if r > bound + 1e-12 {
                return Err(YawError::RewardBound { reward: r, bound });
            }
            relax(0, j, (bound - r).max(0.0), &[], &mut dist, &mut path, &mut heap);
        }
    }
    let mut best: Option<(usize, f64)> = None;
    while let Some(Queued { cost, layer, node }) = heap.pop() {
        if done[layer][node] || cost > dist[layer][node] {
            continue;
        }
        done[layer][node] = true;
        if layer + 1 == n_layers {
            // First settled terminal node is optimal; later pops with the
            // same cost may still carry a smaller index path.
            match best {
                None => best = Some((node, cost)),
                Some((b, c)) if cost == c && path[layer][node] < path[layer][b] => best = Some((node, cost)),
                _ => {}
            }
            if heap.peek().is_none_or(|q| q.cost > cost) {
                break;
            }
            continue;
        }
        let from = graph.yaw(layer, node);
        let prefix = path[layer][node].clone();
        for j in 0..graph.layers[layer + 1].indices.len() {
            let to = graph.yaw(layer + 1, j);
            if !graph.edge_allowed(layer + 1, from, to) {
                continue;
            }
            let r = reward(layer + 1, from, j);
            if r > bound + 1e-12 {
                return Err(YawError::RewardBound { reward: r, bound });
            }
            relax(layer + 1, j, cost + (bound - r).max(0.0), &prefix, &mut dist, &mut path, &mut heap);
        }
    }
    let (node, cost) = best.expect("every layer keeps a reachable candidate");
    let indices = path[n_layers - 1][node].clone();
    for (layer, idx) in graph.layers.iter().zip(&indices) {
        points.push((layer.t, graph.lattice[*idx]));
    }
    Ok(YawSequence {
        points,
        indices,
        reward: n_layers as f64 * bound - cost,
        layers: n_layers,
        pruned_fraction,
        truncated: graph.truncated,
        relaxed,
    })
}

/// Per-layer scores that do not depend on the previous yaw.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerScores {
    /// Sector entropy of each candidate, divided by the largest sector
    /// capacity in the layer so it lies in `[0, 1]`.
    pub entropy: Vec<f64>,
    pub tracking: Vec<f64>,
}

/// Entropy and tracking terms for every candidate in every layer.
pub fn score_layers(
    graph: &YawGraph,
    grid: &EntropyGrid,
    target: &TargetObservation,
    config: &YawConfig,
) -> Vec<LayerScores> {
    graph
        .layers
        .iter()
        .map(|layer| {
            let window: WindowEntropy = grid.window(&layer.position);
            let sums: Vec<(f64, f64)> = layer
                .indices
                .iter()
                .map(|&i| window.sector(&Sector::centered(graph.lattice[i], config.fov)))
                .collect();
            let capacity = sums.iter().map(|s| s.1).fold(0.0, f64::max);
            let entropy = sums
                .iter()
                .map(|s| if capacity > 0.0 { s.0 / capacity } else { 0.0 })
                .collect();
            let tracking = layer
                .indices
                .iter()
                .map(|&i| {
                    if target.valid {
                        let (dx, dy) =
                            target.offsets(&layer.position, graph.lattice[i], layer.t - graph.start_time);
                        tracking_cost(dx, dy, config.psi_th)
                    } else {
                        0.0
                    }
                })
                .collect();
            LayerScores { entropy, tracking }
        })
        .collect()
}

/// Rebuilds the graph from time `t` and yaw `psi` and searches it against the
/// current grid and target estimate.
pub fn receding_replan(
    traj: &PiecewiseTrajectory,
    t: f64,
    psi: f64,
    grid: &EntropyGrid,
    target: &TargetObservation,
    config: &YawConfig,
) -> Result<YawSequence, YawError> {
    let graph = build_layers(traj, t, psi, config)?;
    let scores = score_layers(&graph, grid, target, config);
    let w = if target.valid {
        config.weights
    } else {
        config.weights.without_target()
    };
    let reward = |k: usize, prev: f64, j: usize| {
        let s = &scores[k];
        node_cost(s.entropy[j], s.tracking[j], energy_cost(graph.yaw(k, j), prev), &w)
    };
    search_yaw_sequence(&graph, reward, w.alpha)
}

/// Yaw along the horizontal velocity, holding `fallback` when nearly still.
pub fn tangent_yaw(velocity: &Vector3<f64>, fallback: f64) -> f64 {
    if velocity.x.hypot(velocity.y) < 1e-3 {
        fallback
    } else {
        velocity.y.atan2(velocity.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::LogOddsParams;
    use crate::traj::{solve_coefficients, BoundaryState};

    fn line(duration: f64) -> PiecewiseTrajectory {
        solve_coefficients(
            &[],
            &[duration],
            &BoundaryState::rest(Vector3::new(0.0, 0.0, 1.0)),
            &BoundaryState::rest(Vector3::new(4.0, 0.0, 1.0)),
        )
        .unwrap()
    }

    #[test]
    fn weights_must_lie_on_simplex() {
        assert!(YawCostWeights::new(0.3, 0.6, 0.1).is_ok());
        assert!(YawCostWeights::new(0.3, 0.6, 0.2).is_err());
        assert!(YawCostWeights::new(1.2, -0.2, 0.0).is_err());
        let w = YawCostWeights::default().without_target();
        assert!((w.alpha() - 0.9).abs() < 1e-15 && w.beta() == 0.0);
    }

    #[test]
    fn tracking_spot_values() {
        assert_eq!(tracking_cost(3.0, 0.0, 0.1), 0.0);
        assert_eq!(tracking_cost(0.0, 0.0, 0.1), 0.0);
        // Dead zone is inclusive at its edge.
        let (dx, dy) = (0.1_f64.cos(), 0.1_f64.sin());
        assert_eq!(tracking_cost(dx, dy, dy.atan2(dx)), 0.0);
        assert!(tracking_cost(dx, dy, dy.atan2(dx) - 1e-9) > 0.0);
        assert!((tracking_cost(0.0, 1.0, 0.1) - 0.25).abs() < 1e-15);
        assert!((tracking_cost(-1.0, 1e-300, 0.1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_spot_values() {
        assert_eq!(energy_cost(0.7, 0.7), 0.0);
        assert!((energy_cost(PI / 4.0, 0.0) - PI * PI / 16.0).abs() < 1e-15);
        let wrapped = TAU - 6.0;
        assert!((energy_cost(-3.0, 3.0) - wrapped * wrapped).abs() < 1e-12);
        assert!((energy_cost(-3.0, 3.0) - 0.0801).abs() < 1e-4);
    }

    #[test]
    fn layer_counting_and_span() {
        let cfg = YawConfig {
            dt: 0.5,
            horizon: 2.0,
            ..YawConfig::default()
        };
        let g = build_layers(&line(10.0), 0.0, 0.0, &cfg).unwrap();
        assert_eq!(g.layers.len(), 4);
        assert!(!g.truncated);
        assert_eq!(pruned_span(PI, 0.5), PI / 2.0);
        let unpruned = build_layers(&line(10.0), 0.0, 0.0, &YawConfig { prune: false, ..cfg }).unwrap();
        assert!(g.node_count() < unpruned.node_count());
    }

    #[test]
    fn horizon_past_the_end_is_truncated() {
        let g = build_layers(&line(1.0), 0.2, 0.0, &YawConfig::default()).unwrap();
        assert!(g.truncated);
        assert_eq!(g.layers.len(), 2);
    }

    #[test]
    fn rejects_bad_settings() {
        let cfg = YawConfig {
            n_yaw: 3,
            ..YawConfig::default()
        };
        assert!(build_layers(&line(3.0), 0.0, 0.0, &cfg).is_err());
        let cfg = YawConfig {
            dt: 0.0,
            ..YawConfig::default()
        };
        assert!(build_layers(&line(3.0), 0.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn empty_pruned_layer_is_relaxed() {
        let cfg = YawConfig {
            n_yaw: 4,
            omega_max: 0.1,
            ..YawConfig::default()
        };
        let g = build_layers(&line(10.0), 0.0, PI / 4.0, &cfg).unwrap();
        assert!(g.layers[0].relaxed);
        assert_eq!(g.layers[0].indices.len(), 4);
    }

    #[test]
    fn fully_known_grid_on_axis_target_costs_nothing() {
        let mut grid = EntropyGrid::new(
            Vector3::new(-5.0, -5.0, 0.0),
            Vector3::new(5.0, 5.0, 2.0),
            0.5,
            LogOddsParams {
                p_min: 0.0,
                p_max: 1.0,
                ..LogOddsParams::default()
            },
        );
        grid.fill(0.0);
        let cfg = YawConfig {
            n_yaw: 8,
            dt: 0.5,
            horizon: 0.5,
            ..YawConfig::default()
        };
        let traj = line(10.0);
        let g = build_layers(&traj, 0.0, 0.0, &cfg).unwrap();
        let target = TargetObservation::at(Vector3::new(20.0, 0.0, 1.0));
        let scores = score_layers(&g, &grid, &target, &cfg);
        let j = g.layers[0].indices.iter().position(|&i| g.lattice[i] == 0.0).unwrap();
        let c = node_cost(scores[0].entropy[j], scores[0].tracking[j], energy_cost(0.0, 0.0), &cfg.weights);
        assert_eq!(c, 0.0);
        let seq = receding_replan(&traj, 0.0, 0.0, &grid, &target, &cfg).unwrap();
        assert_eq!(seq.points[1].1, 0.0);
    }

    #[test]
    fn known_grid_without_target_holds_yaw() {
        let mut grid = EntropyGrid::new(
            Vector3::new(-5.0, -5.0, 0.0),
            Vector3::new(5.0, 5.0, 2.0),
            0.5,
            LogOddsParams {
                p_min: 0.0,
                p_max: 1.0,
                ..LogOddsParams::default()
            },
        );
        grid.fill(1.0);
        let cfg = YawConfig::default();
        let start = yaw_lattice(cfg.n_yaw)[5];
        let seq = receding_replan(&line(10.0), 0.0, start, &grid, &TargetObservation::lost(), &cfg).unwrap();
        assert!(seq.points.iter().all(|p| p.1 == start), "{:?}", seq.points);
    }

    #[test]
    fn yaw_interpolates_along_short_arc() {
        let seq = YawSequence {
            points: vec![(0.0, 3.0), (1.0, -3.0)],
            indices: vec![0],
            reward: 0.0,
            layers: 1,
            pruned_fraction: 0.0,
            truncated: false,
            relaxed: false,
        };
        let mid = seq.yaw_at(0.5);
        assert!((mid.abs() - PI).abs() < 1e-12, "{mid}");
        assert_eq!(seq.yaw_at(-1.0), 3.0);
        assert_eq!(seq.yaw_at(5.0), -3.0);
    }

    #[test]
    fn tangent_yaw_follows_velocity() {
        assert_eq!(tangent_yaw(&Vector3::new(0.0, 2.0, 0.0), 1.0), PI / 2.0);
        assert_eq!(tangent_yaw(&Vector3::zeros(), 1.0), 1.0);
    }

    #[test]
    fn tracking_angle_is_signed() {
        let p = Vector3::zeros();
        assert!((tracking_angle(&p, 0.0, &Vector3::new(1.0, 1.0, 0.0)) - PI / 4.0).abs() < 1e-15);
        assert!((tracking_angle(&p, PI / 2.0, &Vector3::new(1.0, 0.0, 0.0)) + PI / 2.0).abs() < 1e-15);
    }
}
