//! Trajectory cost with analytic gradients and its quasi-Newton minimisation.

use nalgebra::{DVector, Matrix6x3, Vector3};

use super::field::DistanceField;
use super::lbfgs::{minimize, LbfgsOptions, LbfgsStop};
use super::{basis, end_rows, solve_system, BoundaryState, PiecewiseTrajectory, TrajError, COEFFS};

/// Uniform penalty samples per piece; the final piece also samples its end.
pub const SAMPLES_PER_PIECE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyWeights {
    pub smoothness: f64,
    pub feasibility: f64,
    pub obstacle: f64,
    pub time: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            smoothness: 1.0,
            feasibility: 1e4,
            obstacle: 1e4,
            time: 20.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerLimits {
    pub vel_max: f64,
    pub acc_max: f64,
    pub jer_max: f64,
    /// Clearance below which the obstacle penalty is active (m).
    pub clearance: f64,
    pub weights: PenaltyWeights,
}

impl Default for PlannerLimits {
    fn default() -> Self {
        Self {
            vel_max: 1.0,
            acc_max: 2.0,
            jer_max: 5.0,
            clearance: 0.5,
            weights: PenaltyWeights::default(),
        }
    }
}

/// Unweighted cost terms, the weighted total and its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    pub smoothness: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub obstacle: f64,
    pub time: f64,
    pub grad_q: Vec<Vector3<f64>>,
    pub grad_t: Vec<f64>,
}

/// Sample times of piece `i` as `(t, dt/dT_i)`.
fn sample_times(t_piece: f64, last: bool) -> impl Iterator<Item = (f64, f64)> {
    let n = SAMPLES_PER_PIECE;
    let count = if last { n + 1 } else { n };
    (0..count).map(move |j| {
        let u = j as f64 / n as f64;
        (u * t_piece, u)
    })
}

fn hinge_sq(x: f64) -> f64 {
    let h = x.max(0.0);
    h * h
}

/// Accumulates `dK/dd` of a derivative `d = p^{(order)}(t)` into the
/// coefficient gradient.
fn push_coeff_grad(g: &mut Matrix6x3<f64>, t: f64, order: usize, dk: &Vector3<f64>) {
    let b = basis(t, order);
    for (k, bk) in b.iter().enumerate() {
        if *bk != 0.0 {
            for a in 0..3 {
                g[(k, a)] += bk * dk[a];
            }
        }
    }
}

/// Weighted cost `λs·Js + λf·(Jv + Ja + Jj) + λo·Jo + λt·ΣT` of the
/// trajectory through `q` with durations `times`, and its gradient with
/// respect to both.
pub fn total_cost(
    q: &[Vector3<f64>],
    times: &[f64],
    start: &BoundaryState,
    end: &BoundaryState,
    limits: &PlannerLimits,
    field: Option<&DistanceField>,
) -> Result<CostBreakdown, TrajError> {
    let sys = solve_system(q, times, start, end)?;
    let traj = &sys.traj;
    let m = times.len();
    let w = limits.weights;
    let mut out = CostBreakdown {
        total: 0.0,
        smoothness: 0.0,
        velocity: 0.0,
        acceleration: 0.0,
        jerk: 0.0,
        obstacle: 0.0,
        time: times.iter().sum(),
        grad_q: vec![Vector3::zeros(); q.len()],
        grad_t: vec![w.time; m],
    };
    let mut gc = vec![Matrix6x3::<f64>::zeros(); m];
    let limit_sq = [
        limits.vel_max * limits.vel_max,
        limits.acc_max * limits.acc_max,
        limits.jer_max * limits.jer_max,
    ];
    for i in 0..m {
        let tp = times[i];
        let c = &traj.coeffs[i];
        // Exact ∫‖jerk‖² for a quintic, per axis.
        for a in 0..3 {
            let (c3, c4, c5) = (c[(3, a)], c[(4, a)], c[(5, a)]);
            let (t2, t3, t4, t5) = (tp * tp, tp.powi(3), tp.powi(4), tp.powi(5));
            out.smoothness += 36.0 * c3 * c3 * tp
                + 144.0 * c3 * c4 * t2
                + (192.0 * c4 * c4 + 240.0 * c3 * c5) * t3
                + 720.0 * c4 * c5 * t4
                + 720.0 * c5 * c5 * t5;
            gc[i][(3, a)] += w.smoothness * (72.0 * c3 * tp + 144.0 * c4 * t2 + 240.0 * c5 * t3);
            gc[i][(4, a)] += w.smoothness * (144.0 * c3 * t2 + 384.0 * c4 * t3 + 720.0 * c5 * t4);
            gc[i][(5, a)] += w.smoothness * (240.0 * c3 * t3 + 720.0 * c4 * t4 + 1440.0 * c5 * t5);
            let jerk_end = 6.0 * c3 + 24.0 * c4 * tp + 60.0 * c5 * t2;
            out.grad_t[i] += w.smoothness * jerk_end * jerk_end;
        }
        for (t, dt_dtp) in sample_times(tp, i + 1 == m) {
            let derivs: [Vector3<f64>; 5] = std::array::from_fn(|k| traj.eval_piece(i, t, k));
            for (slot, order) in [(0, 1), (1, 2), (2, 3)] {
                let d = derivs[order];
                let x = d.norm_squared() - limit_sq[slot];
                if x <= 0.0 {
                    continue;
                }
                let pen = hinge_sq(x);
                match slot {
                    0 => out.velocity += pen,
                    1 => out.acceleration += pen,
                    _ => out.jerk += pen,
                }
                let dk = d * (4.0 * x * w.feasibility);
                push_coeff_grad(&mut gc[i], t, order, &dk);
                out.grad_t[i] += dk.dot(&derivs[order + 1]) * dt_dtp;
            }
            if let Some(f) = field {
                let (dis, grad) = f.distance_gradient(&derivs[0]);
                let x = limits.clearance - dis;
                if x > 0.0 {
                    out.obstacle += x;
                    let dk = -grad * w.obstacle;
                    push_coeff_grad(&mut gc[i], t, 0, &dk);
                    out.grad_t[i] += dk.dot(&derivs[1]) * dt_dtp;
                }
            }
        }
    }
    out.total = w.smoothness * out.smoothness
        + w.feasibility * (out.velocity + out.acceleration + out.jerk)
        + w.obstacle * out.obstacle
        + w.time * out.time;

    // Adjoint pass: Aᵀλ = ∂K/∂c, one right-hand side per axis.
    let rows = end_rows(m);
    for a in 0..3 {
        let mut lambda: Vec<f64> = gc
            .iter()
            .flat_map(|g| (0..COEFFS).map(move |k| g[(k, a)]))
            .collect();
        sys.lu.solve_transpose_in_place(&mut lambda);
        for (i, gq) in out.grad_q.iter_mut().enumerate() {
            gq[a] = lambda[3 + 6 * i];
        }
        for &(r, piece, k) in &rows {
            let higher = traj.eval_piece(piece, times[piece], k + 1)[a];
            out.grad_t[piece] -= lambda[r] * higher;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeOptions {
    pub lbfgs: LbfgsOptions,
    /// Whether piece durations are free variables.
    pub optimize_times: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            lbfgs: LbfgsOptions::default(),
            optimize_times: true,
        }
    }
}

pub type Termination = LbfgsStop;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub termination: Termination,
    pub breakdown: CostBreakdown,
}

fn pack(q: &[Vector3<f64>], times: &[f64], with_times: bool) -> DVector<f64> {
    let mut v: Vec<f64> = q.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    if with_times {
        v.extend(times.iter().map(|t| t.ln()));
    }
    DVector::from_vec(v)
}

fn unpack(x: &DVector<f64>, pieces: usize, fixed_times: &[f64], with_times: bool) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let q = (0..pieces - 1)
        .map(|i| Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]))
        .collect();
    let times = if with_times {
        let off = 3 * (pieces - 1);
        (0..pieces).map(|i| x[off + i].exp()).collect()
    } else {
        fixed_times.to_vec()
    };
    (q, times)
}

/// Minimises [`total_cost`] over the intermediate waypoints and, optionally,
/// the log-durations of the pieces.
pub fn optimize_trajectory(
    q0: &[Vector3<f64>],
    t0: &[f64],
    start: &BoundaryState,
    end: &BoundaryState,
    limits: &PlannerLimits,
    field: Option<&DistanceField>,
    options: &OptimizeOptions,
) -> Result<(PiecewiseTrajectory, OptimizeReport), TrajError> {
    let initial = total_cost(q0, t0, start, end, limits, field)?;
    if !initial.total.is_finite() {
        return Err(TrajError::NonFiniteCost);
    }
    let m = t0.len();
    let with_times = options.optimize_times;
    let objective = |x: &DVector<f64>| {
        let (q, times) = unpack(x, m, t0, with_times);
        match total_cost(&q, &times, start, end, limits, field) {
            Ok(c) if c.total.is_finite() => {
                let mut g: Vec<f64> = c.grad_q.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
                if with_times {
                    g.extend(c.grad_t.iter().zip(&times).map(|(gt, t)| gt * t));
                }
                (c.total, DVector::from_vec(g))
            }
            _ => (f64::INFINITY, DVector::zeros(x.len())),
        }
    };
    let out = minimize(objective, pack(q0, t0, with_times), &options.lbfgs);
    let (q, times) = unpack(&out.x, m, t0, with_times);
    let traj = solve_system(&q, &times, start, end)?.traj;
    let breakdown = total_cost(&q, &times, start, end, limits, field)?;
    let report = OptimizeReport {
        iterations: out.iterations,
        evaluations: out.evaluations,
        initial_cost: initial.total,
        final_cost: breakdown.total,
        termination: out.stop,
        breakdown,
    };
    Ok((traj, report))
}

/// Straight line from `start` to `goal` cut into `pieces` equal segments,
/// each timed for half the speed limit.
pub fn initial_guess(
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    pieces: usize,
    vel_max: f64,
) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let pieces = pieces.max(1);
    let q = (1..pieces)
        .map(|i| start + (goal - start) * (i as f64 / pieces as f64))
        .collect();
    let seg = (goal - start).norm() / pieces as f64;
    let t = (seg / (0.5 * vel_max)).max(0.1);
    (q, vec![t; pieces])
}
