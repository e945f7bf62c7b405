//! Minimum-jerk piecewise-quintic trajectories through free waypoints, and
//! their optimisation against smoothness, dynamic limits, clearance and
//! flight time.

mod banded;
mod cost;
mod field;
mod lbfgs;

pub use banded::BandedMatrix;
pub use cost::{
    initial_guess, optimize_trajectory, total_cost, CostBreakdown, OptimizeOptions, OptimizeReport,
    PlannerLimits, PenaltyWeights, Termination, SAMPLES_PER_PIECE,
};
pub use field::DistanceField;
pub use lbfgs::{minimize, LbfgsOptions, LbfgsOutcome, LbfgsStop};

use std::io::{self, Write};

use nalgebra::{Matrix6x3, Vector3};
use thiserror::Error;

/// Coefficients per piece and axis (`2s` for jerk-optimal pieces).
pub const COEFFS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajError {
    #[error("expected {expected} waypoints for {pieces} pieces, got {got}")]
    WaypointCount {
        expected: usize,
        pieces: usize,
        got: usize,
    },
    #[error("need at least one piece")]
    NoPieces,
    #[error("piece duration {0} is not positive and finite")]
    BadDuration(f64),
    #[error("coefficient system singular at row {0}")]
    Singular(usize),
    #[error("cost is not finite at the initial guess")]
    NonFiniteCost,
}

/// Position, velocity and acceleration at a trajectory end.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundaryState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl BoundaryState {
    pub fn rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    fn derivative(&self, k: usize) -> Vector3<f64> {
        match k {
            0 => self.position,
            1 => self.velocity,
            _ => self.acceleration,
        }
    }
}

/// `d^k/dt^k` of the monomials `1, t, …, t⁵`.
pub(crate) fn basis(t: f64, k: usize) -> [f64; COEFFS] {
    let mut out = [0.0; COEFFS];
    for (j, o) in out.iter_mut().enumerate().skip(k) {
        let falling: f64 = ((j - k + 1)..=j).map(|v| v as f64).product();
        *o = falling * t.powi((j - k) as i32);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluated {
    pub value: Vector3<f64>,
    /// Set when the query time was outside `[0, duration]`.
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseTrajectory {
    /// Row `k` of piece `i` holds the `t^k` coefficient for x, y, z.
    pub coeffs: Vec<Matrix6x3<f64>>,
    pub times: Vec<f64>,
    pub waypoints: Vec<Vector3<f64>>,
    pub start: BoundaryState,
    pub end: BoundaryState,
}

impl PiecewiseTrajectory {
    pub fn pieces(&self) -> usize {
        self.times.len()
    }

    pub fn duration(&self) -> f64 {
        self.times.iter().sum()
    }

    /// Derivative of order `order` (0 = position) at `t` seconds from the
    /// start, clamped to the trajectory span.
    pub fn eval(&self, t: f64, order: usize) -> Evaluated {
        let total = self.duration();
        let clamped = !(0.0..=total).contains(&t);
        let mut local = t.clamp(0.0, total);
        let mut piece = 0;
        while piece + 1 < self.times.len() && local > self.times[piece] {
            local -= self.times[piece];
            piece += 1;
        }
        local = local.min(self.times[piece]);
        Evaluated {
            value: self.eval_piece(piece, local, order),
            clamped,
        }
    }

    pub fn eval_piece(&self, piece: usize, t: f64, order: usize) -> Vector3<f64> {
        let b = basis(t, order);
        let c = &self.coeffs[piece];
        let mut out = Vector3::zeros();
        for (k, bk) in b.iter().enumerate() {
            out += c.row(k).transpose() * *bk;
        }
        out
    }

    /// Uniform samples `(t, p, v, a)` at `rate` Hz including the end point.
    pub fn sample(&self, rate: f64) -> Vec<(f64, Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
        let total = self.duration();
        let n = (total * rate).floor() as usize;
        let mut stamps: Vec<f64> = (0..=n).map(|i| i as f64 / rate).collect();
        if total - stamps[n] > 1e-9 {
            stamps.push(total);
        }
        stamps
            .into_iter()
            .map(|t| {
                (
                    t,
                    self.eval(t, 0).value,
                    self.eval(t, 1).value,
                    self.eval(t, 2).value,
                )
            })
            .collect()
    }

    /// CSV rows `t,x,y,z,vx,vy,vz,ax,ay,az` at 50 Hz.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,y,z,vx,vy,vz,ax,ay,az")?;
        for (t, p, v, a) in self.sample(50.0) {
            writeln!(
                out,
                "{t:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z
            )?;
        }
        Ok(())
    }
}

/// Free-function spelling of [`PiecewiseTrajectory::eval`].
pub fn eval_trajectory(traj: &PiecewiseTrajectory, t: f64, order: usize) -> Evaluated {
    traj.eval(t, order)
}

/// Row layout of the coefficient system: which piece each row evaluates at
/// its end time, and with which derivative order.
pub(crate) fn end_rows(pieces: usize) -> Vec<(usize, usize, usize)> {
    let mut rows = Vec::new();
    for i in 0..pieces - 1 {
        let base = 3 + 6 * i;
        for (off, k) in [0, 3, 4, 0, 1, 2].into_iter().enumerate() {
            rows.push((base + off, i, k));
        }
    }
    let base = 6 * pieces - 3;
    for k in 0..3 {
        rows.push((base + k, pieces - 1, k));
    }
    rows
}

/// Factored coefficient system with its solution, kept for adjoint
/// gradients.
pub(crate) struct CoefficientSystem {
    pub lu: BandedMatrix,
    pub traj: PiecewiseTrajectory,
}

fn check_inputs(q: &[Vector3<f64>], times: &[f64]) -> Result<(), TrajError> {
    if times.is_empty() {
        return Err(TrajError::NoPieces);
    }
    if q.len() + 1 != times.len() {
        return Err(TrajError::WaypointCount {
            expected: times.len() - 1,
            pieces: times.len(),
            got: q.len(),
        });
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(TrajError::BadDuration(*t));
    }
    Ok(())
}

pub(crate) fn solve_system(
    q: &[Vector3<f64>],
    times: &[f64],
    start: &BoundaryState,
    end: &BoundaryState,
) -> Result<CoefficientSystem, TrajError> {
    check_inputs(q, times)?;
    let m = times.len();
    let n = COEFFS * m;
    let mut a = BandedMatrix::zeros(n, 6, 6);
    let mut rhs = vec![Vector3::zeros(); n];
    for k in 0..3 {
        a.set(k, k, basis(0.0, k)[k]);
        rhs[k] = start.derivative(k);
    }
    for i in 0..m - 1 {
        let base = 3 + 6 * i;
        let (own, next) = (6 * i, 6 * i + 6);
        let row = |k| basis(times[i], k);
        let zero = |k| basis(0.0, k);
        for j in 0..COEFFS {
            a.set(base, own + j, row(0)[j]);
        }
        rhs[base] = q[i];
        for (off, k) in [(1, 3), (2, 4), (3, 0), (4, 1), (5, 2)] {
            for j in 0..COEFFS {
                let v = row(k)[j];
                if v != 0.0 {
                    a.set(base + off, own + j, v);
                }
                let w = zero(k)[j];
                if w != 0.0 {
                    a.set(base + off, next + j, -w);
                }
            }
        }
    }
    let last = 6 * (m - 1);
    for k in 0..3 {
        let r = n - 3 + k;
        let b = basis(times[m - 1], k);
        for j in 0..COEFFS {
            if b[j] != 0.0 {
                a.set(r, last + j, b[j]);
            }
        }
        rhs[r] = end.derivative(k);
    }
    a.factorize().map_err(TrajError::Singular)?;
    let mut coeffs = vec![Matrix6x3::zeros(); m];
    for axis in 0..3 {
        let mut b: Vec<f64> = rhs.iter().map(|v| v[axis]).collect();
        a.solve_in_place(&mut b);
        for (i, c) in coeffs.iter_mut().enumerate() {
            for k in 0..COEFFS {
                c[(k, axis)] = b[COEFFS * i + k];
            }
        }
    }
    Ok(CoefficientSystem {
        lu: a,
        traj: PiecewiseTrajectory {
            coeffs,
            times: times.to_vec(),
            waypoints: q.to_vec(),
            start: *start,
            end: *end,
        },
    })
}

/// Minimum-jerk interpolant through the intermediate waypoints `q` with
/// piece durations `times`, continuous through snap at every junction.
pub fn solve_coefficients(
    q: &[Vector3<f64>],
    times: &[f64],
    start: &BoundaryState,
    end: &BoundaryState,
) -> Result<PiecewiseTrajectory, TrajError> {
    solve_system(q, times, start, end).map(|s| s.traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_case(seed: u64, m: usize) -> PiecewiseTrajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0));
        let q: Vec<_> = (0..m - 1).map(|_| v()).collect();
        let start = BoundaryState {
            position: v(),
            velocity: v() * 0.3,
            acceleration: v() * 0.1,
        };
        let end = BoundaryState::rest(v());
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let times: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..4.0)).collect();
        solve_coefficients(&q, &times, &start, &end).unwrap()
    }

    #[test]
    fn rest_at_origin_is_zero() {
        let rest = BoundaryState::default();
        let tr = solve_coefficients(&[], &[2.0], &rest, &rest).unwrap();
        assert!(tr.coeffs[0].iter().all(|c| *c == 0.0));
    }

    #[test]
    fn single_piece_is_classical_quintic() {
        let tr = solve_coefficients(
            &[],
            &[1.0],
            &BoundaryState::rest(Vector3::zeros()),
            &BoundaryState::rest(Vector3::x()),
        )
        .unwrap();
        let expect = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
        for (k, e) in expect.iter().enumerate() {
            assert!((tr.coeffs[0][(k, 0)] - e).abs() < 1e-10, "t^{k}");
        }
        assert!((tr.eval(0.5, 0).value - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(tr.eval(0.0, 0).value, Vector3::zeros());
    }

    #[test]
    fn junctions_are_continuous_through_snap() {
        for seed in 0..20 {
            let tr = random_case(seed, 2 + (seed as usize % 6));
            for i in 0..tr.pieces() - 1 {
                for k in 0..=4 {
                    let a = tr.eval_piece(i, tr.times[i], k);
                    let b = tr.eval_piece(i + 1, 0.0, k);
                    assert!((a - b).norm() < 1e-8 * (1.0 + a.norm()), "seed {seed} piece {i} order {k}");
                }
                assert!((tr.eval_piece(i, tr.times[i], 0) - tr.waypoints[i]).norm() < 1e-8);
            }
            let t = tr.duration();
            assert!((tr.eval(t, 0).value - tr.end.position).norm() < 1e-8);
            assert!(tr.eval(t, 1).value.norm() < 1e-8);
        }
    }

    #[test]
    fn banded_solve_matches_dense_lu() {
        use nalgebra::{DMatrix, DVector};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [1, 2, 5, 12] {
            let times: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..6.0)).collect();
            let q: Vec<_> = (0..m - 1)
                .map(|_| Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 1.0))
                .collect();
            let start = BoundaryState::rest(Vector3::zeros());
            let end = BoundaryState::rest(Vector3::new(4.0, 1.0, 1.0));
            let sys = solve_system(&q, &times, &start, &end).unwrap();
            // Rebuild the dense matrix from the row layout independently.
            let n = 6 * m;
            let mut a = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            for k in 0..3 {
                a[(k, k)] = basis(0.0, k)[k];
                b[k] = start.derivative(k).x;
            }
            for i in 0..m.saturating_sub(1) {
                let r = 3 + 6 * i;
                let e = basis(times[i], 0);
                for j in 0..6 {
                    a[(r, 6 * i + j)] = e[j];
                }
                b[r] = q[i].x;
                for (off, k) in [(1, 3), (2, 4), (3, 0), (4, 1), (5, 2)] {
                    let e = basis(times[i], k);
                    let z = basis(0.0, k);
                    for j in 0..6 {
                        a[(r + off, 6 * i + j)] = e[j];
                        a[(r + off, 6 * i + 6 + j)] = -z[j];
                    }
                }
            }
            for k in 0..3 {
                let e = basis(times[m - 1], k);
                for j in 0..6 {
                    a[(n - 3 + k, 6 * (m - 1) + j)] = e[j];
                }
                b[n - 3 + k] = end.derivative(k).x;
            }
            let x = a.lu().solve(&b).unwrap();
            for i in 0..m {
                for k in 0..6 {
                    let got = sys.traj.coeffs[i][(k, 0)];
                    let want = x[6 * i + k];
                    assert!((got - want).abs() < 1e-7 * (1.0 + want.abs()), "m={m} piece {i} k {k}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn velocity_matches_finite_difference() {
        let tr = random_case(3, 4);
        let h = 1e-6;
        for t in [0.3, 1.1, 2.05, tr.duration() - 0.1] {
            let fd = (tr.eval(t + h, 0).value - tr.eval(t - h, 0).value) / (2.0 * h);
            let v = tr.eval(t, 1).value;
            assert!((fd - v).norm() / v.norm().max(1e-3) < 1e-6, "t={t}");
        }
    }

    #[test]
    fn out_of_range_is_clamped() {
        let tr = random_case(1, 3);
        let e = tr.eval(-1.0, 0);
        assert!(e.clamped);
        assert_eq!(e.value, tr.eval(0.0, 0).value);
        assert!(tr.eval(tr.duration() + 1.0, 0).clamped);
    }

    #[test]
    fn zero_duration_is_rejected() {
        let r = BoundaryState::default();
        assert!(matches!(
            solve_coefficients(&[Vector3::zeros()], &[1.0, 0.0], &r, &r),
            Err(TrajError::BadDuration(_))
        ));
    }

    #[test]
    fn csv_is_sampled_at_fifty_hertz() {
        let tr = solve_coefficients(
            &[],
            &[1.0],
            &BoundaryState::rest(Vector3::zeros()),
            &BoundaryState::rest(Vector3::x()),
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 51);
        assert!(text.lines().nth(26).unwrap().starts_with("0.5000,0.500000,"));
    }
}
