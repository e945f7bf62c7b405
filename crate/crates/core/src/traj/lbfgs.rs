//! Limited-memory BFGS with a bracketing weak-Wolfe line search.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the gradient norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when `|Δf| / max(|f|, 1)` over one iteration falls below this.
    pub relative_tolerance: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iterations: 300,
            gradient_tolerance: 1e-5,
            relative_tolerance: 1e-8,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStop {
    Gradient,
    RelativeDecrease,
    MaxIterations,
    LineSearch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: LbfgsStop,
}

/// Two-loop recursion for `H·g` from stored `(s, y, 1/yᵀs)` pairs.
fn two_loop(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alpha = vec![0.0; pairs.len()];
    for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[i] = rho * s.dot(&q);
        q.axpy(-alpha[i], y, 1.0);
    }
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.dot(y);
    }
    for (i, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * y.dot(&q);
        q.axpy(alpha[i] - beta, s, 1.0);
    }
    q
}

/// Minimises `f`, which returns the value and gradient at a point.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, options: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let outcome = |x: DVector<f64>, value: f64, g: &DVector<f64>, iterations, evaluations, stop| LbfgsOutcome {
        x,
        value,
        gradient_norm: g.norm(),
        iterations,
        evaluations,
        stop,
    };
    loop {
        if g.norm() < options.gradient_tolerance {
            return outcome(x, fx, &g, iterations, evaluations, LbfgsStop::Gradient);
        }
        if iterations >= options.max_iterations {
            return outcome(x, fx, &g, iterations, evaluations, LbfgsStop::MaxIterations);
        }
        let mut d = -two_loop(&g, &pairs);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            pairs.clear();
            d = -g.clone();
            slope = g.dot(&d);
        }
        let mut t = if pairs.is_empty() { (1.0 / g.norm()).min(1.0) } else { 1.0 };
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut accepted = None;
        for _ in 0..options.max_line_search {
            let xt = &x + &d * t;
            let (ft, gt) = f(&xt);
            evaluations += 1;
            if !ft.is_finite() || ft > fx + options.c1 * t * slope {
                hi = t;
            } else if gt.dot(&d) < options.c2 * slope {
                lo = t;
            } else {
                accepted = Some((xt, ft, gt));
                break;
            }
            t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        }
        let Some((xn, fn_, gn)) = accepted else {
            return outcome(x, fx, &g, iterations, evaluations, LbfgsStop::LineSearch);
        };
        iterations += 1;
        let s = &xn - &x;
        let y = &gn - &g;
        let ys = y.dot(&s);
        if ys > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == options.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / ys));
        }
        let decrease = (fx - fn_).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if decrease < options.relative_tolerance {
            return outcome(x, fx, &g, iterations, evaluations, LbfgsStop::RelativeDecrease);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (v, g)
        };
        let opts = LbfgsOptions {
            relative_tolerance: 0.0,
            gradient_tolerance: 1e-9,
            ..LbfgsOptions::default()
        };
        let out = minimize(f, DVector::from_vec(vec![-1.2, 1.0]), &opts);
        assert_eq!(out.stop, LbfgsStop::Gradient);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let f = |x: &DVector<f64>| (x.norm_squared(), x * 2.0);
        let out = minimize(f, DVector::zeros(3), &LbfgsOptions::default());
        assert_eq!(out.iterations, 0);
        assert_eq!(out.stop, LbfgsStop::Gradient);
    }
}
