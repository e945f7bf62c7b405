//! Run logs and the summary metrics computed from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

use tiltnav_core::so3::wrap_angle;
use tiltnav_core::yaw::{tracking_angle, tracking_cost};

/// One logged step of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub truth: Vector3<f64>,
    pub estimate: Vector3<f64>,
    /// Heading actually flown.
    pub yaw: f64,
    /// True target position while a target exists.
    pub target: Option<Vector3<f64>>,
    /// Total map entropy after this step, when a map is kept.
    pub entropy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub seed: u64,
    pub steps: usize,
    pub ate_rmse: f64,
    pub ate_max: f64,
    /// Absolute height error at the final step.
    pub z_drift: f64,
    /// Time integral of the tracking cost.
    pub tracking_error: f64,
    /// Largest absolute bearing offset to the target (rad).
    pub tracking_angle_max: f64,
    pub entropy_initial: f64,
    pub entropy_final: f64,
    /// Steps whose total entropy rose by more than the tolerance.
    pub entropy_increases: usize,
    /// Sum of squared wrapped heading changes.
    pub yaw_energy: f64,
    pub diverged: bool,
}

pub const ENTROPY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("line {0}: expected key=value")]
    Syntax(usize),
    #[error("line {line}: value for `{key}` is not a number")]
    Value { line: usize, key: String },
}

/// `psi_th` is the tracking dead zone; `divergence` the ATE beyond which
/// a run is flagged.
pub fn compute_metrics(log: &RunLog, psi_th: f64, divergence: f64) -> Metrics {
    let mut m = Metrics {
        seed: log.seed,
        steps: log.steps.len(),
        ..Metrics::default()
    };
    if log.steps.is_empty() {
        return m;
    }
    let mut sq = 0.0;
    let mut prev: Option<&StepRecord> = None;
    let mut entropy_prev: Option<f64> = None;
    for s in &log.steps {
        let err = (s.estimate - s.truth).norm();
        sq += err * err;
        m.ate_max = m.ate_max.max(err);
        if let Some(p) = prev {
            let dt = s.t - p.t;
            if let Some(target) = s.target {
                let theta = tracking_angle(&s.truth, s.yaw, &target);
                m.tracking_error += tracking_cost(theta.cos(), theta.sin(), psi_th) * dt;
            }
            m.yaw_energy += wrap_angle(s.yaw - p.yaw).powi(2);
        }
        if let Some(target) = s.target {
            m.tracking_angle_max = m.tracking_angle_max.max(tracking_angle(&s.truth, s.yaw, &target).abs());
        }
        if let Some(h) = s.entropy {
            match entropy_prev {
                None => m.entropy_initial = h,
                Some(hp) if h > hp + ENTROPY_TOLERANCE => m.entropy_increases += 1,
                Some(_) => {}
            }
            m.entropy_final = h;
            entropy_prev = Some(h);
        }
        prev = Some(s);
    }
    m.ate_rmse = (sq / log.steps.len() as f64).sqrt();
    let last = log.steps.last().expect("nonempty");
    m.z_drift = (last.estimate.z - last.truth.z).abs();
    m.diverged = !m.ate_rmse.is_finite() || m.ate_max > divergence;
    m
}

impl Metrics {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        [
            ("seed", self.seed as f64),
            ("steps", self.steps as f64),
            ("ate_rmse", self.ate_rmse),
            ("ate_max", self.ate_max),
            ("z_drift", self.z_drift),
            ("tracking_error", self.tracking_error),
            ("tracking_angle_max", self.tracking_angle_max),
            ("entropy_initial", self.entropy_initial),
            ("entropy_final", self.entropy_final),
            ("entropy_increases", self.entropy_increases as f64),
            ("yaw_energy", self.yaw_energy),
            ("diverged", if self.diverged { 1.0 } else { 0.0 }),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect()
    }

    /// Flat `key=value` lines. Floats use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_map() {
            writeln!(out, "{k}={v}").expect("string write");
        }
        out
    }
}

pub fn parse_metrics(text: &str) -> Result<BTreeMap<String, f64>, MetricsError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(MetricsError::Syntax(i + 1))?;
        let key = k.trim().to_owned();
        let value = v.trim().parse::<f64>().map_err(|_| MetricsError::Value {
            line: i + 1,
            key: key.clone(),
        })?;
        out.insert(key, value);
    }
    Ok(out)
}
