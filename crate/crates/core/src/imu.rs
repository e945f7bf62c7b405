//! IMU front-end: mount tilt calibration, inertial propagation and per-point
//! motion compensation of LiDAR scans.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::so3::Rotation;
use crate::state::StateVector;

/// Mean gyro magnitude (rad/s) above which a calibration window is rejected.
pub const STATIONARY_GYRO_LIMIT: f64 = 0.02;
/// Normalised-time slack absorbed by clamping before a point is dropped.
pub const MU_CLAMP_SLACK: f64 = 0.05;
const MIN_TILT_SAMPLES: usize = 10;
const MOTION_TABLE_STEPS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImuError {
    #[error("filter gain {0} outside (0, 1]")]
    InvalidGain(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("platform not stationary: mean gyro magnitude {0:.4} rad/s")]
    MotionDetected(f64),
    #[error("filtered vertical acceleration {0:e} too small to resolve pitch")]
    DegenerateOrientation(f64),
    #[error("IMU stamps not strictly increasing at index {0}")]
    NonMonotonicStamps(usize),
    #[error("empty integration interval")]
    EmptyInterval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub stamp: f64,
    /// Raw gyro reading (rad/s).
    pub gyro: Vector3<f64>,
    /// Raw specific force (m/s²).
    pub accel: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TiltEstimate {
    pub pitch: f64,
    pub filtered_ax: f64,
    pub filtered_az: f64,
    pub alpha: f64,
}

/// White-noise and bias random-walk parameters, per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuNoiseModel {
    pub gyro_cov: Matrix3<f64>,
    pub accel_cov: Matrix3<f64>,
    pub gyro_bias_walk: f64,
    pub accel_bias_walk: f64,
    pub initial_gyro_bias: Vector3<f64>,
    pub initial_accel_bias: Vector3<f64>,
}

impl ImuNoiseModel {
    pub fn isotropic(gyro_sigma: f64, accel_sigma: f64) -> Self {
        Self {
            gyro_cov: Matrix3::identity() * gyro_sigma * gyro_sigma,
            accel_cov: Matrix3::identity() * accel_sigma * accel_sigma,
            gyro_bias_walk: 1e-5,
            accel_bias_walk: 1e-4,
            initial_gyro_bias: Vector3::zeros(),
            initial_accel_bias: Vector3::zeros(),
        }
    }
}

impl Default for ImuNoiseModel {
    fn default() -> Self {
        Self::isotropic(2e-3, 2e-2)
    }
}

/// First-order low-pass step `α·raw + (1−α)·prev`.
pub fn low_pass(prev_filtered: f64, raw: f64, alpha: f64) -> Result<f64, ImuError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ImuError::InvalidGain(alpha));
    }
    Ok(alpha * raw + (1.0 - alpha) * prev_filtered)
}

/// Estimates the mount pitch from a stationary accelerometer window as
/// `atan(ax / az)` of the low-pass filtered x and z specific force.
pub fn estimate_tilt(samples: &[ImuSample], alpha: f64) -> Result<TiltEstimate, ImuError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ImuError::InvalidGain(alpha));
    }
    if samples.len() < MIN_TILT_SAMPLES {
        return Err(ImuError::TooFewSamples {
            needed: MIN_TILT_SAMPLES,
            got: samples.len(),
        });
    }
    let mean_gyro =
        samples.iter().map(|s| s.gyro.norm()).sum::<f64>() / samples.len() as f64;
    if mean_gyro >= STATIONARY_GYRO_LIMIT {
        return Err(ImuError::MotionDetected(mean_gyro));
    }
    let (mut ax, mut az) = (samples[0].accel.x, samples[0].accel.z);
    for s in &samples[1..] {
        ax = low_pass(ax, s.accel.x, alpha)?;
        az = low_pass(az, s.accel.z, alpha)?;
    }
    if az.abs() < 1e-6 {
        return Err(ImuError::DegenerateOrientation(az));
    }
    Ok(TiltEstimate {
        pitch: (ax / az).atan(),
        filtered_ax: ax,
        filtered_az: az,
        alpha,
    })
}

/// Body-to-sensor rotation for a sensor pitched about its own y-axis,
/// optionally mounted upside down (rolled by π about body x first).
///
/// The calibrated accelerometer pitch has the opposite sign of the mount
/// angle in both configurations, hence the negation.
pub fn mount_rotation(calibrated_pitch: f64, inverted: bool) -> Rotation {
    let tilt = Rotation::rot_y(-calibrated_pitch);
    if inverted {
        Rotation::rot_x(std::f64::consts::PI) * tilt
    } else {
        tilt
    }
}

/// Increments accumulated over an IMU interval, expressed in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuDeltas {
    /// Rotation vector of the relative attitude change.
    pub dphi: Vector3<f64>,
    /// Position increment, including the `∫v dt` contribution.
    pub dpos: Vector3<f64>,
    pub dv: Vector3<f64>,
    /// Interval length (s).
    pub dt: f64,
}

fn check_stamps(samples: &[ImuSample]) -> Result<(), ImuError> {
    for (i, w) in samples.windows(2).enumerate() {
        if !(w[1].stamp > w[0].stamp) {
            return Err(ImuError::NonMonotonicStamps(i + 1));
        }
    }
    Ok(())
}

/// Integrates bias-corrected gyro and gravity-compensated specific force
/// over consecutive sample pairs (midpoint rule on angular rate, trapezoid
/// on world-frame acceleration).
pub fn preintegrate(samples: &[ImuSample], xi: &StateVector) -> Result<ImuDeltas, ImuError> {
    if samples.len() < 2 {
        return Err(ImuError::EmptyInterval);
    }
    check_stamps(samples)?;
    let g = xi.gravity();
    let mut rot = xi.attitude;
    let mut vel = xi.velocity;
    let mut dpos = Vector3::zeros();
    let mut dv = Vector3::zeros();
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.stamp - a.stamp;
        let omega = 0.5 * (a.gyro + b.gyro) - xi.gyro_bias;
        let next = rot.oplus(&(omega * h));
        let acc = 0.5 * (rot * (a.accel - xi.accel_bias) + next * (b.accel - xi.accel_bias)) + g;
        dpos += vel * h + 0.5 * acc * h * h;
        vel += acc * h;
        dv += acc * h;
        rot = next;
    }
    Ok(ImuDeltas {
        dphi: xi.attitude.ominus(&rot),
        dpos,
        dv,
        dt: samples[samples.len() - 1].stamp - samples[0].stamp,
    })
}

/// Applies integrated increments: `t + Δt_pos`, `φ ⊕ Δφ`, `v + Δv`.
pub fn propagate_state(xi: &StateVector, deltas: &ImuDeltas) -> StateVector {
    StateVector {
        position: xi.position + deltas.dpos,
        attitude: xi.attitude.oplus(&deltas.dphi),
        velocity: xi.velocity + deltas.dv,
        ..*xi
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interpolated {
    pub value: Vector3<f64>,
    /// Set when `mu` was outside `[0, 1]` and had to be clamped.
    pub clamped: bool,
}

/// Quadratic Bézier `(1−μ)²w_k + 2μ(1−μ)w_m + μ²w_{k+1}`.
pub fn bezier_interpolate(
    w_k: &Vector3<f64>,
    w_m: &Vector3<f64>,
    w_k1: &Vector3<f64>,
    mu: f64,
) -> Interpolated {
    let clamped = !(0.0..=1.0).contains(&mu);
    let mu = mu.clamp(0.0, 1.0);
    let nu = 1.0 - mu;
    Interpolated {
        value: w_k * (nu * nu) + w_m * (2.0 * mu * nu) + w_k1 * (mu * mu),
        clamped,
    }
}

/// One sweep of LiDAR returns in the sensor frame with per-point stamps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LidarScan {
    pub t_start: f64,
    pub t_end: f64,
    pub points: Vec<Vector3<f64>>,
    pub stamps: Vec<f64>,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Samples covering `[t0, t1]`, with the end points linearly interpolated
/// from their neighbours. `None` when the input does not bracket the span.
pub fn slice_interval(samples: &[ImuSample], t0: f64, t1: f64) -> Option<Vec<ImuSample>> {
    if !(t1 > t0) || samples.len() < 2 {
        return None;
    }
    let at = |t: f64| -> Option<ImuSample> {
        let i = samples.partition_point(|s| s.stamp <= t);
        if i == 0 {
            return None;
        }
        let a = &samples[i - 1];
        if a.stamp == t {
            return Some(*a);
        }
        let b = samples.get(i)?;
        let u = (t - a.stamp) / (b.stamp - a.stamp);
        Some(ImuSample {
            stamp: t,
            gyro: a.gyro.lerp(&b.gyro, u),
            accel: a.accel.lerp(&b.accel, u),
        })
    };
    let mut out = vec![at(t0)?];
    out.extend(samples.iter().filter(|s| s.stamp > t0 && s.stamp < t1).copied());
    out.push(at(t1)?);
    Some(out)
}

/// Rigid transform from LiDAR to IMU frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarExtrinsic {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Default for LidarExtrinsic {
    fn default() -> Self {
        Self {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }
}

impl LidarExtrinsic {
    pub fn apply(&self, p_lidar: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * *p_lidar + self.translation
    }
}

/// Counts of points rejected by the motion model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UndistortStats {
    pub accepted: usize,
    pub clamped: usize,
    pub rejected: usize,
}

#[derive(Clone, Copy, Debug)]
struct MotionNode {
    rot: Rotation,
    pos: Vector3<f64>,
    vel: Vector3<f64>,
}

/// Continuous motion over one scan interval `[t_k, t_{k+1}]`, integrated from
/// Bézier-smoothed IMU rates starting at the scan-start state.
#[derive(Clone, Debug)]
pub struct ScanMotion {
    t_start: f64,
    t_end: f64,
    gyro: [Vector3<f64>; 3],
    accel: [Vector3<f64>; 3],
    gravity: Vector3<f64>,
    nodes: Vec<MotionNode>,
}

fn nearest_sample(samples: &[ImuSample], t: f64) -> &ImuSample {
    samples
        .iter()
        .min_by(|a, b| (a.stamp - t).abs().total_cmp(&(b.stamp - t).abs()))
        .expect("non-empty")
}

impl ScanMotion {
    /// Builds the interpolation state. The middle control point is the raw
    /// sample nearest to the interval midpoint.
    pub fn new(
        start: &StateVector,
        samples: &[ImuSample],
        t_start: f64,
        t_end: f64,
    ) -> Result<Self, ImuError> {
        if samples.is_empty() || !(t_end > t_start) {
            return Err(ImuError::EmptyInterval);
        }
        let mid = 0.5 * (t_start + t_end);
        let picks = [
            nearest_sample(samples, t_start),
            nearest_sample(samples, mid),
            nearest_sample(samples, t_end),
        ];
        let gyro = picks.map(|s| s.gyro - start.gyro_bias);
        let accel = picks.map(|s| s.accel - start.accel_bias);
        let mut motion = ScanMotion {
            t_start,
            t_end,
            gyro,
            accel,
            gravity: start.gravity(),
            nodes: Vec::with_capacity(MOTION_TABLE_STEPS + 1),
        };
        let mut node = MotionNode {
            rot: start.attitude,
            pos: start.position,
            vel: start.velocity,
        };
        motion.nodes.push(node);
        let h = 1.0 / MOTION_TABLE_STEPS as f64;
        for i in 0..MOTION_TABLE_STEPS {
            node = motion.step(&node, i as f64 * h, h);
            motion.nodes.push(node);
        }
        Ok(motion)
    }

    fn rates(&self, mu: f64) -> (Vector3<f64>, Vector3<f64>) {
        let w = bezier_interpolate(&self.gyro[0], &self.gyro[1], &self.gyro[2], mu).value;
        let a = bezier_interpolate(&self.accel[0], &self.accel[1], &self.accel[2], mu).value;
        (w, a)
    }

    /// One midpoint step of length `dmu` (normalised time) from `mu0`.
    fn step(&self, node: &MotionNode, mu0: f64, dmu: f64) -> MotionNode {
        let span = self.t_end - self.t_start;
        let h = dmu * span;
        let (w, a) = self.rates(mu0 + 0.5 * dmu);
        let half = node.rot.oplus(&(w * (0.5 * h)));
        let acc = half * a + self.gravity;
        MotionNode {
            rot: node.rot.oplus(&(w * h)),
            pos: node.pos + node.vel * h + 0.5 * acc * h * h,
            vel: node.vel + acc * h,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Normalised time, clamped within the allowed slack.
    pub fn normalized_time(&self, tau: f64) -> Option<(f64, bool)> {
        let mu = (tau - self.t_start) / (self.t_end - self.t_start);
        if mu < -MU_CLAMP_SLACK || mu > 1.0 + MU_CLAMP_SLACK || !mu.is_finite() {
            None
        } else {
            Some((mu.clamp(0.0, 1.0), !(0.0..=1.0).contains(&mu)))
        }
    }

    /// Attitude, position and velocity of the IMU at stamp `tau`.
    pub fn pose_at(&self, tau: f64) -> Option<(Rotation, Vector3<f64>, Vector3<f64>)> {
        let (mu, _) = self.normalized_time(tau)?;
        let h = 1.0 / MOTION_TABLE_STEPS as f64;
        let idx = ((mu / h).floor() as usize).min(MOTION_TABLE_STEPS - 1);
        let rem = mu - idx as f64 * h;
        let node = if rem > 0.0 {
            self.step(&self.nodes[idx], idx as f64 * h, rem)
        } else {
            self.nodes[idx]
        };
        Some((node.rot, node.pos, node.vel))
    }

    pub fn end_pose(&self) -> (Rotation, Vector3<f64>) {
        let n = self.nodes[MOTION_TABLE_STEPS];
        (n.rot, n.pos)
    }
}

/// Maps a LiDAR point with stamp `tau` into the world frame using the pose
/// interpolated at its own stamp. Returns `None` (and counts a rejection)
/// when `tau` falls outside the scan interval beyond the clamp slack.
pub fn undistort_point(
    p_lidar: &Vector3<f64>,
    tau: f64,
    motion: &ScanMotion,
    extrinsic: &LidarExtrinsic,
    stats: &mut UndistortStats,
) -> Option<Vector3<f64>> {
    let Some((_, clamped)) = motion.normalized_time(tau) else {
        stats.rejected += 1;
        return None;
    };
    let (rot, pos, _) = motion.pose_at(tau)?;
    stats.accepted += 1;
    if clamped {
        stats.clamped += 1;
    }
    Some(rot * extrinsic.apply(p_lidar) + pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stationary(accel: Vector3<f64>, n: usize) -> Vec<ImuSample> {
        (0..n)
            .map(|i| ImuSample {
                stamp: i as f64 * 0.005,
                gyro: Vector3::zeros(),
                accel,
            })
            .collect()
    }

    #[test]
    fn slice_interpolates_end_points() {
        let samples: Vec<_> = (0..5)
            .map(|i| ImuSample {
                stamp: i as f64 * 0.1,
                gyro: Vector3::new(i as f64, 0.0, 0.0),
                accel: Vector3::zeros(),
            })
            .collect();
        let cut = slice_interval(&samples, 0.05, 0.2).unwrap();
        let stamps: Vec<_> = cut.iter().map(|s| s.stamp).collect();
        assert_eq!(stamps, vec![0.05, 0.1, 0.2]);
        assert!((cut[0].gyro.x - 0.5).abs() < 1e-12);
        assert!(slice_interval(&samples, 0.3, 0.5).is_none());
    }

    #[test]
    fn low_pass_examples() {
        assert_eq!(low_pass(0.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(low_pass(2.0, 2.0, 0.3).unwrap(), 2.0);
        assert!(low_pass(0.0, 1.0, 0.0).is_err());
        assert!(low_pass(0.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn low_pass_geometric_series() {
        let (c, alpha) = (3.0, 0.3);
        let mut v = 0.0;
        for _ in 0..10 {
            v = low_pass(v, c, alpha).unwrap();
        }
        let expect = c * (1.0 - (1.0f64 - alpha).powi(10));
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn tilt_from_exact_gravity() {
        let g = 9.81;
        let t = 20f64.to_radians();
        let est = estimate_tilt(&stationary(Vector3::new(g * t.sin(), 0.0, g * t.cos()), 50), 0.1)
            .unwrap();
        assert!((est.pitch - t).abs() < 1e-9);
        let flat = estimate_tilt(&stationary(Vector3::new(0.0, 0.0, g), 50), 0.1).unwrap();
        assert_eq!(flat.pitch, 0.0);
    }

    #[test]
    fn tilt_rejects_bad_windows() {
        let mut s = stationary(Vector3::new(0.0, 0.0, 9.81), 20);
        assert!(matches!(
            estimate_tilt(&s[..5], 0.1),
            Err(ImuError::TooFewSamples { .. })
        ));
        for x in &mut s {
            x.gyro = Vector3::new(0.0, 0.0, 0.1);
        }
        assert!(matches!(estimate_tilt(&s, 0.1), Err(ImuError::MotionDetected(_))));
        let sideways = stationary(Vector3::new(9.81, 0.0, 0.0), 20);
        assert!(matches!(
            estimate_tilt(&sideways, 0.1),
            Err(ImuError::DegenerateOrientation(_))
        ));
    }

    #[test]
    fn mount_rotation_reproduces_calibration() {
        // Specific force seen by a mounted sensor on a level body must
        // calibrate back to the pitch the mount was built from.
        for inverted in [false, true] {
            let pitch = -0.3;
            let r = mount_rotation(pitch, inverted);
            let f = r.inverse() * Vector3::new(0.0, 0.0, 9.81);
            assert!(((f.x / f.z).atan() - pitch).abs() < 1e-12);
        }
    }

    #[test]
    fn bezier_endpoints_and_midpoint() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let m = Vector3::new(-1.0, 0.5, 9.0);
        let b = Vector3::new(4.0, -2.0, 0.0);
        assert_eq!(bezier_interpolate(&a, &m, &b, 0.0).value, a);
        assert_eq!(bezier_interpolate(&a, &m, &b, 1.0).value, b);
        let z = Vector3::zeros();
        let one = Vector3::new(1.0, 1.0, 1.0);
        let mid = bezier_interpolate(&z, &one, &z, 0.5).value;
        assert!((mid - one * 0.5).norm() < 1e-15);
        let c = Vector3::new(0.7, 0.7, 0.7);
        for mu in [0.1, 0.33, 0.9] {
            assert!((bezier_interpolate(&c, &c, &c, mu).value - c).norm() < 1e-15);
        }
        let out = bezier_interpolate(&a, &m, &b, 1.02);
        assert!(out.clamped);
        assert_eq!(out.value, b);
    }

    #[test]
    fn preintegrate_needs_interval() {
        let xi = StateVector::default();
        assert_eq!(preintegrate(&[], &xi), Err(ImuError::EmptyInterval));
        let s = stationary(Vector3::new(0.0, 0.0, 9.81), 1);
        assert_eq!(preintegrate(&s, &xi), Err(ImuError::EmptyInterval));
    }

    #[test]
    fn mu_slack_clamps_then_drops() {
        let xi = StateVector::default();
        let s = stationary(Vector3::new(0.0, 0.0, 9.81), 21);
        let motion = ScanMotion::new(&xi, &s, 0.0, 0.1).unwrap();
        assert_eq!(motion.normalized_time(0.103), Some((1.0, true)));
        assert_eq!(motion.normalized_time(0.11), None);
        let mut stats = UndistortStats::default();
        let ext = LidarExtrinsic::default();
        assert!(undistort_point(&Vector3::x(), 0.2, &motion, &ext, &mut stats).is_none());
        assert!(undistort_point(&Vector3::x(), -0.002, &motion, &ext, &mut stats).is_some());
        assert_eq!(stats, UndistortStats { accepted: 1, clamped: 1, rejected: 1 });
    }
}
