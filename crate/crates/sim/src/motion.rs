//! Ground-truth platform motion and the inertial readings it produces.

use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tiltnav_core::imu::ImuSample;
use tiltnav_core::so3::Rotation;
use tiltnav_core::state::GRAVITY;
use tiltnav_core::traj::PiecewiseTrajectory;

/// Continuous platform kinematics. The body frame is yaw-only; the sensor
/// frame is the body frame followed by the mount rotation.
pub trait Kinematics {
    fn span(&self) -> (f64, f64);
    fn position(&self, t: f64) -> Vector3<f64>;
    fn velocity(&self, t: f64) -> Vector3<f64>;
    fn acceleration(&self, t: f64) -> Vector3<f64>;
    fn yaw(&self, t: f64) -> f64;
    fn yaw_rate(&self, t: f64) -> f64;

    fn body_rotation(&self, t: f64) -> Rotation {
        Rotation::rot_z(self.yaw(t))
    }
}

/// Stationary platform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hover {
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub duration: f64,
}

impl Kinematics for Hover {
    fn span(&self) -> (f64, f64) {
        (0.0, self.duration)
    }
    fn position(&self, _: f64) -> Vector3<f64> {
        self.position
    }
    fn velocity(&self, _: f64) -> Vector3<f64> {
        Vector3::zeros()
    }
    fn acceleration(&self, _: f64) -> Vector3<f64> {
        Vector3::zeros()
    }
    fn yaw(&self, _: f64) -> f64 {
        self.yaw
    }
    fn yaw_rate(&self, _: f64) -> f64 {
        0.0
    }
}

/// Level circle at constant angular rate with an optional spin about z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Orbit {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub rate: f64,
    pub yaw_rate: f64,
    pub duration: f64,
}

impl Kinematics for Orbit {
    fn span(&self) -> (f64, f64) {
        (0.0, self.duration)
    }
    fn position(&self, t: f64) -> Vector3<f64> {
        let (s, c) = (self.rate * t).sin_cos();
        self.center + Vector3::new(c, s, 0.0) * self.radius
    }
    fn velocity(&self, t: f64) -> Vector3<f64> {
        let (s, c) = (self.rate * t).sin_cos();
        Vector3::new(-s, c, 0.0) * (self.radius * self.rate)
    }
    fn acceleration(&self, t: f64) -> Vector3<f64> {
        let (s, c) = (self.rate * t).sin_cos();
        -Vector3::new(c, s, 0.0) * (self.radius * self.rate * self.rate)
    }
    fn yaw(&self, t: f64) -> f64 {
        self.yaw_rate * t
    }
    fn yaw_rate(&self, _: f64) -> f64 {
        self.yaw_rate
    }
}

/// Yaw acceleration limit of the heading controller (rad/s²).
pub const YAW_ACCEL_LIMIT: f64 = 6.0;
/// Time constant with which the controller closes a heading error (s).
pub const YAW_TIME_CONSTANT: f64 = 0.25;

/// Yaw history with a piecewise-linear, continuous rate, extended causally
/// by the heading controller. Knots are never modified once written.
#[derive(Clone, Debug, PartialEq)]
pub struct YawTrack {
    /// `(t, ψ, ψ̇)` with `ψ` unwrapped.
    knots: Vec<(f64, f64, f64)>,
}

impl YawTrack {
    pub fn new(t0: f64, yaw: f64) -> Self {
        Self {
            knots: vec![(t0, yaw, 0.0)],
        }
    }

    pub fn last(&self) -> (f64, f64, f64) {
        *self.knots.last().expect("track has a knot")
    }

    /// Appends a knot at `t`, turning toward `target` under the rate limit
    /// `max_rate` and [`YAW_ACCEL_LIMIT`]. The commanded rate also stays low
    /// enough to brake before the error is overrun.
    pub fn steer(&mut self, t: f64, target: f64, max_rate: f64) {
        let (t0, psi0, r0) = self.last();
        let h = t - t0;
        assert!(h > 0.0, "yaw knots must advance in time");
        let err = tiltnav_core::so3::wrap_angle(target - psi0);
        let braking = (2.0 * YAW_ACCEL_LIMIT * err.abs()).sqrt();
        let want = (err / YAW_TIME_CONSTANT).clamp(-max_rate, max_rate).clamp(-braking, braking);
        let dr = YAW_ACCEL_LIMIT * h;
        let mut r1 = want.clamp(r0 - dr, r0 + dr).clamp(-max_rate, max_rate);
        // Land on the target instead of stepping past it when the
        // acceleration limit allows.
        let step = 0.5 * h * (r0 + r1);
        if err != 0.0 && step * err.signum() > err.abs() {
            let land = 2.0 * err / h - r0;
            r1 = land.clamp(r0 - dr, r0 + dr);
        }
        self.knots.push((t, psi0 + 0.5 * h * (r0 + r1), r1));
    }

    /// Segment whose half-open span `(t_a, t_b]` holds `t`. A knot belongs
    /// to the segment ending on it, so a sample taken at the newest knot
    /// already sees that segment's rate.
    fn segment(&self, t: f64) -> Option<usize> {
        if self.knots.len() < 2 || t <= self.knots[0].0 {
            return None;
        }
        let i = self.knots.partition_point(|k| k.0 < t);
        (i < self.knots.len()).then(|| i - 1)
    }

    pub fn yaw(&self, t: f64) -> f64 {
        match self.segment(t) {
            None if t <= self.knots[0].0 => self.knots[0].1,
            None => self.last().1,
            Some(i) => {
                let (ta, pa, ra) = self.knots[i];
                let (tb, _, rb) = self.knots[i + 1];
                let s = t - ta;
                pa + ra * s + 0.5 * (rb - ra) * s * s / (tb - ta)
            }
        }
    }

    pub fn yaw_rate(&self, t: f64) -> f64 {
        match self.segment(t) {
            None => 0.0,
            Some(i) => {
                let (ta, _, ra) = self.knots[i];
                let (tb, _, rb) = self.knots[i + 1];
                ra + (rb - ra) * (t - ta) / (tb - ta)
            }
        }
    }
}

/// Trajectory flown after a stationary hold, with a controller-driven yaw.
#[derive(Clone, Debug, PartialEq)]
pub struct Flight {
    pub traj: PiecewiseTrajectory,
    /// Stationary time before the trajectory starts (s).
    pub hold: f64,
    pub yaw: YawTrack,
}

impl Flight {
    pub fn new(traj: PiecewiseTrajectory, hold: f64, initial_yaw: f64) -> Self {
        Self {
            traj,
            hold,
            yaw: YawTrack::new(0.0, initial_yaw),
        }
    }

    /// Trajectory-local time, clamped to the trajectory span.
    pub fn local(&self, t: f64) -> f64 {
        (t - self.hold).clamp(0.0, self.traj.duration())
    }

    fn moving(&self, t: f64) -> bool {
        t > self.hold && t < self.hold + self.traj.duration()
    }
}

impl Kinematics for Flight {
    fn span(&self) -> (f64, f64) {
        (0.0, self.hold + self.traj.duration())
    }
    fn position(&self, t: f64) -> Vector3<f64> {
        self.traj.eval(self.local(t), 0).value
    }
    fn velocity(&self, t: f64) -> Vector3<f64> {
        if self.moving(t) {
            self.traj.eval(self.local(t), 1).value
        } else {
            Vector3::zeros()
        }
    }
    fn acceleration(&self, t: f64) -> Vector3<f64> {
        if self.moving(t) {
            self.traj.eval(self.local(t), 2).value
        } else {
            Vector3::zeros()
        }
    }
    fn yaw(&self, t: f64) -> f64 {
        self.yaw.yaw(t)
    }
    fn yaw_rate(&self, t: f64) -> f64 {
        self.yaw.yaw_rate(t)
    }
}

/// Sensor-frame orientation in the world.
pub fn sensor_rotation<K: Kinematics + ?Sized>(motion: &K, mount: &Rotation, t: f64) -> Rotation {
    motion.body_rotation(t) * *mount
}

/// Additive IMU error model (per-sample standard deviations).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImuErrorModel {
    pub gyro_sigma: f64,
    pub accel_sigma: f64,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_walk: f64,
    pub accel_walk: f64,
}

/// Stateful generator so bias random walks continue across calls.
#[derive(Clone, Debug)]
pub struct ImuSynth {
    pub model: ImuErrorModel,
    pub mount: Rotation,
    pub rate: f64,
    gyro_bias: Vector3<f64>,
    accel_bias: Vector3<f64>,
    rng: ChaCha8Rng,
    next_index: u64,
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    if sigma <= 0.0 {
        return Vector3::zeros();
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

impl ImuSynth {
    pub fn new(model: ImuErrorModel, mount: Rotation, rate: f64, rng: ChaCha8Rng) -> Self {
        assert!(rate > 0.0, "IMU rate must be positive");
        Self {
            gyro_bias: model.gyro_bias,
            accel_bias: model.accel_bias,
            model,
            mount,
            rate,
            rng,
            next_index: 0,
        }
    }

    /// Noise-free reading at `t`.
    pub fn ideal<K: Kinematics + ?Sized>(&self, motion: &K, t: f64) -> ImuSample {
        let r = sensor_rotation(motion, &self.mount, t);
        let inv = r.inverse();
        let omega = Vector3::new(0.0, 0.0, motion.yaw_rate(t));
        let specific = motion.acceleration(t) + Vector3::new(0.0, 0.0, GRAVITY);
        ImuSample {
            stamp: t,
            gyro: inv * omega,
            accel: inv * specific,
        }
    }

    /// All samples on the fixed `k / rate` grid up to and including `t_end`
    /// that have not been produced yet.
    pub fn advance<K: Kinematics + ?Sized>(&mut self, motion: &K, t_end: f64) -> Vec<ImuSample> {
        let mut out = Vec::new();
        loop {
            let t = self.next_index as f64 / self.rate;
            if t > t_end + 1e-12 {
                break;
            }
            let mut s = self.ideal(motion, t);
            s.gyro += self.gyro_bias + gaussian(&mut self.rng, self.model.gyro_sigma);
            s.accel += self.accel_bias + gaussian(&mut self.rng, self.model.accel_sigma);
            self.gyro_bias += gaussian(&mut self.rng, self.model.gyro_walk);
            self.accel_bias += gaussian(&mut self.rng, self.model.accel_walk);
            out.push(s);
            self.next_index += 1;
        }
        out
    }
}

/// Samples of `motion` at `rate` over its span.
pub fn synthesize_imu<K: Kinematics + ?Sized>(
    motion: &K,
    model: ImuErrorModel,
    mount: Rotation,
    rate: f64,
    rng: ChaCha8Rng,
) -> Vec<ImuSample> {
    let mut synth = ImuSynth::new(model, mount, rate, rng);
    synth.advance(motion, motion.span().1)
}
