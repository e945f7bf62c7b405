//! Spiral-pattern LiDAR synthesis from a continuously moving sensor.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tiltnav_core::imu::{mount_rotation, LidarScan};
use tiltnav_core::so3::Rotation;

use crate::motion::{sensor_rotation, Kinematics};
use crate::world::{HitKind, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mount {
    /// Upside down and pitched so the rear of the field of view looks at
    /// the ground below the platform.
    TiltedDown,
    /// Upright and level.
    Conventional,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorModel {
    /// Physical tilt of the tilted-down mount (rad).
    pub tilt: f64,
    /// Elevation limits of the sensor's own field of view (rad).
    pub fov_min: f64,
    pub fov_max: f64,
    /// Azimuth extent, centred on the sensor x-axis (rad).
    pub azimuth: f64,
    pub points_per_scan: usize,
    pub scan_duration: f64,
    pub range_sigma: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub mount: Mount,
    /// Returns above this world height are removed (open-top emulation).
    pub height_cut: Option<f64>,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            tilt: 20f64.to_radians(),
            fov_min: (-7f64).to_radians(),
            fov_max: 52f64.to_radians(),
            azimuth: TAU,
            points_per_scan: 20_000,
            scan_duration: 0.1,
            range_sigma: 0.0,
            min_range: 0.1,
            max_range: 40.0,
            mount: Mount::TiltedDown,
            height_cut: None,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.fov_min < self.fov_max) {
            return Err("field-of-view bounds out of order");
        }
        if !(self.range_sigma >= 0.0) {
            return Err("range noise must be nonnegative");
        }
        if !(self.scan_duration > 0.0) || self.points_per_scan == 0 {
            return Err("scan needs a positive duration and points");
        }
        if !(self.azimuth > 0.0 && self.azimuth <= TAU) {
            return Err("azimuth extent must lie in (0, 2π]");
        }
        Ok(())
    }

    /// Body-to-sensor rotation actually installed.
    pub fn mount_rotation(&self) -> Rotation {
        match self.mount {
            Mount::TiltedDown => mount_rotation(-self.tilt, true),
            Mount::Conventional => Rotation::identity(),
        }
    }

    pub fn inverted(&self) -> bool {
        self.mount == Mount::TiltedDown
    }

    /// Beam direction of the `i`-th shot in the sensor frame. Azimuth and
    /// the sine of elevation follow two low-discrepancy sequences, which
    /// spreads shots evenly over the field of view's solid angle.
    pub fn beam(&self, i: usize) -> Vector3<f64> {
        const G1: f64 = 0.754_877_666_246_692_7;
        const G2: f64 = 0.569_840_290_998_053_3;
        let u = (0.5 + G1 * i as f64).fract();
        let v = (0.5 + G2 * i as f64).fract();
        let az = (u - 0.5) * self.azimuth;
        let (s0, s1) = (self.fov_min.sin(), self.fov_max.sin());
        let el = (s0 + v * (s1 - s0)).asin();
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// Scan with per-point ground-truth annotations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthScan {
    /// Points in the sensor frame at their own stamps, as the estimator
    /// receives them.
    pub scan: LidarScan,
    /// The same returns in the world frame.
    pub world: Vec<Vector3<f64>>,
    pub kinds: Vec<HitKind>,
}

/// Casts one sweep over `[t0, t0 + scan_duration]` from the moving sensor.
pub fn synthesize_scan<K: Kinematics + ?Sized>(
    world: &World,
    sensor: &SensorModel,
    motion: &K,
    t0: f64,
    rng: &mut ChaCha8Rng,
) -> SynthScan {
    synthesize_sweep(world, sensor, motion, t0, t0 + sensor.scan_duration, rng)
}

/// Sweep over the explicit interval `[t0, t1]`; the first and last shots
/// carry exactly those stamps.
pub fn synthesize_sweep<K: Kinematics + ?Sized>(
    world: &World,
    sensor: &SensorModel,
    motion: &K,
    t0: f64,
    t1: f64,
    rng: &mut ChaCha8Rng,
) -> SynthScan {
    let n = sensor.points_per_scan;
    let mount = sensor.mount_rotation();
    let noise = (sensor.range_sigma > 0.0).then(|| Normal::new(0.0, sensor.range_sigma).expect("finite sigma"));
    let mut out = SynthScan {
        scan: LidarScan {
            t_start: t0,
            t_end: t1,
            points: Vec::with_capacity(n),
            stamps: Vec::with_capacity(n),
        },
        world: Vec::with_capacity(n),
        kinds: Vec::with_capacity(n),
    };
    for i in 0..n {
        let tau = if i + 1 == n && n > 1 {
            t1
        } else {
            t0 + (t1 - t0) * i as f64 / (n - 1).max(1) as f64
        };
        let rot = sensor_rotation(motion, &mount, tau);
        let origin = motion.position(tau);
        let beam = sensor.beam(i);
        let dir = rot * beam;
        let Some((range, kind)) = world.raycast(&origin, &dir, sensor.max_range, tau) else {
            continue;
        };
        // Noise is drawn for every return so the stream stays aligned
        // whatever the filters below drop.
        let measured = range + noise.map_or(0.0, |d| d.sample(rng));
        if measured < sensor.min_range || measured > sensor.max_range {
            continue;
        }
        let p_world = origin + dir * measured;
        if sensor.height_cut.is_some_and(|cut| p_world.z > cut) {
            continue;
        }
        out.scan.points.push(beam * measured);
        out.scan.stamps.push(tau);
        out.world.push(p_world);
        out.kinds.push(kind);
    }
    out
}
