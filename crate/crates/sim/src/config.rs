//! Scenario files: world, sensors, motion, target, planner settings and the
//! seed, all in one TOML document. Angles are given in degrees.

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::Deserialize;
use thiserror::Error;

use tiltnav_core::traj::{PenaltyWeights, PlannerLimits};
use tiltnav_core::yaw::{YawConfig, YawCostWeights};

use crate::motion::ImuErrorModel;
use crate::sensor::{Mount, SensorModel};
use crate::world::{OrientedBox, RingTarget, World, MAX_TARGET_SPEED};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub a: [f64; 2],
    pub b: [f64; 2],
    #[serde(default = "default_thickness")]
    pub thickness: f64,
    #[serde(default = "default_wall_height")]
    pub height: f64,
}

fn default_thickness() -> f64 {
    0.2
}

fn default_wall_height() -> f64 {
    3.0
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default = "yes")]
    pub ground: bool,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    #[serde(default)]
    pub walls: Vec<WallSpec>,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    pub tilt_deg: f64,
    pub fov_min_deg: f64,
    pub fov_max_deg: f64,
    pub azimuth_deg: f64,
    pub points: usize,
    pub scan_duration: f64,
    pub range_sigma: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub mount: MountSpec,
    pub height_cut: Option<f64>,
}

impl Default for SensorSpec {
    fn default() -> Self {
        let s = SensorModel::default();
        Self {
            tilt_deg: s.tilt.to_degrees(),
            fov_min_deg: s.fov_min.to_degrees(),
            fov_max_deg: s.fov_max.to_degrees(),
            azimuth_deg: s.azimuth.to_degrees(),
            points: s.points_per_scan,
            scan_duration: s.scan_duration,
            range_sigma: s.range_sigma,
            min_range: s.min_range,
            max_range: s.max_range,
            mount: MountSpec::TiltedDown,
            height_cut: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MountSpec {
    TiltedDown,
    Conventional,
}

impl From<MountSpec> for Mount {
    fn from(m: MountSpec) -> Self {
        match m {
            MountSpec::TiltedDown => Mount::TiltedDown,
            MountSpec::Conventional => Mount::Conventional,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ImuSpec {
    pub rate: f64,
    pub gyro_sigma: f64,
    pub accel_sigma: f64,
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
    pub gyro_walk: f64,
    pub accel_walk: f64,
}

impl Default for ImuSpec {
    fn default() -> Self {
        Self {
            rate: 200.0,
            gyro_sigma: 0.0,
            accel_sigma: 0.0,
            gyro_bias: [0.0; 3],
            accel_bias: [0.0; 3],
            gyro_walk: 0.0,
            accel_walk: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    /// Waypoints flown in order, starting and ending at rest.
    pub route: Vec<[f64; 3]>,
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// Stationary time before the route starts; the first half calibrates
    /// the estimator.
    #[serde(default = "default_hold")]
    pub hold: f64,
    /// Refine the route with the trajectory optimiser against the world's
    /// distance field.
    #[serde(default)]
    pub optimize: bool,
}

fn default_speed() -> f64 {
    0.8
}

fn default_hold() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub path: Vec<[f64; 3]>,
    pub speed: f64,
    #[serde(default = "default_ring_radius")]
    pub radius: f64,
    #[serde(default = "default_tube")]
    pub tube: f64,
    /// Distance along the back-and-forth cycle already covered at t = 0 (m).
    #[serde(default)]
    pub start: f64,
}

fn default_ring_radius() -> f64 {
    0.4
}

fn default_tube() -> f64 {
    0.02
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSpec {
    pub vel_max: f64,
    pub acc_max: f64,
    pub jer_max: f64,
    pub clearance: f64,
    pub smoothness: f64,
    pub feasibility: f64,
    pub obstacle: f64,
    pub time: f64,
    pub field_resolution: f64,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        let l = PlannerLimits::default();
        Self {
            vel_max: l.vel_max,
            acc_max: l.acc_max,
            jer_max: l.jer_max,
            clearance: l.clearance,
            smoothness: l.weights.smoothness,
            feasibility: l.weights.feasibility,
            obstacle: l.weights.obstacle,
            time: l.weights.time,
            field_resolution: 0.1,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct YawSpec {
    pub n_yaw: usize,
    pub dt: f64,
    pub horizon: f64,
    pub omega_max: f64,
    pub psi_th_deg: f64,
    pub fov_deg: f64,
    pub replan_rate: f64,
    pub prune: bool,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for YawSpec {
    fn default() -> Self {
        let c = YawConfig::default();
        Self {
            n_yaw: c.n_yaw,
            dt: c.dt,
            horizon: c.horizon,
            omega_max: c.omega_max,
            psi_th_deg: c.psi_th.to_degrees(),
            fov_deg: c.fov.to_degrees(),
            replan_rate: c.replan_rate,
            prune: c.prune,
            alpha: c.weights.alpha(),
            beta: c.weights.beta(),
            gamma: c.weights.gamma(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EntropySpec {
    pub cell: f64,
    /// Voxel size used to thin the returns before ray casting.
    pub ray_voxel: f64,
}

impl Default for EntropySpec {
    fn default() -> Self {
        Self {
            cell: 0.25,
            ray_voxel: 0.2,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LioSpec {
    pub target_points: usize,
    pub min_range: f64,
    /// ATE (m) beyond which a run is flagged as diverged.
    pub divergence: f64,
}

impl Default for LioSpec {
    fn default() -> Self {
        Self {
            target_points: 10_000,
            min_range: 0.3,
            divergence: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub world: WorldSpec,
    #[serde(default)]
    pub sensor: SensorSpec,
    #[serde(default)]
    pub imu: ImuSpec,
    pub motion: MotionSpec,
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default)]
    pub yaw: YawSpec,
    #[serde(default)]
    pub entropy: EntropySpec,
    #[serde(default)]
    pub lio: LioSpec,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        if (0..3).any(|i| !(w.bounds_min[i] < w.bounds_max[i])) {
            return invalid("world bounds out of order");
        }
        for (i, b) in w.boxes.iter().enumerate() {
            if (0..3).any(|k| !(b.min[k] < b.max[k])) {
                return invalid(format!("box {i} has empty extent"));
            }
            if b.min[2] < 0.0 {
                return invalid(format!("box {i} extends below the ground"));
            }
        }
        for (i, wall) in w.walls.iter().enumerate() {
            if !(wall.height > 0.0 && wall.height.is_finite()) || !(wall.thickness > 0.0) {
                return invalid(format!("wall {i} needs a finite positive height and thickness"));
            }
            if wall.a == wall.b {
                return invalid(format!("wall {i} has zero length"));
            }
        }
        self.sensor_model().validate().map_err(|e| ConfigError::Invalid(e.into()))?;
        if !(self.imu.rate > 0.0) {
            return invalid("IMU rate must be positive");
        }
        let sigmas = [self.imu.gyro_sigma, self.imu.accel_sigma, self.imu.gyro_walk, self.imu.accel_walk];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return invalid("IMU noise levels must be nonnegative");
        }
        let m = &self.motion;
        if m.route.len() < 2 {
            return invalid("route needs at least two waypoints");
        }
        if !(m.speed > 0.0) || !(m.hold >= 0.2) {
            return invalid("route speed must be positive and hold at least 0.2 s");
        }
        if m.route.windows(2).any(|p| p[0] == p[1]) {
            return invalid("route has repeated consecutive waypoints");
        }
        if let Some(t) = &self.target {
            if t.path.len() < 2 || !(t.speed > 0.0) || !(t.radius > 0.0) || !(t.tube > 0.0) {
                return invalid("target needs a path, positive speed, radius and tube");
            }
            if t.speed > MAX_TARGET_SPEED {
                return invalid(format!("target speed above {MAX_TARGET_SPEED} m/s"));
            }
        }
        YawCostWeights::new(self.yaw.alpha, self.yaw.beta, self.yaw.gamma)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.yaw.n_yaw < 4 || !(self.yaw.dt > 0.0) || !(self.yaw.replan_rate > 0.0) {
            return invalid("yaw planner needs ≥ 4 yaws, positive step and replan rate");
        }
        if !(self.entropy.cell > 0.0) || !(self.entropy.ray_voxel > 0.0) {
            return invalid("entropy grid sizes must be positive");
        }
        Ok(())
    }

    pub fn world(&self) -> World {
        let w = &self.world;
        let mut boxes: Vec<OrientedBox> = w
            .walls
            .iter()
            .map(|s| OrientedBox::wall(Vector2::new(s.a[0], s.a[1]), Vector2::new(s.b[0], s.b[1]), s.thickness, s.height))
            .collect();
        boxes.extend(w.boxes.iter().map(|b| OrientedBox::from_bounds(v3(b.min), v3(b.max))));
        World {
            boxes,
            ground: w.ground,
            target: self.target.as_ref().map(|t| RingTarget {
                path: t.path.iter().copied().map(v3).collect(),
                speed: t.speed,
                radius: t.radius,
                tube: t.tube,
                start: t.start,
            }),
            bounds_min: v3(w.bounds_min),
            bounds_max: v3(w.bounds_max),
        }
    }

    pub fn sensor_model(&self) -> SensorModel {
        let s = &self.sensor;
        SensorModel {
            tilt: s.tilt_deg.to_radians(),
            fov_min: s.fov_min_deg.to_radians(),
            fov_max: s.fov_max_deg.to_radians(),
            azimuth: s.azimuth_deg.to_radians(),
            points_per_scan: s.points,
            scan_duration: s.scan_duration,
            range_sigma: s.range_sigma,
            min_range: s.min_range,
            max_range: s.max_range,
            mount: s.mount.into(),
            height_cut: s.height_cut,
        }
    }

    pub fn imu_model(&self) -> ImuErrorModel {
        let i = &self.imu;
        ImuErrorModel {
            gyro_sigma: i.gyro_sigma,
            accel_sigma: i.accel_sigma,
            gyro_bias: v3(i.gyro_bias),
            accel_bias: v3(i.accel_bias),
            gyro_walk: i.gyro_walk,
            accel_walk: i.accel_walk,
        }
    }

    pub fn route(&self) -> Vec<Vector3<f64>> {
        self.motion.route.iter().copied().map(v3).collect()
    }

    pub fn planner_limits(&self) -> PlannerLimits {
        let p = &self.planner;
        PlannerLimits {
            vel_max: p.vel_max,
            acc_max: p.acc_max,
            jer_max: p.jer_max,
            clearance: p.clearance,
            weights: PenaltyWeights {
                smoothness: p.smoothness,
                feasibility: p.feasibility,
                obstacle: p.obstacle,
                time: p.time,
            },
        }
    }

    pub fn yaw_config(&self) -> YawConfig {
        let y = &self.yaw;
        YawConfig {
            n_yaw: y.n_yaw,
            dt: y.dt,
            horizon: y.horizon,
            omega_max: y.omega_max,
            psi_th: y.psi_th_deg.to_radians(),
            fov: y.fov_deg.to_radians(),
            replan_rate: y.replan_rate,
            prune: y.prune,
            weights: YawCostWeights::new(y.alpha, y.beta, y.gamma).expect("validated weights"),
        }
    }
}
