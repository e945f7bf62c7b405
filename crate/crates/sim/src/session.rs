//! Closed-loop driver: flies a scenario scan by scan, feeding the
//! synthetic streams to the estimator, the entropy map, the ring detector
//! and the yaw planner.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use tiltnav_core::entropy::{EntropyGrid, LogOddsParams};
use tiltnav_core::imu::{ImuNoiseModel, ImuSample};
use tiltnav_core::lio::{LidarInertialOdometry, LioConfig, OdometryConfig, OdometryError, ScanDiagnostics};
use tiltnav_core::so3::Rotation;
use tiltnav_core::traj::{
    optimize_trajectory, solve_coefficients, DistanceField, BoundaryState, OptimizeOptions, OptimizeReport, PiecewiseTrajectory,
    TrajError,
};
use tiltnav_core::voxel::voxel_downsample;
use tiltnav_core::yaw::{receding_replan, tangent_yaw, TargetObservation, YawSequence};

use crate::config::Scenario;
use crate::metrics::{compute_metrics, Metrics, RunLog, StepRecord};
use crate::motion::{Flight, ImuSynth, Kinematics};
use crate::ring::detect_ring;
use crate::sensor::{synthesize_sweep, Mount};
use crate::world::{HitKind, World};

/// Independent random streams derived from the scenario seed.
const IMU_STREAM: u64 = 1;
const SCAN_STREAM: u64 = 2;
const RANSAC_STREAM: u64 = 3;

/// Candidate points for ring detection lie within the ring radius plus
/// this margin of the target centre.
pub const RING_GATE_MARGIN: f64 = 0.25;
/// A target unseen for this long (s) is treated as lost.
/// Plane-thickness gate in units of the range noise.
pub const PLANE_THICKNESS_PER_SIGMA: f64 = 1.5;
pub const TARGET_TIMEOUT: f64 = 1.0;
/// Blend factor for the target velocity estimate.
const VELOCITY_GAIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YawPolicy {
    /// Heading follows the horizontal velocity.
    Differential,
    /// Heading follows the receding-horizon yaw planner.
    PerceptionAware,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionOptions {
    /// Run the estimator; otherwise the ground-truth pose is reported.
    pub run_lio: bool,
    /// Detect the ring and feed it to the planner.
    pub track_target: bool,
    pub yaw: YawPolicy,
    pub mount: Option<Mount>,
    pub seed: Option<u64>,
    /// Keep an entropy image every this many scans (0 keeps only the last).
    pub snapshot_every: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            run_lio: true,
            track_target: true,
            yaw: YawPolicy::Differential,
            mount: None,
            seed: None,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("route trajectory: {0}")]
    Trajectory(#[from] TrajError),
    #[error("estimator initialisation: {0}")]
    Init(#[from] OdometryError),
}

/// Corner radius used to round the route before interpolation (m).
pub const CORNER_RADIUS: f64 = 1.0;
/// Spacing of the interpolated route samples (m).
const ROUTE_SPACING: f64 = 0.5;

/// Samples the polyline with its interior corners replaced by near-circular
/// arcs, at roughly `spacing` along the path. Arcs shrink on short legs.
pub fn rounded_route(route: &[Vector3<f64>], radius: f64, spacing: f64) -> Vec<Vector3<f64>> {
    let n = route.len();
    if n < 2 {
        return route.to_vec();
    }
    // Each interior corner is cut back along both legs by `cut`.
    let mut cuts = vec![0.0; n];
    let mut turns = vec![0.0; n];
    for i in 1..n - 1 {
        let a = (route[i] - route[i - 1]).normalize();
        let b = (route[i + 1] - route[i]).normalize();
        let turn = a.dot(&b).clamp(-1.0, 1.0).acos();
        turns[i] = turn;
        cuts[i] = radius * (0.5 * turn).tan();
    }
    for i in 1..n - 1 {
        // Legs ending at the route ends keep a straight part to start and
        // stop on; shared legs are split between their two corners.
        let share = |leg: f64, end_leg: bool| if end_leg { 0.45 * leg } else { 0.5 * leg };
        let prev = share((route[i] - route[i - 1]).norm(), i == 1);
        let next = share((route[i + 1] - route[i]).norm(), i == n - 2);
        cuts[i] = cuts[i].min(prev).min(next);
    }
    let mut pts = vec![route[0]];
    let push_line = |pts: &mut Vec<Vector3<f64>>, to: Vector3<f64>| {
        let from = *pts.last().expect("nonempty");
        let len = (to - from).norm();
        let k = (len / spacing).ceil().max(1.0) as usize;
        for j in 1..k {
            pts.push(from + (to - from) * (j as f64 / k as f64));
        }
        pts.push(to);
    };
    for i in 1..n - 1 {
        let a = (route[i] - route[i - 1]).normalize();
        let b = (route[i + 1] - route[i]).normalize();
        let entry = route[i] - a * cuts[i];
        let exit = route[i] + b * cuts[i];
        push_line(&mut pts, entry);
        if cuts[i] > 1e-9 && turns[i] > 1e-9 {
            // Quadratic Bézier with the corner as control point, close to
            // the circular arc for the turns found in mazes.
            let r = cuts[i] / (0.5 * turns[i]).tan();
            let len = r * turns[i];
            let k = (len / spacing).ceil().max(1.0) as usize;
            for j in 1..=k {
                let u = j as f64 / k as f64;
                let p = entry * (1.0 - u) * (1.0 - u) + route[i] * 2.0 * u * (1.0 - u) + exit * u * u;
                pts.push(p);
            }
        }
    }
    push_line(&mut pts, route[n - 1]);
    pts
}

/// Route through the scenario waypoints, optionally refined against the
/// world's distance field.
pub fn route_trajectory(
    scenario: &Scenario,
    world: &World,
) -> Result<(PiecewiseTrajectory, Option<OptimizeReport>), TrajError> {
    let route = rounded_route(&scenario.route(), CORNER_RADIUS, ROUTE_SPACING);
    let n = route.len();
    let q = &route[1..n - 1];
    let mut times: Vec<f64> = route
        .windows(2)
        .map(|w| (w[1] - w[0]).norm() / scenario.motion.speed)
        .collect();
    // Ease in and out of rest over the first and last two pieces.
    let m = times.len();
    for (i, stretch) in [(0usize, 2.0), (1, 1.3)] {
        if i < m {
            times[i] *= stretch;
        }
        if m > 2 * i + 1 {
            times[m - 1 - i] *= stretch;
        }
    }
    let start = BoundaryState::rest(route[0]);
    let end = BoundaryState::rest(route[n - 1]);
    if !scenario.motion.optimize {
        return Ok((solve_coefficients(q, &times, &start, &end)?, None));
    }
    let res = scenario.planner.field_resolution;
    let (origin, dims, cells) = world.occupancy(res);
    let field = DistanceField::from_occupancy(origin, dims, res, &cells);
    let (traj, report) = optimize_trajectory(
        q,
        &times,
        &start,
        &end,
        &scenario.planner_limits(),
        Some(&field),
        &OptimizeOptions::default(),
    )?;
    Ok((traj, Some(report)))
}

#[derive(Clone, Debug)]
pub struct SessionOutput {
    pub log: RunLog,
    pub metrics: Metrics,
    pub flight: Flight,
    /// Estimated sensor attitude per logged step.
    pub attitudes: Vec<Rotation>,
    pub estimator: Option<LidarInertialOdometry>,
    pub diagnostics: Vec<ScanDiagnostics>,
    pub entropy: EntropyGrid,
    /// `(step, PGM image)` of the column-entropy map.
    pub entropy_frames: Vec<(usize, Vec<u8>)>,
    pub detections: usize,
    pub replans: usize,
    /// Scans after which the estimator was abandoned, if it failed.
    pub lio_failure: Option<(usize, String)>,
    pub last_plan: Option<YawSequence>,
    pub optimize_report: Option<OptimizeReport>,
}

#[derive(Clone, Copy, Debug)]
struct TargetTrack {
    obs: TargetObservation,
    seen_at: f64,
}

impl TargetTrack {
    fn update(&mut self, center: Vector3<f64>, t: f64) {
        if self.obs.valid && t > self.seen_at {
            let v = (center - self.obs.position) / (t - self.seen_at);
            self.obs.velocity = self.obs.velocity * (1.0 - VELOCITY_GAIN) + v * VELOCITY_GAIN;
        } else {
            self.obs.velocity = Vector3::zeros();
        }
        self.obs.position = center;
        self.obs.valid = true;
        self.seen_at = t;
    }

    /// Observation extrapolated to `t`, or lost after the timeout.
    fn at(&mut self, t: f64) -> TargetObservation {
        if self.obs.valid && t - self.seen_at > TARGET_TIMEOUT {
            self.obs = TargetObservation::lost();
        }
        if !self.obs.valid {
            return TargetObservation::lost();
        }
        TargetObservation {
            position: self.obs.predict(t - self.seen_at),
            velocity: self.obs.velocity,
            valid: true,
        }
    }
}

fn pgm(grid: &EntropyGrid) -> Vec<u8> {
    let mut out = Vec::new();
    grid.write_pgm(&mut out).expect("in-memory write");
    out
}

pub fn run_session(scenario: &Scenario, options: &SessionOptions) -> Result<SessionOutput, SessionError> {
    let seed = options.seed.unwrap_or(scenario.seed);
    let world = scenario.world();
    let mut sensor = scenario.sensor_model();
    if let Some(m) = options.mount {
        sensor.mount = m;
    }
    let yaw_cfg = scenario.yaw_config();
    let (traj, optimize_report) = route_trajectory(scenario, &world)?;

    let route = scenario.route();
    let initial_yaw = tangent_yaw(&(route[1] - route[0]), 0.0);
    let hold = scenario.motion.hold;
    let mut flight = Flight::new(traj, hold, initial_yaw);
    let end = flight.span().1;
    // Scan boundaries sit exactly on the IMU sample grid.
    let rate = scenario.imu.rate;
    let ticks = (sensor.scan_duration * rate).round().max(1.0) as u64;
    let init_tick = (0.5 * hold * rate).round() as u64;
    let at = |tick: u64| tick as f64 / rate;
    let t_init = at(init_tick);
    let period = at(ticks);

    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s);
        rng
    };
    let mut imu = ImuSynth::new(scenario.imu_model(), sensor.mount_rotation(), scenario.imu.rate, stream(IMU_STREAM));
    let mut scan_rng = stream(SCAN_STREAM);
    let mut ransac_rng = stream(RANSAC_STREAM);

    let mut imu_buf: Vec<ImuSample> = imu.advance(&flight, t_init);
    let mut estimator = if options.run_lio {
        let s = &scenario.imu;
        let floor = ImuNoiseModel::default();
        let mut noise = ImuNoiseModel::isotropic(
            s.gyro_sigma.max(floor.gyro_cov[(0, 0)].sqrt()),
            s.accel_sigma.max(floor.accel_cov[(0, 0)].sqrt()),
        );
        noise.gyro_bias_walk = noise.gyro_bias_walk.max(s.gyro_walk);
        noise.accel_bias_walk = noise.accel_bias_walk.max(s.accel_walk);
        let defaults = OdometryConfig::default();
        let config = OdometryConfig {
            lio: LioConfig {
                max_plane_thickness: defaults
                    .lio
                    .max_plane_thickness
                    .max(PLANE_THICKNESS_PER_SIGMA * sensor.range_sigma),
                ..defaults.lio
            },
            noise,
            inverted_mount: sensor.inverted(),
            target_points: scenario.lio.target_points,
            min_range: scenario.lio.min_range,
            ..defaults
        };
        let mut odo = LidarInertialOdometry::new(config);
        odo.initialize(&imu_buf, flight.position(t_init), initial_yaw)?;
        Some(odo)
    } else {
        None
    };

    let w = &scenario.world;
    let mut grid = EntropyGrid::new(
        Vector3::from(w.bounds_min),
        Vector3::from(w.bounds_max),
        scenario.entropy.cell,
        LogOddsParams::default(),
    );

    let mut log = RunLog {
        seed,
        steps: Vec::new(),
    };
    let mut attitudes = Vec::new();
    let mut frames = Vec::new();
    let mut track = TargetTrack {
        obs: TargetObservation::lost(),
        seen_at: f64::NEG_INFINITY,
    };
    let mut plan: Option<YawSequence> = None;
    let mut next_replan = t_init;
    let mut detections = 0;
    let mut replans = 0;
    let mut lio_failure = None;
    let mut diagnostics = Vec::new();

    let steps = ((end - t_init) / period + 1e-9).floor() as usize;
    for k in 0..steps {
        let t0 = at(init_tick + k as u64 * ticks);
        let t1 = at(init_tick + (k as u64 + 1) * ticks);

        let desired = match (options.yaw, &plan) {
            (YawPolicy::PerceptionAware, Some(seq)) => seq.yaw_at(flight.local(t1)),
            _ => tangent_yaw(&flight.velocity(t1), flight.yaw.last().1),
        };
        flight.yaw.steer(t1, desired, yaw_cfg.omega_max);

        imu_buf.extend(imu.advance(&flight, t1));
        let scan = synthesize_sweep(&world, &sensor, &flight, t0, t1, &mut scan_rng);
        let truth = flight.position(t1);
        let truth_rot = crate::motion::sensor_rotation(&flight, &sensor.mount_rotation(), t1);

        let (estimate, attitude) = match estimator.as_mut() {
            Some(odo) if lio_failure.is_none() => match odo.process(&imu_buf, &scan.scan) {
                Ok(d) => {
                    diagnostics.push(d);
                    (odo.state().position, odo.state().attitude)
                }
                Err(e) => {
                    lio_failure = Some((k, e.to_string()));
                    (odo.state().position, odo.state().attitude)
                }
            },
            Some(odo) => (odo.state().position, odo.state().attitude),
            None => (truth, truth_rot),
        };
        if let Some(odo) = &estimator {
            let keep_from = odo.stamp() - 2.0 / scenario.imu.rate;
            let first = imu_buf.partition_point(|s| s.stamp < keep_from);
            imu_buf.drain(..first.min(imu_buf.len().saturating_sub(1)));
        } else {
            imu_buf.clear();
        }

        let statics: Vec<Vector3<f64>> = scan
            .world
            .iter()
            .zip(&scan.kinds)
            .filter(|(_, kind)| **kind != HitKind::Target)
            .map(|(p, _)| *p)
            .collect();
        let rays: Vec<_> = voxel_downsample(&statics, scenario.entropy.ray_voxel)
            .into_iter()
            .map(|i| statics[i])
            .collect();
        grid.raycast_update(&truth, &rays);

        let target_truth = world.target.as_ref().map(|r| r.center(t1));
        if options.track_target {
            if let Some(ring) = &world.target {
                let c = ring.center(t0 + 0.5 * period);
                let gate = ring.radius + RING_GATE_MARGIN;
                let candidates: Vec<_> = scan.world.iter().copied().filter(|p| (p - c).norm() <= gate).collect();
                if let Some(det) = detect_ring(&candidates, ring.radius, &mut ransac_rng) {
                    track.update(det.center, t0 + 0.5 * period);
                    detections += 1;
                }
            }
        }

        if options.yaw == YawPolicy::PerceptionAware && t1 + 1e-9 >= next_replan {
            let obs = if options.track_target { track.at(t1) } else { TargetObservation::lost() };
            if let Ok(seq) = receding_replan(&flight.traj, flight.local(t1), flight.yaw(t1), &grid, &obs, &yaw_cfg) {
                plan = Some(seq);
                replans += 1;
            }
            next_replan += 1.0 / yaw_cfg.replan_rate;
        }

        log.steps.push(StepRecord {
            t: t1,
            truth,
            estimate,
            yaw: flight.yaw(t1),
            target: target_truth,
            entropy: Some(grid.total_entropy()),
        });
        attitudes.push(attitude);
        if options.snapshot_every > 0 && k % options.snapshot_every == 0 {
            frames.push((k, pgm(&grid)));
        }
    }
    if frames.last().is_none_or(|f| f.0 + 1 != steps) {
        frames.push((steps.saturating_sub(1), pgm(&grid)));
    }

    let metrics = compute_metrics(&log, yaw_cfg.psi_th, scenario.lio.divergence);
    Ok(SessionOutput {
        log,
        metrics,
        flight,
        attitudes,
        estimator,
        diagnostics,
        entropy: grid,
        entropy_frames: frames,
        detections,
        replans,
        lio_failure,
        last_plan: plan,
        optimize_report,
    })
}
