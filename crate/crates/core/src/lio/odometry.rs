//! Scan-by-scan LiDAR-inertial odometry driver.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use super::descriptor::{KeyframeDatabase, Match};
use super::{ieskf_update, Covariance, LioConfig};
use crate::imu::{
    estimate_tilt, mount_rotation, preintegrate, propagate_state, slice_interval, ImuError,
    ImuNoiseModel, ImuSample, LidarExtrinsic, LidarScan, ScanMotion, TiltEstimate, UndistortStats,
};
use crate::so3::{hat, Rotation};
use crate::state::{StateVector, BA, BG, GRAV, POS, ROT, VEL};
use crate::voxel::{adapt_resolution, voxel_downsample, DualVoxelMap, VoxelMapConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdometryError {
    #[error(transparent)]
    Imu(#[from] ImuError),
    #[error("estimator has not been initialised")]
    NotInitialized,
    #[error("scan has {points} points but {stamps} stamps")]
    ScanShape { points: usize, stamps: usize },
    #[error("IMU samples do not cover [{0}, {1}]")]
    ImuGap(f64, f64),
    #[error("scan interval [{0}, {1}] precedes the estimator stamp")]
    StaleScan(f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdometryConfig {
    pub lio: LioConfig,
    pub map: VoxelMapConfig,
    /// Process noise used for covariance propagation.
    pub noise: ImuNoiseModel,
    pub extrinsic: LidarExtrinsic,
    pub inverted_mount: bool,
    /// Low-pass gain for the mount-tilt calibration.
    pub tilt_alpha: f64,
    /// Target number of raw points per scan for the adaptive filter.
    pub target_points: usize,
    pub resolution_gain: f64,
    /// Returns closer than this (m) are dropped as self-hits.
    pub min_range: f64,
    /// Initial standard deviations of the position, attitude, velocity,
    /// accelerometer-bias, gyro-bias and gravity blocks.
    pub initial_sigma: [f64; 6],
    pub keyframe_spacing: f64,
    pub descriptor_band: usize,
    pub descriptor_radius: f64,
    pub relocalize_threshold: f64,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            lio: LioConfig::default(),
            map: VoxelMapConfig::default(),
            noise: ImuNoiseModel::default(),
            extrinsic: LidarExtrinsic::default(),
            inverted_mount: false,
            tilt_alpha: 0.05,
            target_points: 10_000,
            resolution_gain: 0.1,
            min_range: 0.3,
            initial_sigma: [1e-3, 1e-3, 1e-2, 5e-2, 1e-3, 1e-3],
            keyframe_spacing: 2.0,
            descriptor_band: 4,
            descriptor_radius: 10.0,
            relocalize_threshold: 0.15,
        }
    }
}

/// Per-scan record for the metrics stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanDiagnostics {
    pub stamp: f64,
    pub iterations: usize,
    pub matched: usize,
    /// Constraint entropy of the last iteration, `NaN` when no update ran.
    pub entropy: f64,
    pub degenerate: bool,
    /// The update was skipped for lack of matches.
    pub skipped: bool,
    pub position: Vector3<f64>,
    pub attitude: Rotation,
    pub raw_points: usize,
    pub filtered_points: usize,
    /// Filter resolution used for this scan (m).
    pub resolution: f64,
    pub undistort: UndistortStats,
    pub keyframe_stored: bool,
    /// Keyframe suggested when the update was skipped.
    pub relocalization: Option<Match>,
}

/// Propagates the error-state covariance across consecutive IMU samples.
pub fn propagate_covariance(
    p: &Covariance,
    xi: &StateVector,
    samples: &[ImuSample],
    noise: &ImuNoiseModel,
) -> Covariance {
    let mut cov = *p;
    let mut rot = xi.attitude;
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.stamp - a.stamp;
        if !(h > 0.0) {
            continue;
        }
        let omega = 0.5 * (a.gyro + b.gyro) - xi.gyro_bias;
        let acc = 0.5 * (a.accel + b.accel) - xi.accel_bias;
        let r = rot.matrix();
        let mut f = Covariance::identity();
        let eye = Matrix3::identity();
        f.fixed_view_mut::<3, 3>(POS, VEL).copy_from(&(eye * h));
        f.fixed_view_mut::<3, 3>(ROT, ROT)
            .copy_from(&Rotation::exp(&(-omega * h)).matrix());
        f.fixed_view_mut::<3, 3>(ROT, BG).copy_from(&(-eye * h));
        f.fixed_view_mut::<3, 3>(VEL, ROT).copy_from(&(-r * hat(&acc) * h));
        f.fixed_view_mut::<3, 3>(VEL, BA).copy_from(&(-r * h));
        f.fixed_view_mut::<3, 3>(VEL, GRAV).copy_from(&(eye * h));
        let mut q = Covariance::zeros();
        q.fixed_view_mut::<3, 3>(ROT, ROT).copy_from(&(noise.gyro_cov * h * h));
        q.fixed_view_mut::<3, 3>(VEL, VEL)
            .copy_from(&(r * noise.accel_cov * r.transpose() * h * h));
        q.fixed_view_mut::<3, 3>(BA, BA)
            .copy_from(&(eye * noise.accel_bias_walk * noise.accel_bias_walk));
        q.fixed_view_mut::<3, 3>(BG, BG)
            .copy_from(&(eye * noise.gyro_bias_walk * noise.gyro_bias_walk));
        cov = f * cov * f.transpose() + q;
        rot = rot.oplus(&(omega * h));
    }
    0.5 * (cov + cov.transpose())
}

/// Tilt-aware LiDAR-inertial odometry over a dual-layer voxel map.
#[derive(Clone, Debug)]
pub struct LidarInertialOdometry {
    config: OdometryConfig,
    state: StateVector,
    covariance: Covariance,
    map: DualVoxelMap,
    keyframes: KeyframeDatabase,
    stamp: f64,
    tilt: Option<TiltEstimate>,
}

impl LidarInertialOdometry {
    pub fn new(config: OdometryConfig) -> Self {
        let map = DualVoxelMap::new(config.map);
        let keyframes = KeyframeDatabase::new(
            config.keyframe_spacing,
            config.descriptor_band,
            config.descriptor_radius,
        );
        let mut covariance = Covariance::zeros();
        for (block, sigma) in [POS, ROT, VEL, BA, BG, GRAV].iter().zip(config.initial_sigma) {
            for k in 0..3 {
                covariance[(block + k, block + k)] = sigma * sigma;
            }
        }
        Self {
            config,
            state: StateVector::default(),
            covariance,
            map,
            keyframes,
            stamp: f64::NAN,
            tilt: None,
        }
    }

    /// Calibrates the mount tilt from a stationary window and seeds the
    /// state at `position` with body heading `heading`. The gyro bias is
    /// set to the window's mean rate.
    pub fn initialize(
        &mut self,
        stationary: &[ImuSample],
        position: Vector3<f64>,
        heading: f64,
    ) -> Result<TiltEstimate, OdometryError> {
        let tilt = estimate_tilt(stationary, self.config.tilt_alpha)?;
        let mount = mount_rotation(tilt.pitch, self.config.inverted_mount);
        let n = stationary.len() as f64;
        self.state = StateVector {
            position,
            attitude: Rotation::rot_z(heading) * mount,
            gyro_bias: stationary.iter().map(|s| s.gyro).sum::<Vector3<f64>>() / n,
            ..StateVector::default()
        };
        self.stamp = stationary.last().map_or(0.0, |s| s.stamp);
        self.tilt = Some(tilt);
        Ok(tilt)
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn map(&self) -> &DualVoxelMap {
        &self.map
    }

    pub fn keyframes(&self) -> &KeyframeDatabase {
        &self.keyframes
    }

    pub fn stamp(&self) -> f64 {
        self.stamp
    }

    pub fn tilt(&self) -> Option<&TiltEstimate> {
        self.tilt.as_ref()
    }

    /// Mount rotation from the body frame to the sensor frame.
    pub fn mount(&self) -> Option<Rotation> {
        self.tilt
            .map(|t| mount_rotation(t.pitch, self.config.inverted_mount))
    }

    fn advance(&mut self, imu: &[ImuSample], t: f64) -> Result<Vec<ImuSample>, OdometryError> {
        let samples = slice_interval(imu, self.stamp, t).ok_or(OdometryError::ImuGap(self.stamp, t))?;
        let deltas = preintegrate(&samples, &self.state)?;
        self.covariance = propagate_covariance(&self.covariance, &self.state, &samples, &self.config.noise);
        self.state = propagate_state(&self.state, &deltas);
        self.stamp = t;
        Ok(samples)
    }

    /// Propagates to the scan end, motion-compensates the scan, runs the
    /// iterated update and grows the map. `imu` must bracket the span from
    /// the current estimator stamp to `scan.t_end`.
    pub fn process(
        &mut self,
        imu: &[ImuSample],
        scan: &LidarScan,
    ) -> Result<ScanDiagnostics, OdometryError> {
        if self.tilt.is_none() {
            return Err(OdometryError::NotInitialized);
        }
        if scan.points.len() != scan.stamps.len() {
            return Err(OdometryError::ScanShape {
                points: scan.points.len(),
                stamps: scan.stamps.len(),
            });
        }
        if scan.t_end <= self.stamp {
            return Err(OdometryError::StaleScan(scan.t_start, scan.t_end));
        }
        if scan.t_start > self.stamp {
            self.advance(imu, scan.t_start)?;
        }
        let start = self.state;
        let samples = self.advance(imu, scan.t_end)?;
        let motion = ScanMotion::new(&start, &samples, start_time(scan, &samples), scan.t_end)?;
        let (end_rot, end_pos) = motion.end_pose();
        let end_inv = end_rot.inverse();

        let mut undistort = UndistortStats::default();
        let min_r2 = self.config.min_range * self.config.min_range;
        let mut body = Vec::with_capacity(scan.points.len());
        for (p, &tau) in scan.points.iter().zip(&scan.stamps) {
            if p.norm_squared() < min_r2 || !p.iter().all(|c| c.is_finite()) {
                continue;
            }
            if let Some(w) = crate::imu::undistort_point(p, tau, &motion, &self.config.extrinsic, &mut undistort) {
                body.push(end_inv * (w - end_pos));
            }
        }

        let resolution = self.map.resolution;
        let kept = voxel_downsample(&body, resolution);
        let filtered: Vec<_> = kept.iter().map(|&i| body[i]).collect();
        self.map.resolution = adapt_resolution(
            resolution,
            body.len(),
            self.config.target_points.max(1),
            self.config.resolution_gain,
            (self.config.map.min_resolution, self.config.map.max_resolution),
        );

        let mut diag = ScanDiagnostics {
            stamp: scan.t_end,
            iterations: 0,
            matched: 0,
            entropy: f64::NAN,
            degenerate: false,
            skipped: false,
            position: self.state.position,
            attitude: self.state.attitude,
            raw_points: scan.points.len(),
            filtered_points: filtered.len(),
            resolution,
            undistort,
            keyframe_stored: false,
            relocalization: None,
        };

        if !self.map.is_empty() {
            let out = ieskf_update(&self.state, &self.covariance, &filtered, &self.map, &self.config.lio);
            diag.iterations = out.report.iterations;
            diag.matched = out.report.matched;
            diag.skipped = out.report.skipped;
            if let Some(d) = out.report.degeneracy {
                diag.entropy = d.entropy;
                diag.degenerate = d.degenerate;
            }
            if out.report.skipped {
                diag.relocalization = self
                    .keyframes
                    .query(&body, self.config.relocalize_threshold);
            } else {
                self.state = out.state;
                self.covariance = out.covariance;
            }
        }
        diag.position = self.state.position;
        diag.attitude = self.state.attitude;

        let pose = self.state.pose();
        let world: Vec<_> = body.iter().map(|p| pose.transform(p)).collect();
        self.map.insert_points(&world, &self.state.position);
        diag.keyframe_stored = self.keyframes.observe(&pose, &body);
        Ok(diag)
    }
}

fn start_time(scan: &LidarScan, samples: &[ImuSample]) -> f64 {
    samples.first().map_or(scan.t_start, |s| s.stamp.max(scan.t_start))
}
