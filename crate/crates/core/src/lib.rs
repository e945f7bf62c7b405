//! Estimation and planning core for a UAV carrying a downward-tilted LiDAR.
//!
//! - [`so3`], [`state`]: rotation group and navigation-state manifold.
//! - [`imu`]: tilt calibration, inertial propagation, scan motion compensation.
//! - [`voxel`], [`entropy`]: dual-layer plane map and occupancy/entropy grid.
//! - [`lio`]: iterated error-state Kalman update with degeneracy damping,
//!   plus spherical-harmonic place descriptors.
//! - [`traj`]: piecewise-polynomial trajectory optimisation.
//! - [`yaw`]: receding-horizon yaw sequence search.

pub mod entropy;
pub mod imu;
pub mod lio;
pub mod so3;
pub mod state;
pub mod traj;
pub mod voxel;
pub mod yaw;
