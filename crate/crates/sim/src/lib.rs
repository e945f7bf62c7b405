//! Deterministic simulation harness: synthetic worlds, sensor streams,
//! ring detection, closed-loop sessions and run metrics.

pub mod metrics;
pub mod motion;
pub mod ring;
pub mod sensor;
pub mod world;
pub mod config;
pub mod session;
