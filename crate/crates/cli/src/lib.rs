//! Scenario runner behind the `tiltnav` binary: runs one pipeline over a
//! scenario file, writes its artifacts and compares metric summaries.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use thiserror::Error;

use tiltnav_core::entropy::EntropyGrid;
use tiltnav_core::so3::Rotation;
use tiltnav_sim::config::{ConfigError, Scenario};
use tiltnav_sim::metrics::{parse_metrics, MetricsError};
use tiltnav_sim::motion::{sensor_rotation, Kinematics};
use tiltnav_sim::sensor::Mount;
use tiltnav_sim::session::{route_trajectory, run_session, SessionError, SessionOptions, SessionOutput, YawPolicy};

/// Scans between saved entropy images.
pub const SNAPSHOT_EVERY: usize = 25;
/// Occupancy probability above which a grid cell is exported as a map point.
const OCCUPIED: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Estimator on, heading along the path.
    Odometry,
    /// Trajectory optimisation only.
    Plan,
    /// Ground-truth pose, yaw policy and ring tracking.
    Track,
    /// Estimator, yaw policy and ring tracking together.
    Full,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown {kind} `{value}` (expected one of: {expected})")]
pub struct ParseFlagError {
    kind: &'static str,
    value: String,
    expected: &'static str,
}

fn flag_error(kind: &'static str, value: &str, expected: &'static str) -> ParseFlagError {
    ParseFlagError {
        kind,
        value: value.to_owned(),
        expected,
    }
}

impl FromStr for Mode {
    type Err = ParseFlagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "odometry" => Ok(Self::Odometry),
            "plan" => Ok(Self::Plan),
            "track" => Ok(Self::Track),
            "full" => Ok(Self::Full),
            _ => Err(flag_error("mode", s, "odometry, plan, track, full")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Odometry => "odometry",
            Self::Plan => "plan",
            Self::Track => "track",
            Self::Full => "full",
        })
    }
}

pub fn parse_yaw_mode(s: &str) -> Result<YawPolicy, ParseFlagError> {
    match s {
        "perception-aware" => Ok(YawPolicy::PerceptionAware),
        "differential" => Ok(YawPolicy::Differential),
        _ => Err(flag_error("yaw mode", s, "perception-aware, differential")),
    }
}

pub fn parse_mount(s: &str) -> Result<Mount, ParseFlagError> {
    match s {
        "tilted-down" => Ok(Mount::TiltedDown),
        "conventional" => Ok(Mount::Conventional),
        _ => Err(flag_error("mount", s, "tilted-down, conventional")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub mode: Mode,
    /// `None` picks the mode's default.
    pub yaw_mode: Option<YawPolicy>,
    /// `None` keeps the scenario's mount.
    pub mount: Option<Mount>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("invalid flags: {0}")]
    Flags(String),
    #[error("{0}")]
    Session(#[from] SessionError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Metrics { path: PathBuf, source: MetricsError },
    #[error("{0}")]
    Compare(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

impl RunConfig {
    /// Flag combinations that cannot mean anything are refused before any
    /// work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        match self.mode {
            Mode::Odometry if self.yaw_mode == Some(YawPolicy::PerceptionAware) => Err(CliError::Flags(
                "odometry mode flies the path tangent; use track or full for perception-aware yaw".into(),
            )),
            Mode::Plan if self.yaw_mode.is_some() || self.mount.is_some() => Err(CliError::Flags(
                "plan mode only optimises the trajectory; --yaw-mode and --mount do not apply".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn yaw_policy(&self) -> YawPolicy {
        match self.mode {
            Mode::Track | Mode::Full => self.yaw_mode.unwrap_or(YawPolicy::PerceptionAware),
            Mode::Odometry | Mode::Plan => YawPolicy::Differential,
        }
    }

    pub fn session_options(&self) -> SessionOptions {
        SessionOptions {
            run_lio: matches!(self.mode, Mode::Odometry | Mode::Full),
            track_target: matches!(self.mode, Mode::Track | Mode::Full),
            yaw: self.yaw_policy(),
            mount: self.mount,
            seed: self.seed,
            snapshot_every: SNAPSHOT_EVERY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub metrics: BTreeMap<String, f64>,
    /// Files written, relative to the output directory.
    pub files: Vec<PathBuf>,
}

/// Loads the scenario, runs the selected pipeline and writes its artifacts
/// under `config.out`. Estimator divergence is reported in the metrics, not
/// as an error.
pub fn run_scenario(config: &RunConfig) -> Result<RunSummary, CliError> {
    config.validate()?;
    let mut scenario = Scenario::load(&config.scenario).map_err(|source| CliError::Config {
        path: config.scenario.clone(),
        source,
    })?;
    fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    let mut out = Outputs {
        dir: config.out.clone(),
        files: Vec::new(),
    };
    let metrics = if config.mode == Mode::Plan {
        scenario.motion.optimize = true;
        run_plan(&scenario, config.seed.unwrap_or(scenario.seed), &mut out)?
    } else {
        let options = config.session_options();
        let run = run_session(&scenario, &options)?;
        let mount = {
            let mut sensor = scenario.sensor_model();
            if let Some(m) = config.mount {
                sensor.mount = m;
            }
            sensor.mount_rotation()
        };
        write_session(&run, &mount, &mut out)?
    };
    out.write("metrics.txt", |w| w.write_all(metrics_text(&metrics).as_bytes()))?;
    Ok(RunSummary {
        metrics,
        files: out.files,
    })
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
        self.write(name, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(header)?;
            for row in rows {
                csv.write_record(&row)?;
            }
            csv.flush()
        })
    }
}

fn pose_fields(t: f64, p: &Vector3<f64>, r: &Rotation) -> Vec<String> {
    let q = r.quaternion();
    [t, p.x, p.y, p.z, q.w, q.i, q.j, q.k].iter().map(|v| format!("{v:.9}")).collect()
}

const POSE_HEADER: [&str; 8] = ["t", "x", "y", "z", "qw", "qx", "qy", "qz"];

fn write_session(run: &SessionOutput, mount: &Rotation, out: &mut Outputs) -> Result<BTreeMap<String, f64>, CliError> {
    let steps = &run.log.steps;
    out.write_csv(
        "estimated.csv",
        &POSE_HEADER,
        steps.iter().zip(&run.attitudes).map(|(s, r)| pose_fields(s.t, &s.estimate, r)),
    )?;
    let mut header = POSE_HEADER.to_vec();
    header.extend(["yaw", "target_x", "target_y", "target_z"]);
    out.write_csv(
        "ground_truth.csv",
        &header,
        steps.iter().map(|s| {
            let mut row = pose_fields(s.t, &s.truth, &sensor_rotation(&run.flight, mount, s.t));
            row.push(format!("{:.9}", run.flight.yaw(s.t)));
            match s.target {
                Some(c) => row.extend(c.iter().map(|v| format!("{v:.9}"))),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
            row
        }),
    )?;
    match &run.estimator {
        Some(odo) => out.write("map.ply", |w| odo.map().write_ply(w))?,
        None => out.write("map.ply", |w| write_occupied_ply(&run.entropy, w))?,
    }
    for (step, image) in &run.entropy_frames {
        out.write(&format!("entropy/step_{step:05}.pgm"), |w| w.write_all(image))?;
    }
    let mut metrics = run.metrics.to_map();
    metrics.insert("detections".into(), run.detections as f64);
    metrics.insert("replans".into(), run.replans as f64);
    metrics.insert("lio_failed".into(), if run.lio_failure.is_some() { 1.0 } else { 0.0 });
    Ok(metrics)
}

/// Occupied cell centres of the exploration grid, used as the map when no
/// estimator ran.
fn write_occupied_ply<W: Write>(grid: &EntropyGrid, mut w: W) -> io::Result<()> {
    let [nx, ny, nz] = grid.dims();
    let mut pts = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if grid.probability([i, j, k]) > OCCUPIED {
                    pts.push(grid.cell_center([i, j, k]));
                }
            }
        }
    }
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", pts.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z\nend_header")?;
    for p in pts {
        writeln!(w, "{:.4} {:.4} {:.4}", p.x, p.y, p.z)?;
    }
    Ok(())
}

/// Closed-form jerk energy of a rest-to-rest quintic covering `distance`
/// in `duration`.
pub fn minimum_jerk_energy(distance: f64, duration: f64) -> f64 {
    720.0 * distance * distance / duration.powi(5)
}

fn run_plan(scenario: &Scenario, seed: u64, out: &mut Outputs) -> Result<BTreeMap<String, f64>, CliError> {
    let world = scenario.world();
    let (traj, report) = route_trajectory(scenario, &world).map_err(SessionError::from)?;
    out.write("trajectory.csv", |w| traj.write_csv(w))?;
    let route = scenario.route();
    let distance = (route[route.len() - 1] - route[0]).norm();
    let duration = traj.duration();
    let mut m = BTreeMap::new();
    m.insert("seed".into(), seed as f64);
    m.insert("pieces".into(), traj.pieces() as f64);
    m.insert("duration".into(), duration);
    m.insert("straight_distance".into(), distance);
    m.insert("minimum_jerk_energy".into(), minimum_jerk_energy(distance, duration));
    if let Some(r) = report {
        let b = &r.breakdown;
        m.insert("jerk_energy".into(), b.smoothness);
        m.insert("energy_ratio".into(), b.smoothness / minimum_jerk_energy(distance, duration));
        m.insert("feasibility_penalty".into(), b.velocity + b.acceleration + b.jerk);
        m.insert("obstacle_penalty".into(), b.obstacle);
        m.insert("initial_cost".into(), r.initial_cost);
        m.insert("final_cost".into(), r.final_cost);
        m.insert("iterations".into(), r.iterations as f64);
    }
    Ok(m)
}

/// Flat `key=value` lines in key order, floats in shortest round-trip form.
pub fn metrics_text(m: &BTreeMap<String, f64>) -> String {
    let mut s = String::new();
    for (k, v) in m {
        writeln!(s, "{k}={v}").expect("string write");
    }
    s
}

/// Reads a metrics file, or `metrics.txt` inside a run directory.
pub fn read_metrics(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let file = if path.is_dir() { path.join("metrics.txt") } else { path.to_owned() };
    let text = fs::read_to_string(&file).map_err(io_err(&file))?;
    parse_metrics(&text).map_err(|source| CliError::Metrics { path: file, source })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricDelta {
    pub key: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// `(b − a)/|a|` in percent; absent when `a` is zero.
    pub percent: Option<f64>,
}

/// Side-by-side comparison of run `a` (the reference) against run `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub seed: u64,
    pub rows: Vec<MetricDelta>,
    /// Drop in cumulative tracking error from `a` to `b`, percent of `a`.
    pub tracking_reduction: Option<f64>,
    /// Drop in the worst instantaneous tracking angle, percent of `a`.
    pub max_angle_reduction: Option<f64>,
    /// Gain in entropy removed by the final step (initial minus final
    /// total entropy), percent of `a`'s.
    pub coverage_improvement: Option<f64>,
}

fn relative(from: f64, to: f64) -> Option<f64> {
    (from != 0.0 && from.is_finite() && to.is_finite()).then(|| 100.0 * (to - from) / from.abs())
}

/// Compares metrics shared by both runs. Runs with different seeds are
/// refused.
pub fn compare_runs(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Result<Comparison, CliError> {
    let seed = match (a.get("seed"), b.get("seed")) {
        (Some(x), Some(y)) if x == y => *x as u64,
        (Some(x), Some(y)) => return Err(CliError::Compare(format!("seed mismatch: {x} vs {y}"))),
        _ => return Err(CliError::Compare("both metrics files need a seed".into())),
    };
    let rows = a
        .iter()
        .filter(|(k, _)| k.as_str() != "seed")
        .filter_map(|(k, &va)| {
            b.get(k).map(|&vb| MetricDelta {
                key: k.clone(),
                a: va,
                b: vb,
                delta: vb - va,
                percent: relative(va, vb),
            })
        })
        .collect();
    let get = |m: &BTreeMap<String, f64>, k: &str| m.get(k).copied();
    let reduction = |k: &str| Some(-relative(get(a, k)?, get(b, k)?)?);
    let covered = |m: &BTreeMap<String, f64>| Some(get(m, "entropy_initial")? - get(m, "entropy_final")?);
    Ok(Comparison {
        seed,
        rows,
        tracking_reduction: reduction("tracking_error"),
        max_angle_reduction: reduction("tracking_angle_max"),
        coverage_improvement: covered(a).zip(covered(b)).and_then(|(x, y)| relative(x, y)),
    })
}

impl Comparison {
    /// `key.a`, `key.b`, `key.delta` and `key.percent` lines plus the
    /// headline percentages.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "seed={}", self.seed).expect("string write");
        for r in &self.rows {
            writeln!(s, "{}.a={}\n{}.b={}\n{}.delta={}", r.key, r.a, r.key, r.b, r.key, r.delta).expect("string write");
            if let Some(p) = r.percent {
                writeln!(s, "{}.percent={p}", r.key).expect("string write");
            }
        }
        for (k, v) in self.headlines() {
            writeln!(s, "{k}={v}").expect("string write");
        }
        s
    }

    fn headlines(&self) -> Vec<(&'static str, f64)> {
        [
            ("tracking_error_reduction_percent", self.tracking_reduction),
            ("tracking_angle_max_reduction_percent", self.max_angle_reduction),
            ("coverage_improvement_percent", self.coverage_improvement),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.key.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        writeln!(s, "seed {}", self.seed).expect("string write");
        writeln!(s, "{:<width$} {:>14} {:>14} {:>14} {:>9}", "metric", "a", "b", "delta", "change").expect("string write");
        for r in &self.rows {
            let pct = r.percent.map_or("-".to_owned(), |p| format!("{p:+.1}%"));
            writeln!(s, "{:<width$} {:>14.6} {:>14.6} {:>+14.6} {:>9}", r.key, r.a, r.b, r.delta, pct).expect("string write");
        }
        for (k, v) in self.headlines() {
            writeln!(s, "{k}: {v:.1}%").expect("string write");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn flags_parse_and_reject_unknown() {
        assert_eq!("full".parse::<Mode>(), Ok(Mode::Full));
        assert!("fly".parse::<Mode>().is_err());
        assert_eq!(parse_yaw_mode("differential"), Ok(YawPolicy::Differential));
        assert!(parse_yaw_mode("aware").is_err());
        assert_eq!(parse_mount("conventional"), Ok(Mount::Conventional));
        for m in [Mode::Odometry, Mode::Plan, Mode::Track, Mode::Full] {
            assert_eq!(m.to_string().parse::<Mode>(), Ok(m));
        }
    }

    #[test]
    fn meaningless_flag_combinations_are_refused() {
        let base = RunConfig {
            scenario: PathBuf::from("x.toml"),
            mode: Mode::Odometry,
            yaw_mode: Some(YawPolicy::PerceptionAware),
            mount: None,
            out: PathBuf::from("out"),
            seed: None,
        };
        assert!(base.validate().is_err());
        let plan = RunConfig {
            mode: Mode::Plan,
            yaw_mode: None,
            mount: Some(Mount::Conventional),
            ..base.clone()
        };
        assert!(plan.validate().is_err());
        let track = RunConfig {
            mode: Mode::Track,
            ..base
        };
        assert!(track.validate().is_ok());
        let opts = track.session_options();
        assert!(!opts.run_lio && opts.track_target && opts.yaw == YawPolicy::PerceptionAware);
    }

    #[test]
    fn identical_runs_compare_to_zero() {
        let m = metrics(&[("seed", 3.0), ("ate_rmse", 0.01), ("tracking_error", 2.0), ("entropy_initial", 10.0), ("entropy_final", 6.0)]);
        let c = compare_runs(&m, &m).unwrap();
        assert!(c.rows.iter().all(|r| r.delta == 0.0 && r.percent == Some(0.0)));
        assert_eq!(c.tracking_reduction, Some(0.0));
        assert_eq!(c.coverage_improvement, Some(0.0));
    }

    #[test]
    fn headline_percentages() {
        let a = metrics(&[("seed", 1.0), ("tracking_error", 10.0), ("tracking_angle_max", 2.0), ("entropy_initial", 100.0), ("entropy_final", 60.0)]);
        let b = metrics(&[("seed", 1.0), ("tracking_error", 1.9), ("tracking_angle_max", 0.54), ("entropy_initial", 100.0), ("entropy_final", 51.2)]);
        let c = compare_runs(&a, &b).unwrap();
        // 10 → 1.9 is an 81% cut; 2 → 0.54 is 73%; 40 → 48.8 removed is +22%.
        assert!((c.tracking_reduction.unwrap() - 81.0).abs() < 1e-9);
        assert!((c.max_angle_reduction.unwrap() - 73.0).abs() < 1e-9);
        assert!((c.coverage_improvement.unwrap() - 22.0).abs() < 1e-9);
        let text = c.to_text();
        let parsed = parse_metrics(&text).unwrap();
        assert_eq!(parsed["tracking_error.delta"], 1.9 - 10.0);
        assert!(c.table().contains("tracking_error"));
    }

    #[test]
    fn seed_mismatch_is_refused() {
        let a = metrics(&[("seed", 1.0), ("ate_rmse", 0.0)]);
        let b = metrics(&[("seed", 2.0), ("ate_rmse", 0.0)]);
        assert!(matches!(compare_runs(&a, &b), Err(CliError::Compare(_))));
        assert!(compare_runs(&a, &metrics(&[("ate_rmse", 0.0)])).is_err());
    }

    #[test]
    fn minimum_jerk_energy_matches_quintic_integral() {
        // x(t) = L(10s³ − 15s⁴ + 6s⁵), s = t/T: jerk = (60L/T³)(1 − 6s + 6s²).
        let (l, t) = (1.7f64, 2.3f64);
        let n = 200_000;
        let mut sum = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            let j = 60.0 * l / t.powi(3) * (1.0 - 6.0 * s + 6.0 * s * s);
            sum += j * j * t / n as f64;
        }
        assert!((sum - minimum_jerk_energy(l, t)).abs() < 1e-6 * sum);
    }
}
