use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tiltnav_cli::{compare_runs, parse_mount, parse_yaw_mode, read_metrics, run_scenario, CliError, Mode, RunConfig};
use tiltnav_sim::sensor::Mount;
use tiltnav_sim::session::YawPolicy;

/// Simulated tilted-LiDAR navigation: run a scenario or compare two runs.
#[derive(Debug, Parser)]
#[command(name = "tiltnav", version)]
struct Args {
    /// Scenario file (TOML).
    #[arg(long, required_unless_present = "compare")]
    scenario: Option<PathBuf>,
    /// odometry, plan, track or full.
    #[arg(long, default_value = "full")]
    mode: Mode,
    /// perception-aware or differential.
    #[arg(long, value_parser = parse_yaw_mode)]
    yaw_mode: Option<YawPolicy>,
    /// tilted-down or conventional; defaults to the scenario's mount.
    #[arg(long, value_parser = parse_mount)]
    mount: Option<Mount>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Compare two metrics files or run directories (A is the reference).
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "scenario")]
    compare: Option<Vec<PathBuf>>,
}

fn run(args: Args) -> Result<(), CliError> {
    if let Some(paths) = args.compare {
        let a = read_metrics(&paths[0])?;
        let b = read_metrics(&paths[1])?;
        let c = compare_runs(&a, &b)?;
        print!("{}", c.table());
        let path = args.out.join("comparison.txt");
        std::fs::create_dir_all(&args.out)
            .and_then(|_| std::fs::write(&path, c.to_text()))
            .map_err(|source| CliError::Io { path: path.clone(), source })?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let config = RunConfig {
        scenario: args.scenario.expect("clap enforces --scenario"),
        mode: args.mode,
        yaw_mode: args.yaw_mode,
        mount: args.mount,
        out: args.out,
        seed: args.seed,
    };
    let summary = run_scenario(&config)?;
    for key in ["ate_rmse", "z_drift", "tracking_error", "entropy_final", "energy_ratio", "diverged"] {
        if let Some(v) = summary.metrics.get(key) {
            println!("{key}={v}");
        }
    }
    println!("wrote {} files under {}", summary.files.len(), config.out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tiltnav: {e}");
            ExitCode::FAILURE
        }
    }
}
