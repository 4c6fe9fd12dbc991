use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qtraj_lab::report::{describe_config, describe_index, describe_run, export};
use qtraj_lab::{run_scenario, LabError, Registry, ScenarioConfig, TaskKind};

#[derive(Parser)]
#[command(name = "qtraj", version, about = "Bohm and Floyd trajectory laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides the scenario's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized check points; overrides the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel batches.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Bound-state spectrum and eigenfunctions.
    Solve(Common),
    /// One microstate of the stationary Hamilton-Jacobi equation.
    Microstate(Common),
    /// dT/dE over time at a fixed point, or over position for unbound systems.
    DtdeSweep(Common),
    /// Floyd or Bohm trajectories from a list of start points.
    Trajectory(Common),
    /// Bohm, Floyd and classical paths side by side on an unbound system.
    Compare(Common),
    /// Velocity spectrum at a fixed point under a two-level beat.
    BeatScan(Common),
    /// Report on a scenario file, a recorded run, or the whole registry.
    Describe {
        /// Run id to report on.
        id: Option<String>,
        #[arg(long, conflicts_with = "id")]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Print (or copy) the CSV files of one kind from a recorded run.
    Export {
        id: String,
        /// trajectory, field, sweep, ...
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Copy the files here instead of printing their registry paths.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
}

fn run_task(task: TaskKind, c: Common) -> Result<(), LabError> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::config("--threads", e.to_string()))?;
    }
    let mut config = ScenarioConfig::load(&c.config)?;
    let task = config.resolve_task(Some(task))?;
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    if let Some(out) = c.out {
        config.out = Some(out);
    }
    let root = config.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let record = run_scenario(&config, task, &root)?;
    // Events reached at run time are worth a line on stderr even on success.
    for run in record.summary["runs"].as_array().into_iter().flatten() {
        for e in run["events"].as_array().into_iter().flatten() {
            eprintln!("event q0 = {}: {e}", run["q0"]);
        }
    }
    println!("{}", record.id);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(c) => run_task(TaskKind::Solve, c),
        Command::Microstate(c) => run_task(TaskKind::Microstate, c),
        Command::DtdeSweep(c) => run_task(TaskKind::DtdeSweep, c),
        Command::Trajectory(c) => run_task(TaskKind::Trajectory, c),
        Command::Compare(c) => run_task(TaskKind::Compare, c),
        Command::BeatScan(c) => run_task(TaskKind::BeatScan, c),
        Command::Describe { id, config, out } => (|| {
            let text = match (id, config) {
                (_, Some(path)) => describe_config(&ScenarioConfig::load(&path)?, None)?,
                (Some(id), None) => describe_run(&Registry::open(&out)?, &id)?,
                (None, None) => describe_index(&Registry::open(&out)?)?,
            };
            print!("{text}");
            Ok(())
        })(),
        Command::Export { id, kind, out, dest } => (|| {
            for p in export(&Registry::open(&out)?, &id, &kind, dest.as_deref())? {
                println!("{}", p.display());
            }
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
