//! `simnet` command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use witnet_core::economics::{cumulative_supply, IssuanceParams};
use witnet_core::reputation::DecayRate;
use witnet_simnet::metrics::write_outputs;
use witnet_simnet::snapshot::{restore, snapshot};
use witnet_simnet::{load_scenario, ScenarioError, Simulation};

#[derive(Parser)]
#[command(name = "simnet", version, about = "Deterministic oracle-network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics into a directory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<u64>,
    },
    /// Print the demurrage table of idle participants.
    VerifyTable {
        #[arg(long, default_value_t = 0.99)]
        decay: f64,
    },
    /// Print cumulative supply in nanoWit after `height` blocks.
    Supply {
        #[arg(long)]
        height: u64,
    },
    /// Run a scenario up to an epoch and save the full state.
    Snapshot {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        at: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Continue a saved run to its end and write metrics.
    Resume {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<u64>,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(path: &Path, seed: Option<u64>, epochs: Option<u64>) -> Result<Simulation, Failure> {
    let mut scenario = load_scenario(path)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(e) = epochs {
        scenario.epochs = e;
    }
    Simulation::new(scenario).map_err(runtime)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            scenario,
            out,
            seed,
            epochs,
        } => {
            let mut sim = load(&scenario, seed, epochs)?;
            sim.run_to_end().map_err(runtime)?;
            write_outputs(&sim, &out).map_err(runtime)?;
        }
        Command::VerifyTable { decay } => {
            let d = DecayRate::new(decay).ok_or_else(|| Failure::Validation("decay must lie in [0, 1]".into()))?;
            print!("{}", witnet_simnet::table::render(d));
        }
        Command::Supply { height } => {
            println!("{}", cumulative_supply(height, &IssuanceParams::default()));
        }
        Command::Snapshot {
            scenario,
            at,
            out,
            seed,
        } => {
            let mut sim = load(&scenario, seed, None)?;
            sim.run_until(at).map_err(runtime)?;
            snapshot(&sim, &out).map_err(runtime)?;
        }
        Command::Resume { snapshot, out, epochs } => {
            let mut sim = restore(&snapshot).map_err(runtime)?;
            if let Some(e) = epochs {
                sim.set_epochs(e);
            }
            sim.run_to_end().map_err(runtime)?;
            write_outputs(&sim, &out).map_err(runtime)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
