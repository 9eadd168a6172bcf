use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use didgov::metering::{write_csv, CostSchedule};
use didgov::registry::Registry;
use didgov::scenario::{
    replay_file, run_scenario, verify_replay, Scenario, ScenarioError, STATE_FILE,
};
use didgov::sweep::{
    parse_authz, parse_coord, parse_execution, parse_range, parse_time, sweep, SweepGrid,
};

#[derive(Parser)]
#[command(
    name = "didgov",
    version,
    about = "Governance engine for group-controlled DID documents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write events.jsonl, costs.csv and state.json.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Cost schedule JSON; the default schedule is used otherwise.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Sweep a grid of governance configurations and write a cost CSV.
    Bench {
        /// Group counts, `a..b` or a single number.
        #[arg(long, default_value = "1")]
        groups: String,
        /// Members per group, `a..b` or a single number.
        #[arg(long, default_value = "1")]
        members: String,
        /// Comma-separated: acl, token, vc.
        #[arg(long, default_value = "acl")]
        authz: String,
        /// Comma-separated: nofm, turnout, weighted.
        #[arg(long, default_value = "nofm")]
        coord: String,
        /// Comma-separated: onchain, offchain.
        #[arg(long, default_value = "onchain")]
        execution: String,
        /// Comma-separated: unlimited, limited.
        #[arg(long, default_value = "unlimited")]
        time: String,
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild state from an event log. With --state, compare the result
    /// byte for byte against a snapshot.
    Replay {
        events: PathBuf,
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

fn load_schedule(path: Option<&Path>) -> Result<CostSchedule, ScenarioError> {
    match path {
        None => Ok(CostSchedule::default()),
        Some(p) => Ok(CostSchedule::from_json(&fs::read_to_string(p)?)?),
    }
}

fn run(scenario: &Path, out: &Path, schedule: Option<&Path>) -> Result<(), ScenarioError> {
    let schedule = load_schedule(schedule)?;
    let scenario = Scenario::from_file(scenario)?;
    let (run, error) = run_scenario(&scenario, Some(schedule));
    for warning in &run.warnings {
        eprintln!("warning: {warning}");
    }
    run.write_artifacts(out)?;
    match error {
        Some(e) => Err(e),
        None => {
            println!(
                "ok: {} actions, {} events, {} metered transactions -> {}",
                run.completed,
                run.registry.events().len(),
                run.reports.len(),
                out.display()
            );
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    groups: &str,
    members: &str,
    authz: &str,
    coord: &str,
    execution: &str,
    time: &str,
    schedule: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let grid = SweepGrid {
        groups: parse_range(groups)?,
        members: parse_range(members)?,
        authz: parse_authz(authz)?,
        coord: parse_coord(coord)?,
        execution: parse_execution(execution)?,
        time: parse_time(time)?,
    };
    let schedule = load_schedule(schedule)?;
    let result = sweep(|| Registry::new(Some(schedule)), &grid)?;
    for f in &result.failures {
        eprintln!("failed: {:?} in {}: {}", f.dimensions, f.phase, f.error);
    }
    match out {
        Some(path) => {
            let file =
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&result.reports, file)?;
        }
        None => write_csv(&result.reports, io::stdout().lock())?,
    }
    anyhow::ensure!(
        result.failures.is_empty(),
        "{} grid points failed",
        result.failures.len()
    );
    Ok(())
}

fn replay(events: &Path, state: Option<&Path>) -> Result<(), ScenarioError> {
    let rebuilt = match state {
        Some(expected) => verify_replay(events, expected)?,
        None => replay_file(events)?,
    };
    match state {
        Some(expected) => println!("ok: replay matches {}", expected.display()),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(rebuilt.to_json().as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            schedule,
        } => run(scenario, out, schedule.as_deref()),
        Command::Bench {
            groups,
            members,
            authz,
            coord,
            execution,
            time,
            schedule,
            out,
        } => {
            return match bench(
                groups,
                members,
                authz,
                coord,
                execution,
                time,
                schedule.as_deref(),
                out.as_deref(),
            ) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Replay { events, state } => {
            let state = state.clone().or_else(|| {
                let sibling = events.with_file_name(STATE_FILE);
                sibling.exists().then_some(sibling)
            });
            replay(events, state.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
