use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpcc_core::report;
use mpcc_core::scenario::Scenario;
use mpcc_core::sim::{self, RunRecord, RunStatus};
use rayon::prelude::*;

/// Base directory for run outputs when `--out` is not given.
const OUT_ENV: &str = "MPCC_OUT_DIR";

#[derive(Parser)]
#[command(name = "mpcc", version, about = "Contouring MPC for a walking robot on a LIP plant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its log, summary and plots.
    Run {
        /// Scenario file, or the name (or unique prefix) of a shipped scenario.
        scenario: String,
        /// Output directory for this run [default: $MPCC_OUT_DIR/<name> or runs/<name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every scenario file in a directory in parallel.
    Sweep {
        dir: PathBuf,
        /// Parent directory for the per-scenario outputs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Redraw the plots of a finished run directory.
    Plot { run_dir: PathBuf },
    /// List the shipped scenarios.
    List,
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Run { scenario, out, seed } => {
            let mut s = resolve(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let dir = out.unwrap_or_else(|| default_dir(&s));
            let record = run_one(&s, &dir)?;
            println!("{}", describe(&record));
            println!("wrote {}", dir.display());
            Ok(exit_for(&[record]))
        }
        Command::Sweep { dir, out } => {
            let files = scenario_files(&dir)?;
            if files.is_empty() {
                return Err(format!("no .toml scenario files in {}", dir.display()));
            }
            let base = out.unwrap_or_else(out_base);
            let results: Vec<Result<RunRecord, String>> = files
                .par_iter()
                .map(|file| {
                    let s = Scenario::load(file).map_err(|e| format!("{}: {e}", file.display()))?;
                    let dir = base.join(&s.name);
                    run_one(&s, &dir).map_err(|e| format!("{}: {e}", file.display()))
                })
                .collect();
            let mut records = Vec::new();
            let mut errors = 0;
            for result in results {
                match result {
                    Ok(record) => {
                        println!("{}", describe(&record));
                        records.push(record);
                    }
                    Err(message) => {
                        eprintln!("error: {message}");
                        errors += 1;
                    }
                }
            }
            println!("wrote {}", base.display());
            if errors > 0 {
                return Ok(ExitCode::from(2));
            }
            Ok(exit_for(&records))
        }
        Command::Plot { run_dir } => {
            let steps = run_dir.join(report::STEPS_FILE);
            if !steps.is_file() {
                return Err(format!("{} has no {}; not a run directory", run_dir.display(), report::STEPS_FILE));
            }
            let (scenario, logs) = report::read_run(&run_dir).map_err(|e| format!("{}: {e}", run_dir.display()))?;
            report::write_plots(&run_dir, &scenario, &logs).map_err(|e| e.to_string())?;
            println!("redrew plots in {}", run_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::List => {
            for name in Scenario::shipped_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// A file path if one exists, otherwise a shipped scenario by exact name or
/// unique prefix.
fn resolve(arg: &str) -> Result<Scenario, String> {
    let file = Path::new(arg);
    if file.is_file() {
        return Scenario::load(file).map_err(|e| format!("{arg}: {e}"));
    }
    if let Some(s) = Scenario::shipped(arg) {
        return Ok(s);
    }
    let matches: Vec<&str> = Scenario::shipped_names().filter(|n| n.starts_with(arg)).collect();
    match matches.as_slice() {
        [name] => Ok(Scenario::shipped(name).expect("listed name")),
        [] => Err(format!("`{arg}` is neither a file nor a shipped scenario")),
        many => Err(format!("`{arg}` matches several shipped scenarios: {}", many.join(", "))),
    }
}

fn out_base() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn default_dir(s: &Scenario) -> PathBuf {
    s.output_dir.clone().unwrap_or_else(|| out_base().join(&s.name))
}

fn run_one(s: &Scenario, dir: &Path) -> Result<RunRecord, String> {
    let result = sim::run(s).map_err(|e| e.to_string())?;
    report::write_run(dir, s, &result).map_err(|e| format!("{}: {e}", dir.display()))?;
    Ok(result.record())
}

fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    Ok(files)
}

fn describe(r: &RunRecord) -> String {
    let s = &r.summary;
    let mut line = format!(
        "{}: {} after {} steps; max |contour| {:.4} m, max Cartesian {:.4} m, mean v_avg {:.3}, mean solve {:.1} ms",
        r.name,
        r.status.as_str(),
        s.steps,
        s.max_contour_error,
        s.max_cartesian_error,
        s.mean_v_avg,
        1e3 * s.mean_solve_time
    );
    if let Some(c) = s.min_clearance {
        line += &format!(", min clearance {c:.3} m, overtake {}", s.overtake);
    }
    if let Some(reason) = &r.reason {
        line += &format!(" ({reason})");
    }
    line
}

fn exit_for(records: &[RunRecord]) -> ExitCode {
    if records.iter().all(|r| r.status == RunStatus::Completed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
