//! Command-line front end for scenarios, identification and verification.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 invariant
//! violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hybrid_alloc::fes::io::{read_training_csv, write_model, write_training_csv};
use hybrid_alloc::fes::{identify, synthesize_training_grid, FesModel, GridProtocol, IdentifyOptions};
use hybrid_alloc::sim::{builtin_scenario, builtin_scenarios, compare, run, Scenario, Trace};
use hybrid_alloc::verify::{run_suite, Suite};
use hybrid_alloc::Error;

#[derive(Parser)]
#[command(name = "hybrid-alloc", version, about = "Hybrid FES-exoskeleton control allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its trace.
    Run {
        /// Scenario file, or `builtin:<name>` for a shipped scenario.
        scenario: String,
        /// Trace output path [default: <scenario name>.csv]
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit an FES model to a training CSV.
    Identify {
        training: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Muscle to fit when the file holds several.
        #[arg(long)]
        muscle: Option<String>,
        /// Expected activation bandwidth, Hz; only used for plausibility warnings.
        #[arg(long, default_value_t = 2.0)]
        bandwidth_hint: f64,
    },
    /// Write a synthetic training grid generated from a built-in model.
    SynthGrid {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Muscle::Both)]
        muscle: Muscle,
        /// Torque sensor noise standard deviation, N·m.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the verification oracles.
    Verify {
        #[arg(long, default_value = "all", value_parser = clap::builder::PossibleValuesParser::new(Suite::NAMES))]
        suite: String,
        /// Scenario files for the state-bound check [default: shipped scenarios]
        #[arg(long = "scenario")]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Compare two traces on the same time grid.
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Muscle {
    Flexor,
    Extensor,
    Both,
}

fn load_scenario(spec: &str) -> Result<Scenario, Error> {
    match spec.strip_prefix("builtin:") {
        Some(name) => {
            builtin_scenario(name).unwrap_or_else(|| Err(Error::Config(format!("no shipped scenario named {name:?}"))))
        }
        None => Scenario::load(Path::new(spec)),
    }
}

fn cmd_run(spec: &str, output: Option<PathBuf>) -> Result<ExitCode, Error> {
    let scenario = load_scenario(spec)?;
    let out = run(&scenario)?;
    let path = output.unwrap_or_else(|| PathBuf::from(format!("{}.csv", scenario.name)));
    out.trace.write(&path)?;
    println!("scenario         {}", scenario.name);
    println!("trace            {}", path.display());
    println!("{}", out.summary);
    if out.summary.invariants_hold() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("invariant violated");
        Ok(ExitCode::from(2))
    }
}

fn cmd_identify(training: &Path, output: &Path, muscle: Option<&str>, hint: f64) -> Result<ExitCode, Error> {
    let grids = read_training_csv(training)?;
    let grid = match muscle {
        Some(m) => grids
            .iter()
            .find(|g| g.muscle == m)
            .ok_or_else(|| Error::InvalidInput(format!("no trials for muscle {m:?}")))?,
        None if grids.len() == 1 => &grids[0],
        None => {
            let names: Vec<_> = grids.iter().map(|g| g.muscle.as_str()).collect();
            return Err(Error::InvalidInput(format!(
                "file holds several muscles ({}); pick one with --muscle",
                names.join(", ")
            )));
        }
    };
    let id = identify(grid, hint, &IdentifyOptions::default())?;
    for w in &id.warnings {
        eprintln!("warning: {w}");
    }
    write_model(output, &id.model)?;
    println!(
        "{}: bandwidth {:.4} Hz, delay {:.1} ms, peak torque {:.3} N·m -> {}",
        id.model.name,
        id.model.bandwidth(),
        1e3 * id.model.delay_td,
        id.model.contraction.torques().iter().copied().fold(0.0, f64::max),
        output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(output: &Path, muscle: Muscle, noise: f64, seed: u64) -> Result<ExitCode, Error> {
    let models = match muscle {
        Muscle::Flexor => vec![FesModel::synthetic_flexor()],
        Muscle::Extensor => vec![FesModel::synthetic_extensor()],
        Muscle::Both => vec![FesModel::synthetic_flexor(), FesModel::synthetic_extensor()],
    };
    let protocol = GridProtocol {
        noise_std: noise,
        seed,
        ..Default::default()
    };
    let grids = models
        .iter()
        .map(|m| synthesize_training_grid(m, &protocol))
        .collect::<Result<Vec<_>, _>>()?;
    write_training_csv(output, &grids)?;
    println!("wrote {} grids to {}", grids.len(), output.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: &str, files: &[PathBuf], seed: u64) -> Result<ExitCode, Error> {
    let suite = Suite::parse(suite).ok_or_else(|| Error::Config(format!("unknown suite {suite:?}")))?;
    let scenarios = if files.is_empty() {
        builtin_scenarios()?
    } else {
        files.iter().map(|p| Scenario::load(p)).collect::<Result<Vec<_>, _>>()?
    };
    let results = run_suite(suite, &scenarios, seed)?;
    for r in &results {
        println!("{r}");
    }
    if results.iter().all(|r| r.pass) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn cmd_compare(a: &Path, b: &Path) -> Result<ExitCode, Error> {
    let report = compare(&Trace::read(a)?, &Trace::read(b)?)?;
    println!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run { scenario, output } => cmd_run(scenario, output.clone()),
        Command::Identify {
            training,
            output,
            muscle,
            bandwidth_hint,
        } => cmd_identify(training, output, muscle.as_deref(), *bandwidth_hint),
        Command::SynthGrid {
            output,
            muscle,
            noise,
            seed,
        } => cmd_synth(output, *muscle, *noise, *seed),
        Command::Verify { suite, scenarios, seed } => cmd_verify(suite, scenarios, *seed),
        Command::Compare { a, b } => cmd_compare(a, b),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFinite { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
