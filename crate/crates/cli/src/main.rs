use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use isoext::scenario::{align, dump_field, run_scenario, validate_geometry, ScenarioConfig};
use isoext::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ASSUMPTION: u8 = 3;
const EXIT_THRESHOLD: u8 = 4;

#[derive(Parser)]
#[command(
    name = "isoext",
    version,
    about = "Build and verify smooth near-isometric extensions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the extension and write the verification report.
    Extend(Common),
    /// Write a CSV grid dump of the extension.
    Dump(Common),
    /// Align the scenario's labelled point sets.
    Align(Common),
    /// Certify the interior-ball constants of the scenario's set.
    ValidateGeometry(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid resolution per axis, overriding the scenario.
    #[arg(long)]
    grid: Option<usize>,
    /// Seed, overriding the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

enum Failure {
    Pipeline(Error),
    Other(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Pipeline(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(common: &Common) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut config = ScenarioConfig::from_json(&text)?;
    if let Some(g) = common.grid {
        config.sampling.grid_resolution = g;
    }
    if let Some(s) = common.seed {
        config.sampling.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let common = match &cli.command {
        Command::Extend(c)
        | Command::Dump(c)
        | Command::Align(c)
        | Command::ValidateGeometry(c) => c,
    };
    if let Some(k) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring thread pool")?;
    }
    let config = load(common)?;
    let out = common.out.as_deref();
    match &cli.command {
        Command::Extend(_) => {
            let report = run_scenario(&config, common.timings)?;
            emit(out, &(report.to_json() + "\n"))?;
            Ok(report.pass)
        }
        Command::Dump(_) => {
            let ext = config.build()?;
            emit(out, &dump_field(&ext, config.sampling.grid_resolution))?;
            Ok(true)
        }
        Command::Align(_) => {
            let report = align(&config)?;
            let json = serde_json_pretty(&report)?;
            emit(out, &json)?;
            Ok(true)
        }
        Command::ValidateGeometry(_) => {
            let report = validate_geometry(&config)?;
            emit(out, &serde_json_pretty(&report)?)?;
            Ok(true)
        }
    }
}

fn serde_json_pretty<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed: see the `checks` list in the report");
            ExitCode::from(EXIT_THRESHOLD)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidConfig(_) | Error::Dimension(_) | Error::DegenerateSet { .. } => {
                    EXIT_CONFIG
                }
                e if e.is_assumption_failure() => EXIT_ASSUMPTION,
                _ => EXIT_OTHER,
            };
            ExitCode::from(code)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_OTHER)
        }
    }
}
