use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qzk::error::CliError;
use qzk::scenarios::{ConfigFile, Params, Scenario, ScenarioConfig, DEFAULT_SEED};
use qzk::{run_scenario, Report};

/// Runs one experiment and writes its JSON report.
#[derive(Debug, Parser)]
#[command(name = "qzk", version)]
struct Cli {
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// JSON file with `scenario` and parameters; its values override flags, except --seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Instance JSON for the scenarios that take one.
    #[arg(long)]
    instance: Option<PathBuf>,
}

fn config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            serde_json::from_str::<ConfigFile>(&text).map_err(|source| CliError::Json { path: path.clone(), source })?
        }
        None => ConfigFile::default(),
    };
    let scenario = file.scenario.or(cli.scenario).ok_or_else(|| CliError::config("no scenario given"))?;
    let flags = Params { trials: cli.trials, instance: cli.instance.clone(), ..Params::default() };
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    Ok(ScenarioConfig::new(scenario, seed).with(flags.merged(&file.params)))
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|source| CliError::Io { path: path.clone(), source }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config(&cli).and_then(|c| run_scenario(&c)).and_then(|r| emit(&r, cli.out.as_ref()).map(|_| r));
    match result {
        Ok(r) if r.passed => ExitCode::SUCCESS,
        Ok(r) => {
            for c in r.checks.iter().filter(|c| !c.passed && c.kind == qzk::CheckKind::Asserted) {
                eprintln!("check failed: {} = {:e} (want {})", c.name, c.value, c.condition);
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
