use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use daur_harness::experiments::Experiment;
use daur_harness::output::write_outputs;
use daur_harness::{parse_seeds, run_experiment, ExperimentSpec, HarnessConfig, HarnessError};

#[derive(Parser)]
#[command(name = "daur", version, about = "Run association and resource allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment over a seed range and write CSV files.
    Run {
        experiment: String,
        /// TOML file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Inclusive range such as 1..20.
        #[arg(long, default_value = "1..20")]
        seeds: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Also write one JSON record per run.
        #[arg(long)]
        json: bool,
    },
    /// Print the experiment names.
    ListExperiments,
    /// Parse and check a config file, then print the effective settings.
    ValidateConfig {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn load(path: Option<&PathBuf>) -> Result<HarnessConfig, HarnessError> {
    match path {
        Some(p) => HarnessConfig::load(p),
        None => {
            let cfg = HarnessConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{}", e.name());
            }
        }
        Command::ValidateConfig { config, quiet } => {
            let cfg = load(config.as_ref())?;
            if !quiet {
                print!("{}", cfg.to_toml());
            }
            println!("OK");
        }
        Command::Run { experiment, config, seeds, out, json } => {
            let experiment = Experiment::parse(&experiment)?;
            let spec = ExperimentSpec { experiment, seeds: parse_seeds(&seeds)?, config: load(config.as_ref())? };
            let output = run_experiment(&spec)?;
            let failed = output.rows.iter().filter(|r| !r.error.is_empty()).count();
            for path in write_outputs(&out, experiment.name(), &output, json)? {
                println!("wrote {}", path.display());
            }
            if failed > 0 {
                eprintln!("{failed} of {} rows failed; see the error column", output.rows.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (HarnessError::UnknownExperiment(_) | HarnessError::NoSeeds)) => {
            eprintln!("error: {e}");
            eprintln!("run `daur list-experiments` for the available names");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
