//! `selftrig` command line: stability analysis and closed-loop simulation of
//! self-triggered sampling policies for linear sampled-data systems.

mod artifacts;
mod commands;
mod errors;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::Overrides;
use errors::CliResult;
use scenario::ScenarioFile;

#[derive(Parser)]
#[command(
    name = "selftrig",
    about = "Self-triggered sampling design and simulation for linear sampled-data control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (TOML)
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory for artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// RNG seed override (tie-breaking and noise)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Integration substep override in seconds
    #[arg(long, global = true)]
    substep: Option<f64>,

    /// Ultimate-bound formula variant
    #[arg(long, global = true, value_enum)]
    mu_variant: Option<MuVariantArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MuVariantArg {
    Paper,
    Corrected,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral-radius sweep and two-interval cycle analysis
    Analyze,
    /// Build or verify the scenario's stability certificate
    Certify,
    /// Precompute the offline per-region policy
    Partition,
    /// Run the closed loop and write trace artifacts
    Simulate,
    /// Re-check a recorded trace against its certificate
    Verify,
    /// Batch simulations over consecutive seeds
    Sweep,
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let overrides = Overrides {
        seed: cli.seed,
        substep: cli.substep,
        mu_variant: cli.mu_variant.map(|v| match v {
            MuVariantArg::Paper => selftrig::MuVariant::Paper,
            MuVariantArg::Corrected => selftrig::MuVariant::Corrected,
        }),
    };
    let scenario_path = cli.scenario.as_deref().ok_or_else(|| {
        errors::CliError::Validation("--scenario PATH is required".into())
    })?;
    match cli.command {
        Command::Sweep => commands::cmd_sweep(scenario_path, &cli.out, &overrides),
        _ => {
            let scenario = ScenarioFile::load(scenario_path)?;
            match cli.command {
                Command::Analyze => commands::cmd_analyze(&scenario, scenario_path, &cli.out),
                Command::Certify => {
                    commands::cmd_certify(&scenario, scenario_path, &cli.out, &overrides)
                }
                Command::Partition => {
                    commands::cmd_partition(&scenario, scenario_path, &cli.out, &overrides)
                }
                Command::Simulate => {
                    commands::cmd_simulate(&scenario, scenario_path, &cli.out, &overrides)
                        .map(|_| ())
                }
                Command::Verify => {
                    commands::cmd_verify(&scenario, scenario_path, &cli.out, &overrides)
                }
                Command::Sweep => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
