use std::path::PathBuf;
use std::process::ExitCode;

use bridgeblock::commands::{cmd_experiment, cmd_rates, cmd_sample, load, Overrides, OUTPUT_ENV};
use bridgeblock::{CliError, ExperimentKind};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bridgeblock", version, about = "Blocked rejection sampling of diffusion bridges")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw bridges, unblocked or with one blocked chain.
    Sample(Common),
    /// Tabulate closed-form convergence rates over the grid.
    Rates(Common),
    /// Run an experiment grid.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Experiment kind; defaults to the one in the config.
        #[arg(long, value_enum)]
        which: Option<ExperimentKind>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Sample(c) | Command::Rates(c) => c,
        Command::Experiment { common, .. } => common,
    };
    let overrides = Overrides { seed: common.seed, out: common.out.clone() };
    let (cfg, out) = load(&common.config, &overrides)?;
    match cli.command {
        Command::Sample(_) => {
            cmd_sample(&cfg, &out)?;
        }
        Command::Rates(_) => {
            let rows = cmd_rates(&cfg, &out)?;
            log::info!("wrote {rows} rate rows");
        }
        Command::Experiment { which, .. } => {
            cmd_experiment(&cfg, which, &out)?;
        }
    }
    println!("{}", out.root().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
