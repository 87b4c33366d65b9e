use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opinf_schwarz::driver::commands;
use opinf_schwarz::driver::config::{parse_config, RunConfig};
use opinf_schwarz::Error;

/// Hybrid FE / Operator Inference Schwarz solver for 2D
/// convection-diffusion-reaction.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for reproducible scripting; every computation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monolithic finite element reference.
    RunFom(Common),
    /// All-FE Schwarz on the configured decomposition.
    RunSchwarz(Common),
    /// Train subdomain ROMs from an all-FE Schwarz run.
    Train(Common),
    /// Coupled run with the configured FE/ROM assignment.
    RunHybrid(Common),
    /// Monolithic Operator Inference model.
    RunMonoOpinf {
        #[command(flatten)]
        common: Common,
        /// Choose lambda from the configured grid instead of `training.mono_lambda`.
        #[arg(long)]
        lambda_grid: bool,
    },
    /// Run every model and write the comparison report.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda_grid: bool,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Divergence(_) => 3,
        _ => 1,
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let cfg = match &common.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::RunFom(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_run_fom(&cfg, &out)
        }
        Command::RunSchwarz(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_run_schwarz(&cfg, &out)
        }
        Command::Train(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_train(&cfg, &out)
        }
        Command::RunHybrid(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_run_hybrid(&cfg, &out)
        }
        Command::RunMonoOpinf { common, lambda_grid } => {
            let (cfg, out) = load(&common)?;
            commands::cmd_run_mono_opinf(&cfg, &out, lambda_grid)
        }
        Command::Compare { common, lambda_grid } => {
            let (cfg, out) = load(&common)?;
            commands::cmd_compare(&cfg, &out, lambda_grid)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
