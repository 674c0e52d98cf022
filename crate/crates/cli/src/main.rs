//! `ultralap` command-line driver.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::error::CliError;
use crate::output::{sha256_hex, Bundle};

#[derive(Parser)]
#[command(
    name = "ultralap",
    version,
    about = "Invariant ultrametric Laplacians: spectra, heat flow, jump paths and boundary problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "ULTRALAP_THREADS")]
    threads: Option<usize>,
    /// Overrides `sample.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the fundamental domain, convergence and partition without computing spectra.
    Validate,
    /// Eigenvalues with multiplicities and tail bounds.
    Spectrum,
    /// Solve the Cauchy problem at the configured times.
    Heat,
    /// Heat kernel values on leaf pairs.
    Kernel,
    /// Seeded paths of the jump process.
    Sample,
    /// Heat equation confined to a region.
    Bvp,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Spectrum => "spectrum",
            Command::Heat => "heat",
            Command::Kernel => "kernel",
            Command::Sample => "sample",
            Command::Bvp => "bvp",
        }
    }
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let loaded = config::load(path)?;
    let mut bundle = Bundle::create(&cli.out)?;
    let cfg = &loaded.config;
    let code = match cli.command {
        Command::Validate => commands::validate(cfg, &mut bundle)?,
        Command::Spectrum => commands::spectrum(cfg, &mut bundle)?,
        Command::Heat => commands::heat(cfg, &mut bundle)?,
        Command::Kernel => commands::kernel(cfg, &mut bundle)?,
        Command::Sample => commands::sample(cfg, cli.seed, &mut bundle)?,
        Command::Bvp => commands::bvp(cfg, &mut bundle)?,
    };
    let seed = cli.seed.or(cfg.sample.as_ref().map(|s| s.seed));
    let context = json!({
        "config_path": path.display().to_string(),
        "config_sha256": sha256_hex(&loaded.raw),
        "config": loaded.echo,
        "resolved_config": serde_json::to_value(cfg).map_err(|e| CliError::Internal(e.to_string()))?,
        "seed": seed,
        "threads": rayon::current_num_threads(),
        "exit_code": code,
    });
    bundle.finish(cli.command.name(), context)?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
