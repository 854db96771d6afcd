//! `mlqmc`: configuration-driven driver for the field, screening, sample-count
//! and estimator experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Dumps;
use config::{ConfigError, RunConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mlqmc", version, about = "Multilevel QMC for lognormal diffusion with Matérn coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write the Matérn field of one sample on every level.
    Field,
    /// Per-level screening table and fitted rates.
    Screen,
    /// log2(N V) against N on every level.
    Nvar,
    /// Cost and estimate for every tolerance.
    Estimate,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sample index for `field` and the dumps.
    #[arg(long, global = true)]
    sample: Option<u32>,
    #[arg(long, global = true)]
    dump_mesh: bool,
    #[arg(long, global = true)]
    dump_supermesh: bool,
    #[arg(long, global = true)]
    dump_noise: bool,
    #[arg(long, global = true)]
    dump_field: bool,
}

fn load_config(c: &Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(n) = c.sample {
        cfg.sample = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let cfg = match load_config(c) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(t) = c.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let dumps = Dumps { mesh: c.dump_mesh, supermesh: c.dump_supermesh, noise: c.dump_noise, field: c.dump_field };
    let result = match cli.command {
        Command::Field => commands::cmd_field(&cfg, dumps).map(|o| (o, true)),
        Command::Screen => commands::cmd_screen(&cfg, dumps).map(|o| (o, true)),
        Command::Nvar => commands::cmd_nvar(&cfg, dumps).map(|o| (o, true)),
        Command::Estimate => commands::cmd_estimate(&cfg, dumps),
    };
    match result {
        Ok((outputs, converged)) => {
            for name in outputs {
                println!("{}", cfg.out.join(name).display());
            }
            if converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: at least one tolerance did not converge (see the converged column)");
                ExitCode::from(EXIT_CONVERGENCE)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else if matches!(e.downcast_ref::<mlqmc_core::Error>(), Some(mlqmc_core::Error::ConvergenceFailure(_))) {
                ExitCode::from(EXIT_CONVERGENCE)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}
