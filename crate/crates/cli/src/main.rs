use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inf_mmala::Algorithm;
use inf_mmala_cli::commands::{self, ChainRun};
use inf_mmala_cli::{parse_config, presets, CliError, ExperimentConfig, Result};

/// Samplers for diffusion paths observed with error.
#[derive(Debug, Parser)]
#[command(name = "inf-mmala", version, about)]
struct Cli {
    /// Seed for every random stream (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Built-in experiment used instead of --config.
    #[arg(long, global = true, value_parser = presets::NAMES)]
    preset: Option<String>,

    /// Number of independent chains, run concurrently.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    chains: u32,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (takes precedence over OUT_DIR and output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a path and its observations; writes data.csv and truth.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured sampler; writes steps.csv, trace.csv, summary.csv.
    Sample {
        #[command(flatten)]
        common: Common,
        /// `t,y` CSV file with the observations (default: per config).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Record the quadratic variation of every proposal; writes qv_<algo>.csv.
    Qvstudy {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithms to compare.
        #[arg(long, value_delimiter = ',', default_value = "inf-mmala,mmala")]
        algos: Vec<Algorithm>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Acceptance rates at the configured mesh and at half of it; writes mesh.csv.
    Meshstudy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.preset, &common.config) {
        (Some(_), Some(_)) => {
            return Err(CliError::validation(
                "config",
                "use either --config or --preset, not both",
            ))
        }
        (None, None) => {
            return Err(CliError::validation(
                "config",
                "one of --config or --preset is required",
            ))
        }
        (Some(name), None) => presets::preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_config(&text)?
        }
    };
    if let Some(seed) = cli.seed {
        cfg.sampler.seed = seed;
    }
    Ok(cfg)
}

fn report(runs: &[ChainRun]) {
    for r in runs {
        println!(
            "{} h={} chain {}: acceptance {:.4} over {} steps ({} metric failures)",
            r.algo,
            r.h,
            r.chain,
            r.summary.acceptance_rate,
            r.summary.n_steps,
            r.summary.metric_failures
        );
    }
}

fn run(cli: &Cli) -> Result<()> {
    let chains = cli.chains as usize;
    let env_out = std::env::var_os("OUT_DIR").map(PathBuf::from);
    match &cli.command {
        Command::Simulate { common } => {
            let cfg = load_config(cli, common)?;
            let out = commands::resolve_out_dir(common.out.clone(), env_out, &cfg)?;
            let ds = commands::cmd_simulate(&cfg, &out)?;
            println!(
                "wrote {} observations to {}",
                ds.obs.len(),
                out.join("data.csv").display()
            );
        }
        Command::Sample { common, data } => {
            let cfg = load_config(cli, common)?;
            let out = commands::resolve_out_dir(common.out.clone(), env_out, &cfg)?;
            let ds = commands::load_data(&cfg, data.as_deref())?;
            report(&commands::cmd_sample(&cfg, &ds, &out, chains)?);
        }
        Command::Qvstudy {
            common,
            algos,
            data,
        } => {
            let cfg = load_config(cli, common)?;
            let out = commands::resolve_out_dir(common.out.clone(), env_out, &cfg)?;
            let ds = commands::load_data(&cfg, data.as_deref())?;
            let runs = commands::cmd_qvstudy(&cfg, &ds, algos, &out, chains)?;
            report(&runs);
            for r in &runs {
                let mean =
                    r.steps.iter().map(|s| s.qve_proposed).sum::<f64>() / r.steps.len() as f64;
                println!("{} chain {}: mean proposal QVe {mean:.3}", r.algo, r.chain);
            }
        }
        Command::Meshstudy { common, data } => {
            let cfg = load_config(cli, common)?;
            let out = commands::resolve_out_dir(common.out.clone(), env_out, &cfg)?;
            let ds = commands::load_data(&cfg, data.as_deref())?;
            for row in commands::cmd_meshstudy(&cfg, &ds, &out, chains)?.rows {
                println!(
                    "delta={} {} h={} chain {}: acceptance {:.4}",
                    row.delta, row.algo, row.h, row.chain, row.acceptance_rate
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
