use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hlm_gibbs::cli::{self, RunOptions};

#[derive(Parser)]
#[command(version, about = "Gibbs sampler for two-level models with missing covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of chains
    #[arg(long)]
    chains: Option<usize>,
    /// Burn-in iterations per chain
    #[arg(long)]
    burn: Option<usize>,
    /// Kept iterations per chain
    #[arg(long)]
    post: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV file described by a TOML config
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write complete and amputed data for one replication of a scenario
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replication: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run a Monte Carlo study (resumes from checkpoints in --out-dir)
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replications: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// PSRF and posterior summaries of a chains.csv file
    Diagnose {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn options(common: &Common) -> anyhow::Result<RunOptions> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(RunOptions {
        seed: common.seed,
        chains: common.chains,
        burn: common.burn,
        post: common.post,
        out_dir: common.out_dir.clone(),
        ..RunOptions::default()
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Cli::parse();
    let result = (|| -> anyhow::Result<Result<cli::Outcome, hlm_gibbs::Error>> {
        Ok(match &args.command {
            Command::Fit { config, common } => cli::cmd_fit(config, &options(common)?),
            Command::Simulate { config, replication, common } => {
                let opts = RunOptions { replication: *replication, ..options(common)? };
                cli::cmd_simulate(config, &opts)
            }
            Command::Benchmark { config, replications, common } => {
                let opts = RunOptions { replications: *replications, ..options(common)? };
                cli::cmd_benchmark(config, &opts)
            }
            Command::Diagnose { input, common } => cli::cmd_diagnose(input, &options(common)?),
        })
    })();

    match result {
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
        Ok(Ok(outcome)) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if outcome.warnings.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
    }
}
