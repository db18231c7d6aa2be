use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rsma_core::env::Mode;
use rsma_core::experiment::report::{report, summary_table};
use rsma_core::experiment::run::{evaluate_run, run_training, Policy};
use rsma_core::experiment::{run_power_sweep, run_qos_sweep, Algorithm, RunConfig};

/// Downlink RSMA power allocation with PPO and tabular baselines.
#[derive(Debug, Parser)]
#[command(name = "rsma-lab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra key=value settings applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Run a single seed instead of `run.seeds`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    algorithm: Option<Algorithm>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Start from the small two-user profile instead of the full-scale one.
    #[arg(long, global = true)]
    desk: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the configured algorithm for every seed.
    Train,
    /// Train and evaluate across transmit powers (`sweep.power_dbm`).
    SweepPower,
    /// Train and evaluate across QoS thresholds (`sweep.qos`).
    SweepQos,
    /// Evaluate trained runs with exploration disabled.
    Evaluate,
    /// Summarise the runs and sweeps under a directory.
    Report {
        /// Defaults to the configured output directory.
        dir: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut config = if common.desk { RunConfig::desk() } else { RunConfig::default() };
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config
            .apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for item in &common.set {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {item:?}"))?;
        config.set(key, value)?;
    }
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    if let Some(algorithm) = common.algorithm {
        config.algorithm = algorithm;
    }
    if let Some(mode) = common.mode {
        config.env.mode = mode;
    }
    Ok(config.finish()?)
}

fn run(cli: Cli) -> Result<()> {
    let config = resolve(&cli.common)?;
    match cli.command {
        Command::Train => {
            for &seed in &config.seeds {
                let record = run_training(&config, seed)
                    .with_context(|| format!("training {} seed {seed}", config.scheme()))?;
                println!(
                    "{} seed {seed}: {} episodes, final mean sum-rate {:.4} -> {}",
                    config.scheme(),
                    record.rows.len(),
                    record.final_sum_rate(),
                    config.run_dir(seed).display()
                );
            }
        }
        Command::SweepPower => {
            let result = run_power_sweep(&config, &config.sweep.power_dbm)?;
            print!("{}", summary_table(&result.summary));
        }
        Command::SweepQos => {
            let result = run_qos_sweep(&config, &config.sweep.qos)?;
            print!("{}", summary_table(&result.summary));
        }
        Command::Evaluate => {
            for &seed in &config.seeds {
                let dir = config.run_dir(seed);
                let policy = Policy::load(&dir, &config)
                    .with_context(|| format!("loading the trained agent from {}", dir.display()))?;
                let eval = evaluate_run(&policy, &config, seed)?;
                println!(
                    "{} seed {seed}: {} episodes, mean sum-rate {:.4}, mean reward {:.4}, QoS violations {:.4}",
                    config.scheme(),
                    eval.rows.len(),
                    eval.mean_sum_rate,
                    eval.mean_reward,
                    eval.qos_violation_fraction
                );
            }
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or(config.out.clone());
            let out = report(&dir)?;
            println!("{} training runs summarised", out.runs);
            for f in out.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
