use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use sncl::config::{ExperimentConfig, FileConfig, Overrides};
use sncl::{experiment, report, sweep};

#[derive(Parser)]
#[command(name = "sncl", version, about = "Continual-learning experiments with sparse gated networks and replay")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over every seed.
    Run(RunArgs),
    /// Grid search over alpha, beta, gamma, eta and lr on validation seeds.
    Sweep(RunArgs),
    /// Summarize a finished run directory and redraw its plots.
    Report {
        /// Directory holding metrics_<seed>.json files.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replay buffer size.
    #[arg(long)]
    buffer: Option<usize>,
    /// sgd, er, der or sncl.
    #[arg(long)]
    method: Option<String>,
    /// reduced or full.
    #[arg(long)]
    scale: Option<String>,
    /// pmnist, rmnist, smnist, smnist-til or mnist360.
    #[arg(long)]
    protocol: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write the final weights as checkpoint_<seed>.json.
    #[arg(long)]
    checkpoint: bool,
    /// Also write the final memory as buffer_<seed>.jsonl.
    #[arg(long)]
    dump_buffer: bool,
}

impl RunArgs {
    fn resolve(self) -> Result<(ExperimentConfig, PathBuf)> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let cfg = ExperimentConfig::resolve(
            file,
            Overrides {
                protocol: self.protocol,
                method: self.method,
                scale: self.scale,
                seed: self.seed,
                buffer: self.buffer,
                workers: self.workers,
                out: self.out,
                checkpoint: self.checkpoint,
                dump_buffer: self.dump_buffer,
            },
        )?;
        let out = cfg.out.clone().unwrap_or_else(|| {
            PathBuf::from("runs").join(format!(
                "{}_{}_{}",
                cfg.protocol.name(),
                cfg.train.method.method.name(),
                cfg.train.buffer_size
            ))
        });
        Ok((cfg, out))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Run(args) => {
            let (cfg, out) = args.resolve()?;
            let summary = experiment::run_experiment(&cfg, &out)?;
            let a = &summary.aggregate;
            println!(
                "{} {} M={}: {:.2} ± {:.2} over {} seeds, forgetting {:.2} ({})",
                a.protocol,
                a.method,
                a.buffer,
                a.avg_acc_mean,
                a.avg_acc_std,
                a.seed_count,
                a.forgetting_mean,
                out.display()
            );
            let failed = summary.failed();
            if failed == summary.outcomes.len() {
                bail!("all {failed} runs failed");
            }
            if failed > 0 {
                log::warn!("{failed} of {} runs failed; see metrics files", summary.outcomes.len());
            }
        }
        Command::Sweep(args) => {
            let (cfg, out) = args.resolve()?;
            let ranked = sweep::sweep(&cfg, &out)?;
            println!("rank  alpha     beta      gamma     eta       lr        acc");
            for r in &ranked {
                println!(
                    "{:<5} {:<9} {:<9} {:<9} {:<9} {:<9} {:.2} ± {:.2}",
                    r.rank, r.alpha, r.beta, r.gamma, r.eta, r.lr, r.avg_acc_mean, r.avg_acc_std
                );
            }
            println!("wrote {}", out.join("sweep.csv").display());
        }
        Command::Report { dir } => print!("{}", report::report(&dir)?),
    }
    Ok(())
}
