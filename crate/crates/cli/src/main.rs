use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vecsched::harness::{
    evaluate_checkpoint, final_eval_indices, random_bound_trials, run_baseline, sweep, train, write_eval_outputs,
    write_sweep_outputs, write_train_outputs, Checkpoint, ExperimentConfig, PolicyKind, SweepAxis,
};

#[derive(Parser)]
#[command(name = "vec-sched", version, about = "Vehicular edge DNN partitioning and offloading experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learned policy (mad2rl or pqmix).
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the configured policy.
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Override the number of training episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Check the drift bound on every tenth slot.
        #[arg(long)]
        verify_bound: bool,
    },
    /// Re-run the final evaluation window of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a rule-based policy on the evaluation episodes.
    Baseline {
        #[arg(long)]
        policy: PolicyKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        verify_bound: bool,
    },
    /// Repeat training (or a baseline) across values of one parameter.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the drift bound on random transitions.
    VerifyBound {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            out,
            policy,
            episodes,
            verify_bound,
        } => {
            let mut cfg = load_config(config.as_deref(), seed)?;
            if let Some(p) = policy {
                cfg.policy = p;
            }
            if let Some(h) = episodes {
                cfg.trainer.episodes = h;
            }
            cfg.verify_bound |= verify_bound;
            let run = train(&cfg)?;
            write_train_outputs(&out, &run)?;
            let s = run.summary();
            println!("{}", serde_json::to_string_pretty(&s)?);
            if s.bound_violations > 0 {
                bail!("{} drift-bound violations", s.bound_violations);
            }
        }
        Command::Evaluate { checkpoint, out } => {
            let ck = Checkpoint::load(&checkpoint)
                .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
            let evals = evaluate_checkpoint(&ck, final_eval_indices(&ck.config))?;
            let out = out.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join("evaluation")
            });
            write_eval_outputs(&out, &ck.config, "eval", &evals)?;
            let recs: Vec<_> = evals.into_iter().map(|(_, r)| r).collect();
            println!("{}", serde_json::to_string_pretty(&vecsched::harness::Summary::of(&recs))?);
        }
        Command::Baseline {
            policy,
            config,
            seed,
            out,
            verify_bound,
        } => {
            let mut cfg = load_config(config.as_deref(), seed)?;
            cfg.policy = policy;
            cfg.verify_bound |= verify_bound;
            let evals = run_baseline(&cfg, policy, final_eval_indices(&cfg))?;
            write_eval_outputs(&out, &cfg, policy.name(), &evals)?;
            let recs: Vec<_> = evals.into_iter().map(|(_, r)| r).collect();
            let s = vecsched::harness::Summary::of(&recs);
            println!("{}", serde_json::to_string_pretty(&s)?);
            if s.bound_violations > 0 {
                bail!("{} drift-bound violations", s.bound_violations);
            }
        }
        Command::Sweep {
            axis,
            values,
            config,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let points = sweep(&cfg, axis, &values)?;
            write_sweep_outputs(&out, &cfg, axis, &points)?;
            for p in &points {
                println!(
                    "{}={} reward={} delay={} queue={}",
                    axis.name(),
                    p.value,
                    p.summary.mean_reward,
                    p.summary.mean_delay,
                    p.summary.mean_queue
                );
            }
        }
        Command::VerifyBound {
            samples,
            scenarios,
            seed,
        } => {
            let report = random_bound_trials(scenarios, samples, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.violations > 0 {
                bail!("{} of {} samples violate the bound", report.violations, report.samples);
            }
        }
    }
    Ok(())
}
