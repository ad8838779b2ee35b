use std::path::PathBuf;

use clap::{Args, ValueEnum};
use gve_core::experiment::Experiment;
use gve_core::gridhouse::Split;
use gve_core::trainer::load_checkpoint;
use gve_core::{Error, Result};

use crate::run::{self, CHECKPOINT_DIR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory written by `gve train`.
    #[arg(long, value_name = "DIR")]
    run: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Episode count; defaults to the run's `eval_episodes`.
    #[arg(long)]
    episodes: Option<usize>,
    /// Episode-list seed; defaults to the run's `eval_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Test-time adaptation for variants trained with it.
    #[arg(long, value_enum)]
    adapt: Option<Switch>,
    /// Monte-Carlo continuations per step for value targets. Requires
    /// adaptation to be off.
    #[arg(long)]
    mc_rollouts: Option<usize>,
    /// Output directory; defaults to `<run>/eval-<split>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let split = Split::parse(&args.split).ok_or_else(|| Error::Config(format!("unknown split `{}`", args.split)))?;
    let mut cfg = run::load_run_config(&args.run)?;
    if let Some(n) = args.episodes {
        cfg.eval_episodes = n;
    }
    if let Some(s) = args.seed {
        cfg.eval_seed = s;
    }
    if let Some(a) = args.adapt {
        cfg.eval_adapt = a == Switch::On;
    }
    if let Some(m) = args.mc_rollouts {
        cfg.mc_rollouts = m;
    }
    cfg.validate()?;

    let exp = Experiment::prepare(&cfg)?;
    let agent = exp.agent(cfg.variant, &cfg)?;
    let ck = load_checkpoint(&args.run.join(CHECKPOINT_DIR), &agent)?;
    let records = exp.evaluate(&agent, &ck.params, &cfg, split)?;
    let out = args
        .out
        .unwrap_or_else(|| args.run.join(format!("eval-{}", split.label())));
    let report = run::write_evaluation(&out, &cfg, &agent, split.label(), &records)?;
    run::print_report(&format!("{} {}", agent.variant, split.label()), &report);
    println!("wrote {}", out.display());
    Ok(())
}
