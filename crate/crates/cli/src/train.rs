use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Args;
use gve_core::agent::Agent;
use gve_core::config::{RunConfig, RESOLVED_FILE};
use gve_core::experiment::Experiment;
use gve_core::gridhouse::Split;
use gve_core::trainer::{load_checkpoint, save_checkpoint, SharedParamStore, PROGRESS_HEADER};
use gve_core::{Error, Result};

use crate::run::{self, CHECKPOINT_DIR, GRAPH_FILE, PROGRESS_FILE};
use crate::ConfigArgs;

/// Where the end-of-training validation pass is written inside a run.
pub const VAL_DIR: &str = "val";

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Continue the run in DIR from its checkpoint. Its saved configuration
    /// is used; `--set` may still raise `episodes`.
    #[arg(long, value_name = "DIR", conflicts_with = "config")]
    resume: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let (cfg, dir) = match &args.resume {
        Some(dir) => {
            let mut cfg = run::load_run_config(dir)?;
            run::apply_overrides(&mut cfg, &args.config.overrides)?;
            cfg.validate()?;
            (cfg, dir.clone())
        }
        None => {
            let cfg = run::resolve_config(&args.config)?;
            let dir = run::run_dir(&cfg);
            (cfg, dir)
        }
    };
    if args.print_config {
        print!("{}", cfg.resolved());
        return Ok(());
    }
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(RESOLVED_FILE), cfg.resolved())?;

    let exp = Experiment::prepare(&cfg)?;
    let agent = exp.agent(cfg.variant, &cfg)?;
    let graph = agent.graph().unwrap_or(&exp.graph);
    let doc = serde_json::to_string_pretty(&graph.to_document(&exp.vocab))?;
    std::fs::write(dir.join(GRAPH_FILE), doc)?;

    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    let store = if args.resume.is_some() {
        let ck = load_checkpoint(&ckpt_dir, &agent)?;
        println!("resuming {} at episode {}", agent.variant, ck.episodes);
        cfg.train_config().resume_store(&agent, ck)
    } else {
        exp.new_store(&agent, &cfg)
    };

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = Arc::clone(&stop);
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst))
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }

    let mut progress = progress_writer(&dir.join(PROGRESS_FILE), args.resume.is_some())?;
    let meta = BTreeMap::from([("seed".to_string(), cfg.seed.to_string())]);
    let mut window = SuccessWindow::default();
    exp.train(&agent, &store, &cfg, &stop, |row, store| {
        writeln!(progress, "{}", row.csv())?;
        window.push(row.success);
        if cfg.checkpoint_every > 0 && row.episode % cfg.checkpoint_every == 0 {
            progress.flush()?;
            save_checkpoint(&ckpt_dir, &agent, store, &meta)?;
            println!("episode {:>7}  recent SR {:.3}", row.episode, window.rate());
        }
        Ok(())
    })?;
    progress.flush()?;
    let digest = save_checkpoint(&ckpt_dir, &agent, &store, &meta)?;
    let done = store.episodes();
    println!("checkpoint at episode {done}: {digest}");

    if done < cfg.episodes {
        println!("interrupted; resume with `gve train --resume {}`", dir.display());
        return Ok(());
    }
    validate(&exp, &agent, &store, &cfg, &dir)
}

fn validate(exp: &Experiment, agent: &Agent, store: &SharedParamStore, cfg: &RunConfig, dir: &Path) -> Result<()> {
    let records = exp.evaluate(agent, &store.params(), cfg, Split::Val)?;
    let report = run::write_evaluation(&dir.join(VAL_DIR), cfg, agent, Split::Val.label(), &records)?;
    run::print_report(&format!("{} val", agent.variant), &report);
    Ok(())
}

fn progress_writer(path: &Path, append: bool) -> Result<BufWriter<File>> {
    let fresh = !append || !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)?;
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "{PROGRESS_HEADER}")?;
    }
    Ok(w)
}

/// Success rate over the most recent training episodes, for console output.
#[derive(Debug, Default)]
struct SuccessWindow {
    recent: std::collections::VecDeque<bool>,
}

impl SuccessWindow {
    const LEN: usize = 1000;

    fn push(&mut self, success: bool) {
        if self.recent.len() == Self::LEN {
            self.recent.pop_front();
        }
        self.recent.push_back(success);
    }

    fn rate(&self) -> f64 {
        if self.recent.is_empty() {
            return 0.0;
        }
        self.recent.iter().filter(|s| **s).count() as f64 / self.recent.len() as f64
    }
}
