//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected. [`RunConfig::resolved`] renders every key, so a saved file
//! reproduces the run exactly.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, Variant};
use crate::error::{Error, Result};
use crate::evalkit::{ErrorKind, EvalConfig, GroundTruth};
use crate::gtn::GtnConfig;
use crate::knowgraph::{DEFAULT_COOCCURRENCE_THRESHOLD, OBS_SLICE_DIM};
use crate::trainer::{A3CConfig, MamlConfig, TrainConfig};

pub const RESOLVED_FILE: &str = "config.resolved";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    pub episodes: u64,
    pub a3c: A3CConfig,
    pub maml: MamlConfig,
    pub agent: AgentConfig,
    pub train_houses: usize,
    pub val_houses: usize,
    pub test_houses: usize,
    pub views_per_house: usize,
    pub cooccurrence_threshold: u32,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub eval_max_steps: usize,
    pub eval_adapt: bool,
    pub mc_rollouts: usize,
    pub error_kind: ErrorKind,
    pub checkpoint_every: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let eval = EvalConfig::default();
        Self {
            variant: Variant::GveMaml,
            seed: train.seed,
            episodes: train.episodes,
            a3c: train.a3c,
            maml: train.maml,
            agent: AgentConfig::default(),
            train_houses: 20,
            val_houses: 5,
            test_houses: 5,
            views_per_house: 1000,
            cooccurrence_threshold: DEFAULT_COOCCURRENCE_THRESHOLD,
            eval_episodes: 1000,
            eval_seed: 1,
            eval_max_steps: eval.max_steps,
            eval_adapt: true,
            mc_rollouts: 0,
            error_kind: ErrorKind::Absolute,
            checkpoint_every: 5000,
            output_dir: PathBuf::from("runs"),
        }
    }
}

/// Every key with a one-line description, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("variant", "agent variant label"),
    ("seed", "training seed (parameters, graph harvest, workers)"),
    ("episodes", "training episode budget"),
    ("workers", "asynchronous worker threads"),
    ("gamma", "discount factor"),
    ("entropy_beta", "entropy bonus weight"),
    ("segment_length", "training episode step cap"),
    ("lr", "Adam learning rate for variants without adaptation"),
    ("grad_clip", "global gradient-norm clip on each applied update"),
    ("nstep", "use G_t - V_t instead of the one-step TD advantage"),
    ("inner_lr", "inner SGD step on the learned loss"),
    ("outer_lr", "Adam rate for policy weights with adaptation"),
    ("adapt_lr", "Adam rate for learned-loss weights"),
    ("adapt_interval", "steps between inner updates"),
    ("max_inner_updates", "inner updates per episode"),
    ("hvp_eps", "finite-difference radius of the learned-loss meta-gradient"),
    ("inner_grad_clip", "global gradient-norm clip on each inner update"),
    ("embed_dim", "object embedding width"),
    ("input_dim", "state projection width"),
    ("hidden", "LSTM width"),
    ("adapt_hidden", "learned-loss hidden width"),
    ("gtn_hidden", "graph convolution width"),
    ("gtn_q_dim", "graph vector width"),
    ("gtn_tracks", "parallel adjacency mixtures"),
    ("gtn_stages", "composed mixtures per track"),
    ("gtn_conv_layers", "graph convolution layers"),
    ("freeze_graph_weight", "hold the critic's graph weight at zero"),
    ("train_houses", "house seeds per room, train split"),
    ("val_houses", "house seeds per room, validation split"),
    ("test_houses", "house seeds per room, test split"),
    ("views_per_house", "random poses per training house for co-occurrence"),
    ("cooccurrence_threshold", "joint views needed for an edge"),
    ("eval_episodes", "evaluation episodes"),
    ("eval_seed", "evaluation episode-list seed"),
    ("eval_max_steps", "evaluation step cap"),
    ("eval_adapt", "test-time adaptation for variants that train with it"),
    ("mc_rollouts", "Monte-Carlo continuations per step for value targets, 0 off"),
    ("error_kind", "value error: absolute or squared"),
    ("checkpoint_every", "episodes between checkpoints, 0 only at the end"),
    ("output_dir", "run directory, relative to the output root"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let g = &mut self.agent.gtn;
        match key.trim() {
            "variant" => {
                self.variant = Variant::parse(v).ok_or_else(|| Error::Config(format!("unknown variant `{v}`")))?
            }
            "seed" => self.seed = parse(key, v)?,
            "episodes" => self.episodes = parse(key, v)?,
            "workers" => self.a3c.workers = parse(key, v)?,
            "gamma" => self.a3c.gamma = parse(key, v)?,
            "entropy_beta" => self.a3c.entropy_beta = parse(key, v)?,
            "segment_length" => self.a3c.segment_length = parse(key, v)?,
            "lr" => self.a3c.lr = parse(key, v)?,
            "grad_clip" => self.a3c.grad_clip = parse(key, v)?,
            "nstep" => self.a3c.nstep = parse(key, v)?,
            "inner_lr" => self.maml.inner_lr = parse(key, v)?,
            "outer_lr" => self.maml.outer_lr = parse(key, v)?,
            "adapt_lr" => self.maml.adapt_lr = parse(key, v)?,
            "adapt_interval" => self.maml.interval = parse(key, v)?,
            "max_inner_updates" => self.maml.max_inner_updates = parse(key, v)?,
            "hvp_eps" => self.maml.hvp_eps = parse(key, v)?,
            "inner_grad_clip" => self.maml.inner_grad_clip = parse(key, v)?,
            "embed_dim" => {
                self.agent.embed_dim = parse(key, v)?;
                g.feature_dim = OBS_SLICE_DIM + self.agent.embed_dim;
            }
            "input_dim" => self.agent.input_dim = parse(key, v)?,
            "hidden" => self.agent.hidden = parse(key, v)?,
            "adapt_hidden" => self.agent.adapt_hidden = parse(key, v)?,
            "gtn_hidden" => g.hidden = parse(key, v)?,
            "gtn_q_dim" => g.q_dim = parse(key, v)?,
            "gtn_tracks" => g.tracks = parse(key, v)?,
            "gtn_stages" => g.stages = parse(key, v)?,
            "gtn_conv_layers" => g.conv_layers = parse(key, v)?,
            "freeze_graph_weight" => self.agent.freeze_graph_weight = parse(key, v)?,
            "train_houses" => self.train_houses = parse(key, v)?,
            "val_houses" => self.val_houses = parse(key, v)?,
            "test_houses" => self.test_houses = parse(key, v)?,
            "views_per_house" => self.views_per_house = parse(key, v)?,
            "cooccurrence_threshold" => self.cooccurrence_threshold = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "eval_seed" => self.eval_seed = parse(key, v)?,
            "eval_max_steps" => self.eval_max_steps = parse(key, v)?,
            "eval_adapt" => self.eval_adapt = parse(key, v)?,
            "mc_rollouts" => self.mc_rollouts = parse(key, v)?,
            "error_kind" => {
                self.error_kind = match v {
                    "absolute" => ErrorKind::Absolute,
                    "squared" => ErrorKind::Squared,
                    _ => return Err(Error::Config(format!("`error_kind` must be absolute or squared, got `{v}`"))),
                }
            }
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// `key = value` pairs for every key in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let g = &self.agent.gtn;
        KEYS.iter()
            .map(|&(k, _)| {
                let v = match k {
                    "variant" => self.variant.label().to_string(),
                    "seed" => self.seed.to_string(),
                    "episodes" => self.episodes.to_string(),
                    "workers" => self.a3c.workers.to_string(),
                    "gamma" => self.a3c.gamma.to_string(),
                    "entropy_beta" => self.a3c.entropy_beta.to_string(),
                    "segment_length" => self.a3c.segment_length.to_string(),
                    "lr" => self.a3c.lr.to_string(),
                    "grad_clip" => self.a3c.grad_clip.to_string(),
                    "nstep" => self.a3c.nstep.to_string(),
                    "inner_lr" => self.maml.inner_lr.to_string(),
                    "outer_lr" => self.maml.outer_lr.to_string(),
                    "adapt_lr" => self.maml.adapt_lr.to_string(),
                    "adapt_interval" => self.maml.interval.to_string(),
                    "max_inner_updates" => self.maml.max_inner_updates.to_string(),
                    "hvp_eps" => self.maml.hvp_eps.to_string(),
                    "inner_grad_clip" => self.maml.inner_grad_clip.to_string(),
                    "embed_dim" => self.agent.embed_dim.to_string(),
                    "input_dim" => self.agent.input_dim.to_string(),
                    "hidden" => self.agent.hidden.to_string(),
                    "adapt_hidden" => self.agent.adapt_hidden.to_string(),
                    "gtn_hidden" => g.hidden.to_string(),
                    "gtn_q_dim" => g.q_dim.to_string(),
                    "gtn_tracks" => g.tracks.to_string(),
                    "gtn_stages" => g.stages.to_string(),
                    "gtn_conv_layers" => g.conv_layers.to_string(),
                    "freeze_graph_weight" => self.agent.freeze_graph_weight.to_string(),
                    "train_houses" => self.train_houses.to_string(),
                    "val_houses" => self.val_houses.to_string(),
                    "test_houses" => self.test_houses.to_string(),
                    "views_per_house" => self.views_per_house.to_string(),
                    "cooccurrence_threshold" => self.cooccurrence_threshold.to_string(),
                    "eval_episodes" => self.eval_episodes.to_string(),
                    "eval_seed" => self.eval_seed.to_string(),
                    "eval_max_steps" => self.eval_max_steps.to_string(),
                    "eval_adapt" => self.eval_adapt.to_string(),
                    "mc_rollouts" => self.mc_rollouts.to_string(),
                    "error_kind" => match self.error_kind {
                        ErrorKind::Absolute => "absolute".to_string(),
                        ErrorKind::Squared => "squared".to_string(),
                    },
                    "checkpoint_every" => self.checkpoint_every.to_string(),
                    "output_dir" => self.output_dir.display().to_string(),
                    _ => unreachable!("every key is rendered"),
                };
                (k, v)
            })
            .collect()
    }

    /// Applies `key = value` lines over the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Every key, one per line, parseable by [`RunConfig::from_text`].
    pub fn resolved(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// The defaults as a commented table.
    pub fn defaults_table() -> String {
        let d = Self::default().entries();
        KEYS.iter()
            .zip(d)
            .map(|((k, doc), (_, v))| format!("# {doc}\n{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.a3c.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.a3c.segment_length == 0 || self.eval_max_steps == 0 {
            return bad("step caps must be positive");
        }
        if self.a3c.workers == 0 {
            return bad("workers must be positive");
        }
        if self.train_houses == 0 || self.val_houses == 0 || self.test_houses == 0 {
            return bad("every split needs at least one house per room");
        }
        if self.views_per_house == 0 {
            return bad("views_per_house must be positive");
        }
        if self.maml.hvp_eps <= 0.0 {
            return bad("hvp_eps must be positive");
        }
        if self.a3c.grad_clip <= 0.0 || self.maml.inner_grad_clip <= 0.0 {
            return bad("gradient clips must be positive");
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            a3c: self.a3c,
            maml: self.maml,
            episodes: self.episodes,
            seed: self.seed,
        }
    }

    /// Evaluation settings; adaptation applies only to variants trained with it.
    pub fn eval_config(&self, variant: Variant) -> EvalConfig {
        EvalConfig {
            episodes: self.eval_episodes,
            seed: self.eval_seed,
            max_steps: self.eval_max_steps,
            gamma: self.a3c.gamma,
            adapt: (self.eval_adapt && variant.uses_maml()).then(|| self.train_config().adapt_schedule()),
            mc_rollouts: self.mc_rollouts,
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        if self.mc_rollouts > 0 {
            GroundTruth::MonteCarlo
        } else {
            GroundTruth::ReturnToGo
        }
    }

    pub fn gtn(&self) -> GtnConfig {
        self.agent.gtn
    }
}
