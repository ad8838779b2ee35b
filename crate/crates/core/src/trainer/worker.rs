use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{sample_action, Agent};
use crate::diffcore::{checkpoint, AdamConfig, AdamState, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::gridhouse::{HousePool, TRAIN_MAX_STEPS};

use super::maml::{meta_gradient_adapt_params, MamlConfig};
use super::rollout::{replay, rollout, step_vars, AdaptSchedule, RolloutOptions};
use super::store::{LearningRates, OptimizerKind, SharedParamStore};
use super::{compute_returns, policy_value_losses, A3CConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub a3c: A3CConfig,
    pub maml: MamlConfig,
    /// Global episode budget.
    pub episodes: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            a3c: A3CConfig::default(),
            maml: MamlConfig::default(),
            episodes: 50_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn learning_rates(&self, agent: &Agent) -> LearningRates {
        if agent.variant.uses_maml() {
            LearningRates {
                main: self.maml.outer_lr,
                adapt: self.maml.adapt_lr,
            }
        } else {
            LearningRates::uniform(self.a3c.lr)
        }
    }

    pub fn adapt_schedule(&self) -> AdaptSchedule {
        AdaptSchedule {
            inner_lr: self.maml.inner_lr,
            interval: self.maml.interval,
            max_updates: self.maml.max_inner_updates,
            grad_clip: self.maml.inner_grad_clip,
        }
    }

    /// A store initialised with `params` and this run's optimizer settings.
    pub fn new_store(&self, agent: &Agent, params: ParamSet) -> SharedParamStore {
        SharedParamStore::new(
            params,
            OptimizerKind::Adam(AdamConfig::default()),
            self.learning_rates(agent),
            self.a3c.grad_clip,
        )
    }

    /// A store continuing from `ck` with this run's optimizer settings.
    pub fn resume_store(&self, agent: &Agent, ck: TrainCheckpoint) -> SharedParamStore {
        SharedParamStore::resume(
            ck.params,
            ck.adam,
            ck.episodes,
            OptimizerKind::Adam(AdamConfig::default()),
            self.learning_rates(agent),
            self.a3c.grad_clip,
        )
    }
}

pub const PROGRESS_HEADER: &str = "episode,worker,reward,loss_pi,loss_v,entropy,steps,success";

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRow {
    pub episode: u64,
    pub worker: usize,
    pub reward: f64,
    pub loss_pi: f64,
    pub loss_v: f64,
    pub entropy: f64,
    pub steps: usize,
    pub success: bool,
}

impl ProgressRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.episode,
            self.worker,
            self.reward,
            self.loss_pi,
            self.loss_v,
            self.entropy,
            self.steps,
            u8::from(self.success)
        )
    }
}

/// Gradient and statistics from one training episode.
#[derive(Debug, Clone)]
pub struct EpisodeUpdate {
    pub grads: ParamSet,
    pub reward: f64,
    pub loss_pi: f64,
    pub loss_v: f64,
    pub entropy: f64,
    pub steps: usize,
    pub success: bool,
}

/// Samples an episode from `pool`, plays it with `params`, and returns the
/// loss gradient. Frozen parameters get zero gradient.
pub fn run_training_episode<R: Rng>(
    agent: &Agent,
    params: &ParamSet,
    pool: &HousePool,
    rng: &mut R,
    cfg: &TrainConfig,
) -> Result<EpisodeUpdate> {
    let max_steps = cfg.a3c.segment_length.clamp(1, TRAIN_MAX_STEPS);
    let spec = pool.sample_spec(rng, max_steps);
    let mut update = if agent.variant.uses_maml() {
        maml_episode(agent, params, pool, &spec, rng, cfg)?
    } else {
        a3c_episode(agent, params, pool, &spec, rng, &cfg.a3c)?
    };
    for name in agent.frozen_params() {
        if let Some(g) = update.grads.get_mut(&name) {
            g.data_mut().fill(0.0);
        }
    }
    Ok(update)
}

/// Samples and differentiates on a single tape.
fn a3c_episode<R: Rng>(
    agent: &Agent,
    params: &ParamSet,
    pool: &HousePool,
    spec: &crate::gridhouse::EpisodeSpec,
    rng: &mut R,
    cfg: &A3CConfig,
) -> Result<EpisodeUpdate> {
    let (mut env, mut obs) = pool.start(spec)?;
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let ctx = agent.graph_context(&mut tape, &bound)?;
    let mut hidden = agent.zero_hidden(&mut tape);
    let mut vars = Vec::new();
    let mut rewards = Vec::new();
    let mut entropy_sum = 0.0;
    let mut success = false;
    while !env.is_done() {
        let out = agent.step(&mut tape, &bound, ctx.as_ref(), &obs, hidden, true)?;
        hidden = out.hidden;
        let probs = tape.value(out.probs).to_vec();
        let action = sample_action(&probs, rng);
        let sv = step_vars(&mut tape, out.probs, action.index(), out.value.expect("critic requested"))?;
        entropy_sum += tape.scalar(sv.entropy);
        vars.push(sv);
        let result = env.step(action)?;
        rewards.push(result.reward);
        success |= result.success;
        obs = result.observation;
    }
    let returns = compute_returns(&rewards, cfg.gamma, 0.0);
    let (lp, lv) = policy_value_losses(&mut tape, &vars, &rewards, &returns, 0.0, cfg)?;
    let total = tape.add(lp, lv)?;
    tape.backward(total)?;
    Ok(EpisodeUpdate {
        grads: tape.grads(&bound, params)?,
        reward: rewards.iter().sum(),
        loss_pi: tape.scalar(lp),
        loss_v: tape.scalar(lv),
        entropy: entropy_sum / rewards.len() as f64,
        steps: rewards.len(),
        success,
    })
}

/// Adapted rollout, full-trajectory replay at the adapted weights, and the
/// first-order outer gradient applied to the pre-adaptation weights.
fn maml_episode<R: Rng>(
    agent: &Agent,
    params: &ParamSet,
    pool: &HousePool,
    spec: &crate::gridhouse::EpisodeSpec,
    rng: &mut R,
    cfg: &TrainConfig,
) -> Result<EpisodeUpdate> {
    let opts = RolloutOptions {
        with_value: false,
        adapt: Some(cfg.adapt_schedule()),
    };
    let ro = rollout(agent, params, pool, spec, rng, opts)?;
    let rep = replay(agent, &ro.final_params, &ro.buffer, &cfg.a3c)?;
    let phi = meta_gradient_adapt_params(agent, params, &ro, &rep.policy_grads, &cfg.maml)?;
    let mut grads = rep.policy_grads.clone();
    grads.add_assign(&rep.value_grads)?;
    grads.overlay(&phi)?;
    let steps = ro.steps();
    Ok(EpisodeUpdate {
        grads,
        reward: ro.total_reward(),
        loss_pi: rep.loss_pi,
        loss_v: rep.loss_v,
        entropy: ro.buffer.steps.iter().map(|s| s.entropy).sum::<f64>() / steps as f64,
        steps,
        success: ro.success,
    })
}

fn worker_seed(seed: u64, worker: usize, start: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (worker as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
        ^ start.wrapping_mul(0x94d0_49bb_1331_11eb)
}

/// Runs `cfg.a3c.workers` workers against `store` until the episode budget
/// is spent or `stop` is raised. `on_progress` runs on the calling thread
/// after every applied update, in application order.
pub fn train<F>(
    agent: &Agent,
    pool: &HousePool,
    store: &SharedParamStore,
    cfg: &TrainConfig,
    stop: &AtomicBool,
    mut on_progress: F,
) -> Result<()>
where
    F: FnMut(&ProgressRow, &SharedParamStore) -> Result<()>,
{
    let workers = cfg.a3c.workers.max(1);
    let start = store.episodes();
    let (tx, rx) = mpsc::channel::<Result<ProgressRow>>();
    std::thread::scope(|scope| {
        for worker in 0..workers {
            let tx = tx.clone();
            scope.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(worker_seed(cfg.seed, worker, start));
                while !stop.load(Ordering::SeqCst) {
                    let Some((_, params)) = store.begin_episode(cfg.episodes) else {
                        break;
                    };
                    let row = run_training_episode(agent, &params, pool, &mut rng, cfg).and_then(|u| {
                        let episode = store.apply_gradients(u.grads)?;
                        Ok(ProgressRow {
                            episode,
                            worker,
                            reward: u.reward,
                            loss_pi: u.loss_pi,
                            loss_v: u.loss_v,
                            entropy: u.entropy,
                            steps: u.steps,
                            success: u.success,
                        })
                    });
                    let failed = row.is_err();
                    if tx.send(row).is_err() || failed {
                        stop.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut first_err = None;
        for row in rx {
            let handled = row.and_then(|r| on_progress(&r, store));
            if let Err(e) = handled {
                stop.store(true, Ordering::SeqCst);
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    })
}

/// Parameters, optimizer moments and counters for resuming a run.
#[derive(Debug, Clone)]
pub struct TrainCheckpoint {
    pub params: ParamSet,
    pub adam: Option<AdamState>,
    pub episodes: u64,
    pub metadata: BTreeMap<String, String>,
}

const OPTIMIZER_DIR: &str = "optimizer";

/// Writes `dir/` (parameters) and `dir/optimizer/` (Adam moments). The
/// variant and episode count go into the manifest metadata.
pub fn save_checkpoint(
    dir: &Path,
    agent: &Agent,
    store: &SharedParamStore,
    extra: &BTreeMap<String, String>,
) -> Result<String> {
    let snap = store.snapshot();
    let mut meta = extra.clone();
    meta.insert("variant".into(), agent.variant.label().into());
    meta.insert("episodes".into(), snap.episodes.to_string());
    checkpoint::save(dir, &snap.params, &meta)?;
    if let Some(adam) = &snap.adam {
        let mut moments = ParamSet::new();
        for (prefix, set) in [("m.", &adam.m), ("v.", &adam.v)] {
            for (name, t) in set.iter() {
                moments.insert(format!("{prefix}{name}"), t.clone())?;
            }
        }
        let mut ometa = BTreeMap::new();
        ometa.insert("t".into(), adam.t.to_string());
        checkpoint::save(&dir.join(OPTIMIZER_DIR), &moments, &ometa)?;
    }
    Ok(snap.params.digest())
}

/// Loads a checkpoint for `agent`, refusing one written for another variant
/// or architecture.
pub fn load_checkpoint(dir: &Path, agent: &Agent) -> Result<TrainCheckpoint> {
    let (params, manifest) = checkpoint::load(dir)?;
    let bad = |reason: String| Error::Checkpoint {
        path: dir.to_path_buf(),
        reason,
    };
    match manifest.metadata.get("variant") {
        Some(v) if v == agent.variant.label() => {}
        Some(v) => return Err(bad(format!("written for variant {v}, not {}", agent.variant))),
        None => return Err(bad("manifest has no variant".into())),
    }
    agent.check_params(&params).map_err(|e| bad(e.to_string()))?;
    let episodes = manifest
        .metadata
        .get("episodes")
        .map(|s| s.parse::<u64>())
        .transpose()
        .map_err(|e| bad(format!("bad episode count: {e}")))?
        .unwrap_or(0);
    let odir = dir.join(OPTIMIZER_DIR);
    let adam = if odir.join(checkpoint::MANIFEST_FILE).exists() {
        let (moments, om) = checkpoint::load(&odir)?;
        let split = |prefix: &str| -> Result<ParamSet> {
            let mut out = ParamSet::new();
            for (name, _) in params.iter() {
                out.insert(name, moments.require(&format!("{prefix}{name}"))?.clone())?;
            }
            Ok(out)
        };
        let t = om
            .metadata
            .get("t")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("optimizer manifest has no step count".into()))?;
        Some(AdamState {
            config: AdamConfig::default(),
            m: split("m.")?,
            v: split("v.")?,
            t,
        })
    } else {
        None
    };
    Ok(TrainCheckpoint {
        params,
        adam,
        episodes,
        metadata: manifest.metadata,
    })
}
