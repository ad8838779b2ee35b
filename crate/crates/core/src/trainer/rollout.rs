use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{entropy, sample_action, Agent, GraphRole, Hidden, ADAPTED_GROUPS};
use crate::diffcore::{Axis, ParamSet, Tape, Tensor};
use crate::error::Result;
use crate::gridhouse::{EpisodeSpec, HousePool};

use super::maml::{adaptation_loss, maml_inner_update};
use super::store::clip_global_norm;
use super::{compute_returns, policy_value_losses, A3CConfig, StepVars, TrajectoryBuffer, TrajectoryStep};

/// Inner-update cadence during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptSchedule {
    pub inner_lr: f64,
    pub interval: usize,
    pub max_updates: usize,
    /// Global-norm bound on each inner gradient over the adapted groups.
    pub grad_clip: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    /// Evaluate the critic at every step.
    pub with_value: bool,
    pub adapt: Option<AdaptSchedule>,
}

/// A window of steps that fed one inner update.
#[derive(Debug, Clone)]
pub struct ChunkRecord {
    pub start: usize,
    pub len: usize,
    /// Adapted-group weights in force during the chunk.
    pub params: ParamSet,
    /// LSTM state entering the chunk.
    pub hidden_in: (Tensor, Tensor),
    /// Factor the inner gradient was scaled by when clipped, else 1.
    pub step_scale: f64,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub spec: EpisodeSpec,
    pub buffer: TrajectoryBuffer,
    pub success: bool,
    pub chunks: Vec<ChunkRecord>,
    /// Full parameter set after the last inner update.
    pub final_params: ParamSet,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.buffer.steps.len()
    }
}

impl std::ops::Deref for Rollout {
    type Target = TrajectoryBuffer;

    fn deref(&self) -> &TrajectoryBuffer {
        &self.buffer
    }
}

/// Runs one episode, sampling actions from the policy. With an adaptation
/// schedule, every `interval` steps the adapted groups take one SGD step on
/// the learned loss of that window, up to `max_updates` times. The LSTM
/// state is carried across windows by value.
pub fn rollout<R: Rng>(
    agent: &Agent,
    params: &ParamSet,
    pool: &HousePool,
    spec: &EpisodeSpec,
    rng: &mut R,
    opts: RolloutOptions,
) -> Result<Rollout> {
    let (mut env, mut obs) = pool.start(spec)?;
    let mut current = params.clone();
    let mut buffer = TrajectoryBuffer::default();
    let mut chunks = Vec::new();
    let mut success = false;
    let mut hidden_vals = (Tensor::zeros(1, agent.config.hidden), Tensor::zeros(1, agent.config.hidden));
    let needs_graph = match agent.variant.graph_role() {
        GraphRole::None => false,
        GraphRole::State | GraphRole::Action => true,
        GraphRole::Critic => opts.with_value,
    };

    while !env.is_done() {
        let adapting = opts.adapt.filter(|a| chunks.len() < a.max_updates && a.interval > 0);
        let limit = adapting.map_or(usize::MAX, |a| a.interval);
        let mut tape = Tape::new();
        let bound = tape.bind(&current);
        let ctx = if needs_graph {
            agent.graph_context(&mut tape, &bound)?
        } else {
            None
        };
        let mut hidden = Hidden {
            h: tape.constant(&hidden_vals.0),
            c: tape.constant(&hidden_vals.1),
        };
        let start = buffer.steps.len();
        let mut window = Vec::new();
        while window.len() < limit && !env.is_done() {
            let out = agent.step(&mut tape, &bound, ctx.as_ref(), &obs, hidden, opts.with_value)?;
            hidden = out.hidden;
            window.push((out.hidden.h, out.probs));
            let probs = tape.value(out.probs).to_vec();
            let action = sample_action(&probs, rng);
            let result = env.step(action)?;
            success |= result.success;
            buffer.steps.push(TrajectoryStep {
                observation: std::mem::replace(&mut obs, result.observation),
                action,
                reward: result.reward,
                log_prob: probs[action.index()].ln(),
                entropy: entropy(&probs),
                value: out.value.map(|v| tape.scalar(v)),
                done: result.done,
            });
        }
        let hidden_in = std::mem::replace(&mut hidden_vals, (tape.to_tensor(hidden.h), tape.to_tensor(hidden.c)));
        if let Some(a) = adapting {
            if !env.is_done() && window.len() == a.interval {
                let loss = adaptation_loss(&mut tape, &bound, &window)?;
                tape.backward(loss)?;
                let mut grads = tape.grads(&bound, &current)?.subset(&ADAPTED_GROUPS);
                let norm = clip_global_norm(&mut grads, a.grad_clip);
                let step_scale = if norm > a.grad_clip { a.grad_clip / norm } else { 1.0 };
                chunks.push(ChunkRecord {
                    start,
                    len: window.len(),
                    params: current.subset(&ADAPTED_GROUPS),
                    hidden_in,
                    step_scale,
                });
                current = maml_inner_update(&current, &grads, a.inner_lr)?;
            }
        }
    }
    Ok(Rollout {
        spec: spec.clone(),
        buffer,
        success,
        chunks,
        final_params: current,
    })
}

/// Loss gradients from re-running a recorded episode under `params` with
/// the recorded observations and actions.
#[derive(Debug, Clone)]
pub struct Replay {
    pub policy_grads: ParamSet,
    pub value_grads: ParamSet,
    pub loss_pi: f64,
    pub loss_v: f64,
}

pub fn replay(agent: &Agent, params: &ParamSet, buffer: &TrajectoryBuffer, cfg: &A3CConfig) -> Result<Replay> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let ctx = agent.graph_context(&mut tape, &bound)?;
    let mut hidden = agent.zero_hidden(&mut tape);
    let mut vars = Vec::with_capacity(buffer.steps.len());
    for step in &buffer.steps {
        let out = agent.step(&mut tape, &bound, ctx.as_ref(), &step.observation, hidden, true)?;
        hidden = out.hidden;
        vars.push(step_vars(&mut tape, out.probs, step.action.index(), out.value.expect("critic requested"))?);
    }
    let rewards = buffer.rewards();
    let returns = compute_returns(&rewards, cfg.gamma, buffer.bootstrap);
    let (lp, lv) = policy_value_losses(&mut tape, &vars, &rewards, &returns, buffer.bootstrap, cfg)?;
    tape.backward(lp)?;
    let policy_grads = tape.grads(&bound, params)?;
    tape.zero_grad();
    tape.backward(lv)?;
    let value_grads = tape.grads(&bound, params)?;
    Ok(Replay {
        policy_grads,
        value_grads,
        loss_pi: tape.scalar(lp),
        loss_v: tape.scalar(lv),
    })
}

/// `log pi(a)` and the entropy of a probability row, on the tape.
pub(super) fn step_vars(tape: &mut Tape, probs: crate::diffcore::Var, action: usize, value: crate::diffcore::Var) -> Result<StepVars> {
    let logp = tape.log(probs);
    let log_prob = tape.slice(logp, Axis::Cols, action, 1)?;
    let plogp = tape.mul(probs, logp)?;
    let s = tape.sum(plogp);
    let neg = tape.constant_scalar(-1.0);
    let entropy = tape.mul(s, neg)?;
    Ok(StepVars {
        log_prob,
        entropy,
        value,
    })
}
