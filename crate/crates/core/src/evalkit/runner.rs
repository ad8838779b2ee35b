use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EpisodeRecord;
use crate::agent::{sample_action, Agent, GraphRole, Hidden};
use crate::diffcore::{ParamSet, Tape, Tensor};
use crate::error::{Error, Result};
use crate::gridhouse::{shortest_path_length, Action, Episode, EpisodeSpec, HousePool, Observation, TEST_MAX_STEPS};
use crate::trainer::{rollout, AdaptSchedule, RolloutOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub gamma: f64,
    /// Test-time adaptation; weights reset to the given parameters every episode.
    pub adapt: Option<AdaptSchedule>,
    /// Continuations per step for Monte-Carlo value targets; 0 disables.
    pub mc_rollouts: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            seed: 0,
            max_steps: TEST_MAX_STEPS,
            gamma: 0.99,
            adapt: None,
            mc_rollouts: 0,
        }
    }
}

const SPEC_STREAM: u64 = 1;
const ACTION_STREAM: u64 = 2;
const MC_STREAM: u64 = 3;

fn stream_rng(seed: u64, episode: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(episode as u128 * (1 << 32));
    ChaCha8Rng::seed_from_u64(rng.gen())
}

/// The `episode`-th evaluation episode for `seed`. Independent of the policy,
/// so every agent evaluated with the same seed sees the same list.
pub fn episode_spec(pool: &HousePool, seed: u64, episode: usize, max_steps: usize) -> EpisodeSpec {
    pool.sample_spec(&mut stream_rng(seed, episode, SPEC_STREAM), max_steps)
}

fn optimal_length(pool: &HousePool, spec: &EpisodeSpec) -> Result<usize> {
    let layout = pool
        .layout(spec.room, spec.house_seed)
        .ok_or_else(|| Error::Contract(format!("house {} not in pool", spec.house_seed)))?;
    shortest_path_length(layout, pool.vocab(), spec.spawn, spec.target)
}

/// Runs `cfg.episodes` episodes of `agent` under `params`.
pub fn evaluate(agent: &Agent, params: &ParamSet, pool: &HousePool, cfg: &EvalConfig) -> Result<Vec<EpisodeRecord>> {
    agent.check_params(params)?;
    if cfg.mc_rollouts > 0 && cfg.adapt.is_some() {
        return Err(Error::Config("Monte-Carlo value targets require adaptation off".into()));
    }
    let opts = RolloutOptions {
        with_value: true,
        adapt: cfg.adapt,
    };
    (0..cfg.episodes)
        .map(|i| {
            let spec = episode_spec(pool, cfg.seed, i, cfg.max_steps);
            let mut rng = stream_rng(cfg.seed, i, ACTION_STREAM);
            let ro = rollout(agent, params, pool, &spec, &mut rng, opts)?;
            let mc_returns = if cfg.mc_rollouts > 0 {
                let actions: Vec<Action> = ro.buffer.steps.iter().map(|s| s.action).collect();
                let mut mc_rng = stream_rng(cfg.seed, i, MC_STREAM);
                Some(monte_carlo_returns(agent, params, pool, &spec, &actions, cfg, &mut mc_rng)?)
            } else {
                None
            };
            Ok(EpisodeRecord {
                success: ro.success,
                steps: ro.steps(),
                optimal: optimal_length(pool, &spec)?,
                values: ro.buffer.steps.iter().map(|s| s.value.unwrap_or(0.0)).collect(),
                rewards: ro.buffer.rewards(),
                mc_returns,
                spec,
            })
        })
        .collect()
}

/// Uniform-random actions on the same episode list as [`evaluate`].
pub fn evaluate_random(pool: &HousePool, cfg: &EvalConfig) -> Result<Vec<EpisodeRecord>> {
    (0..cfg.episodes)
        .map(|i| {
            let spec = episode_spec(pool, cfg.seed, i, cfg.max_steps);
            let mut rng = stream_rng(cfg.seed, i, ACTION_STREAM);
            let (mut env, _) = pool.start(&spec)?;
            let mut rewards = Vec::new();
            let mut success = false;
            while !env.is_done() {
                let r = env.step(Action::ALL[rng.gen_range(0..Action::COUNT)])?;
                success |= r.success;
                rewards.push(r.reward);
            }
            Ok(EpisodeRecord {
                success,
                steps: rewards.len(),
                optimal: optimal_length(pool, &spec)?,
                values: Vec::new(),
                rewards,
                mc_returns: None,
                spec,
            })
        })
        .collect()
}

/// LSTM state as plain tensors, so continuations can branch from it.
type HiddenValues = (Tensor, Tensor);

fn policy_continue<R: Rng>(
    agent: &Agent,
    params: &ParamSet,
    mut env: Episode,
    mut obs: Observation,
    hidden: &HiddenValues,
    gamma: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let ctx = match agent.variant.graph_role() {
        GraphRole::State | GraphRole::Action => agent.graph_context(&mut tape, &bound)?,
        _ => None,
    };
    let mut h = Hidden {
        h: tape.constant(&hidden.0),
        c: tape.constant(&hidden.1),
    };
    let (mut ret, mut discount) = (0.0, 1.0);
    while !env.is_done() {
        let out = agent.step(&mut tape, &bound, ctx.as_ref(), &obs, h, false)?;
        h = out.hidden;
        let action = sample_action(tape.value(out.probs), rng);
        let r = env.step(action)?;
        ret += discount * r.reward;
        discount *= gamma;
        obs = r.observation;
    }
    Ok(ret)
}

/// For every step of a recorded episode, the mean discounted return of
/// `cfg.mc_rollouts` policy continuations from that state.
fn monte_carlo_returns<R: Rng>(
    agent: &Agent,
    params: &ParamSet,
    pool: &HousePool,
    spec: &EpisodeSpec,
    actions: &[Action],
    cfg: &EvalConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (mut env, mut obs) = pool.start(spec)?;
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let ctx = match agent.variant.graph_role() {
        GraphRole::State | GraphRole::Action => agent.graph_context(&mut tape, &bound)?,
        _ => None,
    };
    let mut hidden = agent.zero_hidden(&mut tape);
    let mut out = Vec::with_capacity(actions.len());
    for &action in actions {
        let entering = (tape.to_tensor(hidden.h), tape.to_tensor(hidden.c));
        let mut total = 0.0;
        for _ in 0..cfg.mc_rollouts {
            total += policy_continue(agent, params, env.clone(), obs.clone(), &entering, cfg.gamma, rng)?;
        }
        out.push(total / cfg.mc_rollouts as f64);
        hidden = agent.step(&mut tape, &bound, ctx.as_ref(), &obs, hidden, false)?.hidden;
        obs = env.step(action)?.observation;
    }
    Ok(out)
}
