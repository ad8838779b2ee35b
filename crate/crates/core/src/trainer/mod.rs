//! Actor-critic training with asynchronous workers and learned-loss
//! adaptation.

mod maml;
mod rollout;
mod store;
mod worker;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};
use crate::gridhouse::{Action, Observation};

pub use maml::{adaptation_loss, adaptation_loss_grads, maml_inner_update, meta_gradient_adapt_params, MamlConfig};
pub use rollout::{replay, rollout, AdaptSchedule, ChunkRecord, Replay, Rollout, RolloutOptions};
pub use store::{clip_global_norm, LearningRates, OptimizerKind, SharedParamStore, StoreSnapshot};
pub use worker::{
    load_checkpoint, run_training_episode, save_checkpoint, train, EpisodeUpdate, ProgressRow, TrainCheckpoint,
    TrainConfig, PROGRESS_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A3CConfig {
    pub gamma: f64,
    pub entropy_beta: f64,
    pub segment_length: usize,
    pub workers: usize,
    pub lr: f64,
    pub grad_clip: f64,
    /// Advantage `G_t - V_t` instead of the one-step TD error.
    pub nstep: bool,
}

impl Default for A3CConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            entropy_beta: 0.01,
            segment_length: 50,
            workers: 4,
            lr: 7e-4,
            grad_clip: 10.0,
            nstep: false,
        }
    }
}

/// One recorded environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
    pub log_prob: f64,
    pub entropy: f64,
    pub value: Option<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryBuffer {
    pub steps: Vec<TrajectoryStep>,
    /// Value after the last step; 0 when the segment ended the episode.
    pub bootstrap: f64,
}

impl TrajectoryBuffer {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// `G_t = r_t + gamma G_{t+1}`, seeded with `bootstrap` after the last step.
pub fn compute_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = bootstrap;
    for (t, r) in rewards.iter().enumerate().rev() {
        g = r + gamma * g;
        out[t] = g;
    }
    out
}

/// Per-step tape handles for the loss.
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    pub log_prob: Var,
    pub entropy: Var,
    pub value: Var,
}

/// Detached advantages from recorded values.
pub fn advantages(rewards: &[f64], values: &[f64], returns: &[f64], bootstrap: f64, cfg: &A3CConfig) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            if cfg.nstep {
                returns[t] - values[t]
            } else {
                let next = values.get(t + 1).copied().unwrap_or(bootstrap);
                rewards[t] + cfg.gamma * next - values[t]
            }
        })
        .collect()
}

/// `(L_pi, L_V)` on the tape.
///
/// `L_pi = sum(-log pi(a_t) A_t - beta H_t)` with `A_t` a constant, so the
/// entropy term is a bonus. `L_V = sum(0.5 (V_t - G_t)^2)`.
pub fn policy_value_losses(
    tape: &mut Tape,
    steps: &[StepVars],
    rewards: &[f64],
    returns: &[f64],
    bootstrap: f64,
    cfg: &A3CConfig,
) -> Result<(Var, Var)> {
    if steps.len() != rewards.len() || returns.len() != rewards.len() {
        return Err(Error::Contract(format!(
            "{} steps, {} rewards, {} returns",
            steps.len(),
            rewards.len(),
            returns.len()
        )));
    }
    let values: Vec<f64> = steps.iter().map(|s| tape.scalar(s.value)).collect();
    let adv = advantages(rewards, &values, returns, bootstrap, cfg);
    let mut lp = tape.constant_scalar(0.0);
    let mut lv = tape.constant_scalar(0.0);
    let neg_beta = tape.constant_scalar(-cfg.entropy_beta);
    let half = tape.constant_scalar(0.5);
    for (t, s) in steps.iter().enumerate() {
        let a = tape.constant_scalar(-adv[t]);
        let pg = tape.mul(s.log_prob, a)?;
        let bonus = tape.mul(s.entropy, neg_beta)?;
        lp = tape.add(lp, pg)?;
        lp = tape.add(lp, bonus)?;
        let target = tape.constant_scalar(-returns[t]);
        let diff = tape.add(s.value, target)?;
        let sq = tape.mul(diff, diff)?;
        let sq = tape.mul(sq, half)?;
        lv = tape.add(lv, sq)?;
    }
    Ok((lp, lv))
}

/// Scalar `(L_pi, L_V)` for a recorded buffer.
pub fn a3c_losses(buffer: &TrajectoryBuffer, returns: &[f64], cfg: &A3CConfig) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let mut vars = Vec::with_capacity(buffer.steps.len());
    for (t, s) in buffer.steps.iter().enumerate() {
        let value = s
            .value
            .ok_or_else(|| Error::Contract(format!("step {t} has no value estimate")))?;
        vars.push(StepVars {
            log_prob: tape.constant_scalar(s.log_prob),
            entropy: tape.constant_scalar(s.entropy),
            value: tape.constant_scalar(value),
        });
    }
    let (lp, lv) = policy_value_losses(&mut tape, &vars, &buffer.rewards(), returns, buffer.bootstrap, cfg)?;
    Ok((tape.scalar(lp), tape.scalar(lv)))
}

#[cfg(test)]
mod tests;
