use serde::{Deserialize, Serialize};

use crate::agent::{self, Agent, ADAPT, ADAPTED_GROUPS};
use crate::diffcore::{sgd_step, Axis, Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::rollout::{ChunkRecord, Rollout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MamlConfig {
    /// `alpha`, inner SGD step.
    pub inner_lr: f64,
    /// `beta1`, outer step on the policy weights.
    pub outer_lr: f64,
    /// `beta2`, outer step on the adaptation loss weights.
    pub adapt_lr: f64,
    /// Steps between inner updates.
    pub interval: usize,
    pub max_inner_updates: usize,
    /// Finite-difference radius for the adaptation-loss meta-gradient.
    pub hvp_eps: f64,
    /// Global-norm bound on each inner gradient.
    pub inner_grad_clip: f64,
}

impl Default for MamlConfig {
    fn default() -> Self {
        Self {
            inner_lr: 1e-2,
            outer_lr: 7e-4,
            adapt_lr: 7e-4,
            interval: 6,
            max_inner_updates: 4,
            hvp_eps: 1e-4,
            inner_grad_clip: 1.0,
        }
    }
}

/// Learned self-supervised loss over a window of `(h_t, pi_t)` rows:
/// mean pool, relu layer, linear output, squared.
pub fn adaptation_loss(tape: &mut Tape, bound: &Bound, window: &[(Var, Var)]) -> Result<Var> {
    if window.is_empty() {
        return Err(Error::Contract("adaptation window is empty".into()));
    }
    let rows = window
        .iter()
        .map(|&(h, p)| tape.concat(&[h, p], Axis::Cols))
        .collect::<Result<Vec<_>>>()?;
    let stacked = tape.concat(&rows, Axis::Rows)?;
    let pool = tape.constant(&Tensor::filled(1, window.len(), 1.0 / window.len() as f64));
    let pooled = tape.matmul(pool, stacked)?;
    let z = tape.matmul(pooled, bound.get(agent::ADAPT_L1_W)?)?;
    let z = tape.add(z, bound.get(agent::ADAPT_L1_B)?)?;
    let z = tape.relu(z);
    let out = tape.matmul(z, bound.get(agent::ADAPT_OUT_W)?)?;
    let out = tape.add(out, bound.get(agent::ADAPT_OUT_B)?)?;
    tape.mul(out, out)
}

/// `theta_i = theta - alpha * g` over the adapted groups; other entries of
/// `params` are copied unchanged.
pub fn maml_inner_update(params: &ParamSet, grads: &ParamSet, alpha: f64) -> Result<ParamSet> {
    let adapted = params.subset(&ADAPTED_GROUPS);
    let g = grads.subset(&ADAPTED_GROUPS);
    let stepped = sgd_step(&adapted, &g, alpha)?;
    let mut out = params.clone();
    out.overlay(&stepped)?;
    Ok(out)
}

/// Recomputes one chunk's adaptation loss under `params` (teacher-forced
/// observations) and returns its gradient over every parameter.
pub fn adaptation_loss_grads(agent: &Agent, params: &ParamSet, rollout: &Rollout, chunk: &ChunkRecord) -> Result<ParamSet> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let ctx = if agent.variant.graph_role() == crate::agent::GraphRole::Critic {
        None
    } else {
        agent.graph_context(&mut tape, &bound)?
    };
    let mut hidden = crate::agent::Hidden {
        h: tape.constant(&chunk.hidden_in.0),
        c: tape.constant(&chunk.hidden_in.1),
    };
    let mut window = Vec::with_capacity(chunk.len);
    for step in &rollout.steps[chunk.start..chunk.start + chunk.len] {
        let out = agent.step(&mut tape, &bound, ctx.as_ref(), &step.observation, hidden, false)?;
        hidden = out.hidden;
        window.push((out.hidden.h, out.probs));
    }
    let loss = adaptation_loss(&mut tape, &bound, &window)?;
    tape.backward(loss)?;
    tape.grads(&bound, params)
}

/// First-order meta-gradient of the policy loss with respect to the
/// adaptation-loss weights.
///
/// Each inner step `theta_{j+1} = theta_j - alpha grad L_adapt(theta_j)` makes
/// `d L_pi / d phi = -alpha (d^2 L_adapt / d phi d theta) v`, with `v` the
/// policy-loss gradient at the adapted weights. The mixed second derivative
/// along `v` is taken by central differences of `grad_phi L_adapt`. A clipped
/// inner step contributes in proportion to its clip factor; the derivative of
/// the clip itself is ignored.
pub fn meta_gradient_adapt_params(
    agent: &Agent,
    base: &ParamSet,
    rollout: &Rollout,
    policy_grad: &ParamSet,
    cfg: &MamlConfig,
) -> Result<ParamSet> {
    let mut total = base.subset(&[ADAPT]).zeros_like();
    let v = policy_grad.subset(&ADAPTED_GROUPS);
    let norm = v.global_norm();
    if norm == 0.0 || rollout.chunks.is_empty() {
        return Ok(total);
    }
    let mut direction = v.clone();
    direction.scale(1.0 / norm);
    for chunk in &rollout.chunks {
        let at = |sign: f64| -> Result<ParamSet> {
            let mut p = base.clone();
            p.overlay(&chunk.params)?;
            let shifted = chunk.params.scaled_add(&direction, sign * cfg.hvp_eps)?;
            p.overlay(&shifted)?;
            Ok(adaptation_loss_grads(agent, &p, rollout, chunk)?.subset(&[ADAPT]))
        };
        let plus = at(1.0)?;
        let minus = at(-1.0)?;
        let scale = -cfg.inner_lr * chunk.step_scale * norm / (2.0 * cfg.hvp_eps);
        let diff = plus.zip_map(&minus, |a, b| scale * (a - b))?;
        total.add_assign(&diff)?;
    }
    Ok(total)
}
