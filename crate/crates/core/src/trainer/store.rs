use std::sync::{Mutex, MutexGuard};

use crate::diffcore::{AdamConfig, AdamState, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam(AdamConfig),
}

/// Learning rate for `adapt.*` parameters and for everything else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub main: f64,
    pub adapt: f64,
}

impl LearningRates {
    pub fn uniform(lr: f64) -> Self {
        Self { main: lr, adapt: lr }
    }

    pub fn for_param(&self, name: &str) -> f64 {
        if name.starts_with(crate::agent::ADAPT) {
            self.adapt
        } else {
            self.main
        }
    }
}

/// Scales `grads` so its global L2 norm is at most `clip`. Returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut ParamSet, clip: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip && norm > 0.0 {
        grads.scale(clip / norm);
    }
    norm
}

#[derive(Debug)]
struct State {
    params: ParamSet,
    adam: Option<AdamState>,
    claimed: u64,
    episodes: u64,
    updates: u64,
}

/// A consistent copy of the store.
#[derive(Debug, Clone)]
pub struct StoreSnapshot {
    pub params: ParamSet,
    pub adam: Option<AdamState>,
    pub episodes: u64,
}

/// Canonical parameters, optimizer state and episode counters behind one lock.
#[derive(Debug)]
pub struct SharedParamStore {
    state: Mutex<State>,
    optimizer: OptimizerKind,
    rates: LearningRates,
    clip: f64,
}

impl SharedParamStore {
    pub fn new(params: ParamSet, optimizer: OptimizerKind, rates: LearningRates, clip: f64) -> Self {
        let adam = match optimizer {
            OptimizerKind::Adam(cfg) => Some(AdamState::new(&params, cfg)),
            OptimizerKind::Sgd => None,
        };
        Self::resume(params, adam, 0, optimizer, rates, clip)
    }

    /// Continues from saved parameters, optimizer state and episode count.
    pub fn resume(
        params: ParamSet,
        adam: Option<AdamState>,
        episodes: u64,
        optimizer: OptimizerKind,
        rates: LearningRates,
        clip: f64,
    ) -> Self {
        let adam = match optimizer {
            OptimizerKind::Adam(cfg) => Some(adam.unwrap_or_else(|| AdamState::new(&params, cfg))),
            OptimizerKind::Sgd => None,
        };
        Self {
            state: Mutex::new(State {
                params,
                adam,
                claimed: episodes,
                episodes,
                updates: 0,
            }),
            optimizer,
            rates,
            clip,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        // A worker that panicked mid-apply cannot have left a partial update:
        // the optimizer writes only after all congruence checks pass.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn optimizer(&self) -> OptimizerKind {
        self.optimizer
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        let s = self.lock();
        StoreSnapshot {
            params: s.params.clone(),
            adam: s.adam.clone(),
            episodes: s.episodes,
        }
    }

    pub fn params(&self) -> ParamSet {
        self.lock().params.clone()
    }

    pub fn episodes(&self) -> u64 {
        self.lock().episodes
    }

    pub fn updates(&self) -> u64 {
        self.lock().updates
    }

    /// Reserves the next episode index below `budget` and returns it with a
    /// parameter copy, or `None` once the budget is spent.
    pub fn begin_episode(&self, budget: u64) -> Option<(u64, ParamSet)> {
        let mut s = self.lock();
        if s.claimed >= budget {
            return None;
        }
        s.claimed += 1;
        Some((s.claimed - 1, s.params.clone()))
    }

    /// Global-norm clip, then one optimizer step. Atomic with respect to
    /// snapshots. Returns the episode count after the update.
    pub fn apply_gradients(&self, mut grads: ParamSet) -> Result<u64> {
        if !grads.is_finite() {
            return Err(Error::Contract("non-finite gradient".into()));
        }
        clip_global_norm(&mut grads, self.clip);
        let mut s = self.lock();
        let state = &mut *s;
        match (&self.optimizer, state.adam.as_mut()) {
            (OptimizerKind::Adam(_), Some(adam)) => {
                let rates = self.rates;
                adam.apply(&mut state.params, &grads, |n| rates.for_param(n))?;
            }
            _ => {
                let rates = self.rates;
                let mut step = grads.clone();
                for (name, t) in step.iter_mut() {
                    let lr = rates.for_param(name);
                    t.data_mut().iter_mut().for_each(|g| *g *= -lr);
                }
                state.params = state.params.scaled_add(&step, 1.0)?;
            }
        }
        state.episodes += 1;
        state.updates += 1;
        Ok(state.episodes)
    }
}
