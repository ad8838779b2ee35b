//! Browser bindings: step through a house by hand, explore how channel
//! logits reshape the prior graph, and turn a reward sequence into returns.
//!
//! Everything behind the bindings is plain Rust in [`house`] and [`graph`]
//! so it can be tested natively.

pub mod graph;
pub mod house;

use gve_core::evalkit;
use gve_core::gridhouse::Action;
use wasm_bindgen::prelude::*;

use crate::graph::GraphExplorer;
use crate::house::HouseSession;

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

/// One hand-driven episode.
#[wasm_bindgen]
pub struct House {
    inner: HouseSession,
}

#[wasm_bindgen]
impl House {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<House, JsError> {
        Ok(House {
            inner: HouseSession::new(u64::from(seed))?,
        })
    }

    /// Action names in index order.
    pub fn actions() -> Vec<String> {
        Action::ALL.iter().map(|a| format!("{a:?}")).collect()
    }

    /// Applies the action at `index` in [`House::actions`] and returns the reward.
    pub fn step(&mut self, index: usize) -> Result<f64, JsError> {
        let action = Action::from_index(index).ok_or_else(|| JsError::new("no such action"))?;
        Ok(self.inner.step(action)?)
    }

    /// Layout, agent, target, rewards and return-to-go as JSON.
    pub fn view(&self) -> Result<String, JsError> {
        to_json(&self.inner.view())
    }

    pub fn ascii(&self) -> String {
        self.inner.ascii()
    }
}

/// Prior graph harvested from training houses.
#[wasm_bindgen]
pub struct Graph {
    inner: GraphExplorer,
}

#[wasm_bindgen]
impl Graph {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Graph {
        Graph {
            inner: GraphExplorer::harvest(u64::from(seed)),
        }
    }

    pub fn channels(&self) -> Vec<String> {
        self.inner.channels().to_vec()
    }

    pub fn objects(&self) -> Vec<String> {
        self.inner.objects()
    }

    pub fn density(&self) -> f64 {
        self.inner.density()
    }

    /// Channel weights and `object`'s strongest neighbours under the mix, as JSON.
    pub fn mix(&self, logits: Vec<f64>, object: &str, top: usize) -> Result<String, JsError> {
        to_json(&self.inner.mix(&logits, object, top)?)
    }
}

/// Discounted return-to-go of each step of `rewards`.
#[wasm_bindgen(js_name = returnToGo)]
pub fn return_to_go(rewards: Vec<f64>, gamma: f64) -> Vec<f64> {
    evalkit::return_to_go(&rewards, gamma)
}
