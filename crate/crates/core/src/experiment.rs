//! Vocabulary, house pools, prior graph, training and evaluation wired
//! together from one [`RunConfig`].

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, Variant};
use crate::config::RunConfig;
use crate::diffcore::ParamSet;
use crate::error::Result;
use crate::evalkit::{evaluate, EpisodeRecord};
use crate::gridhouse::{HousePool, Split};
use crate::knowgraph::{build_from_cooccurrence, randomize_edges, AdjacencyTensor, ObjectVocabulary};
use crate::trainer::{train, ProgressRow, SharedParamStore};

const HARVEST_SALT: u64 = 0x0068_6172_7665_7374;
const RANDOM_GRAPH_SALT: u64 = 0x7261_6e64_6f6d;

/// Everything a run needs before training starts.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub vocab: Arc<ObjectVocabulary>,
    pub train: HousePool,
    pub val: HousePool,
    pub test: HousePool,
    /// Co-occurrence graph harvested from the training houses.
    pub graph: Arc<AdjacencyTensor>,
}

impl Experiment {
    pub fn prepare(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let vocab = Arc::new(ObjectVocabulary::standard());
        let train = HousePool::new(Arc::clone(&vocab), Split::Train, cfg.train_houses);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ HARVEST_SALT);
        let views = train.harvest_views(cfg.views_per_house, &mut rng);
        let graph = Arc::new(build_from_cooccurrence(views, &vocab, cfg.cooccurrence_threshold));
        Ok(Self {
            val: HousePool::new(Arc::clone(&vocab), Split::Val, cfg.val_houses),
            test: HousePool::new(Arc::clone(&vocab), Split::Test, cfg.test_houses),
            vocab,
            train,
            graph,
        })
    }

    pub fn pool(&self, split: Split) -> &HousePool {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// The graph a variant is built with: the harvested one, or a
    /// density-matched random replacement.
    pub fn graph_for(&self, variant: Variant, seed: u64) -> Option<Arc<AdjacencyTensor>> {
        if !variant.uses_graph() {
            None
        } else if variant.random_graph() {
            Some(Arc::new(randomize_edges(&self.graph, &self.vocab, seed ^ RANDOM_GRAPH_SALT)))
        } else {
            Some(Arc::clone(&self.graph))
        }
    }

    pub fn agent(&self, variant: Variant, cfg: &RunConfig) -> Result<Agent> {
        Agent::new(variant, cfg.agent, Arc::clone(&self.vocab), self.graph_for(variant, cfg.seed))
    }

    /// A fresh store for `agent` seeded from `cfg.seed`.
    pub fn new_store(&self, agent: &Agent, cfg: &RunConfig) -> SharedParamStore {
        cfg.train_config().new_store(agent, agent.init_params(cfg.seed))
    }

    /// Trains until the store's episode count reaches `cfg.episodes`.
    pub fn train<F>(&self, agent: &Agent, store: &SharedParamStore, cfg: &RunConfig, stop: &AtomicBool, on_progress: F) -> Result<()>
    where
        F: FnMut(&ProgressRow, &SharedParamStore) -> Result<()>,
    {
        train(agent, &self.train, store, &cfg.train_config(), stop, on_progress)
    }

    pub fn evaluate(&self, agent: &Agent, params: &ParamSet, cfg: &RunConfig, split: Split) -> Result<Vec<EpisodeRecord>> {
        evaluate(agent, params, self.pool(split), &cfg.eval_config(agent.variant))
    }

    /// Trains `variant` from scratch without progress reporting and returns
    /// the final parameters.
    pub fn train_variant(&self, variant: Variant, cfg: &RunConfig) -> Result<(Agent, ParamSet)> {
        let agent = self.agent(variant, cfg)?;
        let store = self.new_store(&agent, cfg);
        self.train(&agent, &store, cfg, &AtomicBool::new(false), |_, _| Ok(()))?;
        Ok((agent, store.params()))
    }
}
