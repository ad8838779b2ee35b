//! Recurrent actor-critic policy with optional graph-augmented critic.
//!
//! The backbone maps `(observation, target embedding)` through a relu input
//! layer and an LSTM to the state encoding `F`. Depending on the variant the
//! graph vector `Q` reaches the critic only (GVE), both heads (SS) or the
//! actor only (Action).

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Axis, Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gridhouse::{Action, Observation};
use crate::gtn::{self, GtnConfig};
use crate::knowgraph::{self, AdjacencyTensor, ObjectVocabulary, EMBEDDING_PARAM, OBS_SLICE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    A3C,
    A3CGraphSS,
    A3CMaml,
    GraphMamlSS,
    GraphMamlAction,
    Gve,
    GveMaml,
    GveLG,
    GveRandomGraph,
}

/// Which heads consume the graph vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphRole {
    None,
    /// Actor and critic both see `[F | Q]`.
    State,
    /// Actor sees `[F | Q]`, critic sees `F`.
    Action,
    /// Critic sees `[F | Q]`, actor sees `F`.
    Critic,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::A3C,
        Variant::A3CGraphSS,
        Variant::A3CMaml,
        Variant::GraphMamlSS,
        Variant::GraphMamlAction,
        Variant::Gve,
        Variant::GveMaml,
        Variant::GveLG,
        Variant::GveRandomGraph,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::A3C => "A3C",
            Variant::A3CGraphSS => "A3C_Graph_SS",
            Variant::A3CMaml => "A3C_MAML",
            Variant::GraphMamlSS => "Graph_MAML_SS",
            Variant::GraphMamlAction => "Graph_MAML_Action",
            Variant::Gve => "GVE",
            Variant::GveMaml => "GVE_MAML",
            Variant::GveLG => "GVE_LG",
            Variant::GveRandomGraph => "GVE_RandomGraph",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.label().eq_ignore_ascii_case(s))
    }

    pub fn graph_role(self) -> GraphRole {
        match self {
            Variant::A3C | Variant::A3CMaml => GraphRole::None,
            Variant::A3CGraphSS | Variant::GraphMamlSS => GraphRole::State,
            Variant::GraphMamlAction => GraphRole::Action,
            Variant::Gve | Variant::GveMaml | Variant::GveLG | Variant::GveRandomGraph => GraphRole::Critic,
        }
    }

    pub fn uses_graph(self) -> bool {
        self.graph_role() != GraphRole::None
    }

    pub fn uses_maml(self) -> bool {
        !matches!(self, Variant::A3C | Variant::A3CGraphSS | Variant::Gve)
    }

    /// Graph nodes carry embeddings only.
    pub fn language_only(self) -> bool {
        self == Variant::GveLG
    }

    pub fn random_graph(self) -> bool {
        self == Variant::GveRandomGraph
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub const EMBED: &str = EMBEDDING_PARAM;
pub const IN_W: &str = "backbone.in.w";
pub const IN_B: &str = "backbone.in.b";
pub const LSTM_W_IH: &str = "backbone.lstm.w_ih";
pub const LSTM_W_HH: &str = "backbone.lstm.w_hh";
pub const LSTM_B: &str = "backbone.lstm.b";
pub const ACTOR_W: &str = "actor.w";
pub const ACTOR_B: &str = "actor.b";
/// `W2`: critic weights on the state encoding.
pub const CRITIC_W: &str = "critic.w";
/// `W1`: critic weights on the graph vector.
pub const CRITIC_W_GRAPH: &str = "critic.w_graph";
pub const CRITIC_B: &str = "critic.b";
pub const ADAPT_L1_W: &str = "adapt.l1.w";
pub const ADAPT_L1_B: &str = "adapt.l1.b";
pub const ADAPT_OUT_W: &str = "adapt.out.w";
pub const ADAPT_OUT_B: &str = "adapt.out.b";

/// Parameter groups. `backbone` and `actor` are the weights adapted by the
/// inner loop.
pub const BACKBONE: &str = "backbone.";
pub const ACTOR: &str = "actor.";
pub const CRITIC: &str = "critic.";
pub const GTN: &str = "gtn.";
pub const ADAPT: &str = "adapt.";
pub const ADAPTED_GROUPS: [&str; 2] = [BACKBONE, ACTOR];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub embed_dim: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub adapt_hidden: usize,
    pub gtn: GtnConfig,
    /// Keep `W1` at zero; the trainer masks its gradient.
    pub freeze_graph_weight: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            input_dim: 64,
            hidden: 64,
            adapt_hidden: 16,
            gtn: GtnConfig::default(),
            freeze_graph_weight: false,
        }
    }
}

/// A policy architecture bound to a vocabulary and, for graph variants, a
/// prior graph. Holds no weights.
#[derive(Debug, Clone)]
pub struct Agent {
    pub variant: Variant,
    pub config: AgentConfig,
    vocab: Arc<ObjectVocabulary>,
    graph: Option<Arc<AdjacencyTensor>>,
}

/// LSTM `(h, c)` on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Hidden {
    pub h: Var,
    pub c: Var,
}

/// Per-tape graph state: propagation matrices and the embedding table.
#[derive(Debug, Clone)]
pub struct GraphContext {
    propagation: Vec<Var>,
    /// Q for language-only nodes, which do not depend on the observation.
    fixed_q: Option<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub features: Var,
    pub graph: Option<Var>,
    pub logits: Var,
    pub probs: Var,
    pub value: Option<Var>,
    pub hidden: Hidden,
}

impl Agent {
    pub fn new(
        variant: Variant,
        config: AgentConfig,
        vocab: Arc<ObjectVocabulary>,
        graph: Option<Arc<AdjacencyTensor>>,
    ) -> Result<Self> {
        if variant.uses_graph() {
            let g = graph
                .as_ref()
                .ok_or_else(|| Error::Config(format!("variant {variant} needs a prior graph")))?;
            if g.nodes() != vocab.len() || config.gtn.nodes != vocab.len() {
                return Err(Error::Config("graph, gtn and vocabulary node counts differ".into()));
            }
            if config.gtn.feature_dim != OBS_SLICE_DIM + config.embed_dim {
                return Err(Error::Config(format!(
                    "gtn feature dim must be {}",
                    OBS_SLICE_DIM + config.embed_dim
                )));
            }
        }
        Ok(Self {
            variant,
            config,
            vocab,
            graph: if variant.uses_graph() { graph } else { None },
        })
    }

    pub fn vocab(&self) -> &Arc<ObjectVocabulary> {
        &self.vocab
    }

    pub fn graph(&self) -> Option<&Arc<AdjacencyTensor>> {
        self.graph.as_ref()
    }

    pub fn obs_dim(&self) -> usize {
        Observation::feature_dim(self.vocab.len())
    }

    fn actor_in(&self) -> usize {
        match self.variant.graph_role() {
            GraphRole::State | GraphRole::Action => self.config.hidden + self.config.gtn.q_dim,
            _ => self.config.hidden,
        }
    }

    fn critic_sees_graph(&self) -> bool {
        matches!(self.variant.graph_role(), GraphRole::State | GraphRole::Critic)
    }

    pub fn param_shapes(&self) -> Vec<(String, [usize; 2])> {
        let c = &self.config;
        let four = 4 * c.hidden;
        let mut out: Vec<(String, [usize; 2])> = vec![
            (EMBED.into(), [self.vocab.len(), c.embed_dim]),
            (IN_W.into(), [self.obs_dim() + c.embed_dim, c.input_dim]),
            (IN_B.into(), [1, c.input_dim]),
            (LSTM_W_IH.into(), [c.input_dim, four]),
            (LSTM_W_HH.into(), [c.hidden, four]),
            (LSTM_B.into(), [1, four]),
            (ACTOR_W.into(), [self.actor_in(), Action::COUNT]),
            (ACTOR_B.into(), [1, Action::COUNT]),
            (CRITIC_W.into(), [c.hidden, 1]),
            (CRITIC_B.into(), [1, 1]),
        ];
        if self.critic_sees_graph() {
            out.push((CRITIC_W_GRAPH.into(), [c.gtn.q_dim, 1]));
        }
        if self.variant.uses_graph() {
            out.extend(c.gtn.param_shapes());
        }
        if self.variant.uses_maml() {
            out.extend([
                (ADAPT_L1_W.into(), [c.hidden + Action::COUNT, c.adapt_hidden]),
                (ADAPT_L1_B.into(), [1, c.adapt_hidden]),
                (ADAPT_OUT_W.into(), [c.adapt_hidden, 1]),
                (ADAPT_OUT_B.into(), [1, 1]),
            ]);
        }
        out
    }

    /// Each parameter is drawn from its own `(seed, name)` stream, so shared
    /// names start identical across variants.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut p = ParamSet::new();
        for (name, [r, c]) in self.param_shapes() {
            let t = if name == CRITIC_W_GRAPH && self.config.freeze_graph_weight {
                Tensor::zeros(r, c)
            } else {
                Tensor::seeded_init(r, c, seed, &name)
            };
            p.insert(name, t).expect("distinct names");
        }
        p
    }

    /// Names whose gradients the trainer must discard.
    pub fn frozen_params(&self) -> Vec<String> {
        if self.config.freeze_graph_weight && self.critic_sees_graph() {
            vec![CRITIC_W_GRAPH.into()]
        } else {
            Vec::new()
        }
    }

    /// Verifies that `params` has exactly this architecture's names and shapes.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let expected = self.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::Incongruent(format!(
                "{} parameters for {}, expected {}",
                params.len(),
                self.variant,
                expected.len()
            )));
        }
        for (name, shape) in expected {
            let t = params.require(&name)?;
            if t.shape() != shape {
                return Err(Error::Incongruent(format!("{name} is {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(())
    }

    pub fn zero_hidden(&self, tape: &mut Tape) -> Hidden {
        Hidden {
            h: tape.constant(&Tensor::zeros(1, self.config.hidden)),
            c: tape.constant(&Tensor::zeros(1, self.config.hidden)),
        }
    }

    /// Graph state for one tape; `None` for graph-free variants.
    pub fn graph_context(&self, tape: &mut Tape, bound: &Bound) -> Result<Option<GraphContext>> {
        let Some(adj) = &self.graph else {
            return Ok(None);
        };
        let propagation = gtn::propagation_matrices(tape, adj, bound, &self.config.gtn)?;
        let fixed_q = if self.variant.language_only() {
            let nodes = self.language_nodes(tape, bound)?;
            Some(gtn::embed_nodes(tape, &propagation, nodes, bound, &self.config.gtn)?)
        } else {
            None
        };
        Ok(Some(GraphContext { propagation, fixed_q }))
    }

    fn language_nodes(&self, tape: &mut Tape, bound: &Bound) -> Result<Var> {
        let embed = bound.get(EMBED)?;
        let pad = tape.constant(&Tensor::zeros(self.vocab.len(), OBS_SLICE_DIM));
        tape.concat(&[embed, pad], Axis::Cols)
    }

    /// Node feature matrix on the tape: observation slice then embedding row.
    pub fn node_features(&self, tape: &mut Tape, bound: &Bound, obs: &Observation) -> Result<Var> {
        if self.variant.language_only() {
            return self.language_nodes(tape, bound);
        }
        let block = tape.constant(&knowgraph::observation_block(obs));
        let embed = bound.get(EMBED)?;
        tape.concat(&[block, embed], Axis::Cols)
    }

    /// Graph vector `Q` for the current observation.
    pub fn graph_vector(&self, tape: &mut Tape, bound: &Bound, ctx: &GraphContext, obs: &Observation) -> Result<Var> {
        if let Some(q) = ctx.fixed_q {
            return Ok(q);
        }
        let nodes = self.node_features(tape, bound, obs)?;
        gtn::embed_nodes(tape, &ctx.propagation, nodes, bound, &self.config.gtn)
    }

    /// `F` and the next hidden state.
    pub fn encode_state(&self, tape: &mut Tape, bound: &Bound, obs: &Observation, hidden: Hidden) -> Result<(Var, Hidden)> {
        let x = tape.constant_row(obs.features());
        let one_hot = {
            let mut v = vec![0.0; self.vocab.len()];
            v[obs.target.0] = 1.0;
            tape.constant_row(v)
        };
        let z = tape.matmul(one_hot, bound.get(EMBED)?)?;
        let joined = tape.concat(&[x, z], Axis::Cols)?;
        let pre = tape.matmul(joined, bound.get(IN_W)?)?;
        let pre = tape.add(pre, bound.get(IN_B)?)?;
        let inp = tape.relu(pre);
        let (h, c) = tape.lstm_step(
            inp,
            hidden.h,
            hidden.c,
            bound.get(LSTM_W_IH)?,
            bound.get(LSTM_W_HH)?,
            bound.get(LSTM_B)?,
        )?;
        Ok((h, Hidden { h, c }))
    }

    /// `[F | Q]` for the heads that consume the graph.
    pub fn graph_in_state(&self, tape: &mut Tape, f: Var, q: Var) -> Result<Var> {
        tape.concat(&[f, q], Axis::Cols)
    }

    /// Action logits.
    pub fn act(&self, tape: &mut Tape, bound: &Bound, f: Var, q: Option<Var>) -> Result<Var> {
        let input = match (self.variant.graph_role(), q) {
            (GraphRole::State | GraphRole::Action, Some(q)) => self.graph_in_state(tape, f, q)?,
            (GraphRole::State | GraphRole::Action, None) => {
                return Err(Error::Contract(format!("{} actor needs the graph vector", self.variant)))
            }
            _ => f,
        };
        let l = tape.matmul(input, bound.get(ACTOR_W)?)?;
        tape.add(l, bound.get(ACTOR_B)?)
    }

    /// `V = W1 Q + W2 F + b`, evaluated as one linear map over `[F | Q]`;
    /// `V = W2 F + b` when the critic has no graph input.
    pub fn estimate_value(&self, tape: &mut Tape, bound: &Bound, f: Var, q: Option<Var>) -> Result<Var> {
        let v = if self.critic_sees_graph() {
            let q = q.ok_or_else(|| Error::Contract(format!("{} critic needs the graph vector", self.variant)))?;
            let input = self.graph_in_state(tape, f, q)?;
            let w = tape.concat(&[bound.get(CRITIC_W)?, bound.get(CRITIC_W_GRAPH)?], Axis::Rows)?;
            tape.matmul(input, w)?
        } else {
            tape.matmul(f, bound.get(CRITIC_W)?)?
        };
        tape.add(v, bound.get(CRITIC_B)?)
    }

    /// One forward step. The critic (and, when only the critic uses it, the
    /// graph) is skipped unless `with_value`.
    pub fn step(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        graph: Option<&GraphContext>,
        obs: &Observation,
        hidden: Hidden,
        with_value: bool,
    ) -> Result<StepOutput> {
        let (f, hidden) = self.encode_state(tape, bound, obs, hidden)?;
        let role = self.variant.graph_role();
        let needs_q = match role {
            GraphRole::None => false,
            GraphRole::State | GraphRole::Action => true,
            GraphRole::Critic => with_value,
        };
        let q = if needs_q {
            let ctx = graph.ok_or_else(|| Error::Contract("graph context missing".into()))?;
            Some(self.graph_vector(tape, bound, ctx, obs)?)
        } else {
            None
        };
        let logits = self.act(tape, bound, f, q)?;
        let probs = tape.softmax(logits, Axis::Cols);
        let value = if with_value {
            Some(self.estimate_value(tape, bound, f, q)?)
        } else {
            None
        };
        Ok(StepOutput {
            features: f,
            graph: q,
            logits,
            probs,
            value,
            hidden,
        })
    }
}

/// Inverse-CDF draw from a probability row.
pub fn sample_action<R: Rng>(probs: &[f64], rng: &mut R) -> Action {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Action::from_index(i).expect("six probabilities");
        }
    }
    Action::from_index(probs.len() - 1).expect("six probabilities")
}

/// `-sum p ln p` of a probability row.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}
