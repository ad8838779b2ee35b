//! Graph Transformer encoder over the multi-channel prior graph.
//!
//! Each track mixes the adjacency channels with a softmax per stage, chains
//! the stage mixes by matrix product, row-normalises the result with added
//! self loops, and runs the node features through relu convolutions. Track
//! outputs are mean pooled, concatenated and projected to `q_dim`.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Axis, Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::knowgraph::AdjacencyTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtnConfig {
    pub nodes: usize,
    pub channels: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub q_dim: usize,
    /// Parallel mixtures per stage.
    pub tracks: usize,
    pub stages: usize,
    pub conv_layers: usize,
}

impl Default for GtnConfig {
    fn default() -> Self {
        Self {
            nodes: 20,
            channels: 5,
            feature_dim: 32,
            hidden: 16,
            q_dim: 32,
            tracks: 2,
            stages: 2,
            conv_layers: 2,
        }
    }
}

impl GtnConfig {
    pub fn mix_name(stage: usize, track: usize) -> String {
        format!("gtn.mix.s{stage}.t{track}")
    }

    pub fn conv_name(track: usize, layer: usize) -> String {
        format!("gtn.conv.t{track}.l{layer}")
    }

    pub const PROJ_W: &'static str = "gtn.proj.w";
    pub const PROJ_B: &'static str = "gtn.proj.b";

    /// Names and shapes of every GTN parameter.
    pub fn param_shapes(&self) -> Vec<(String, [usize; 2])> {
        let mut out = Vec::new();
        for s in 0..self.stages {
            for t in 0..self.tracks {
                out.push((Self::mix_name(s, t), [1, self.channels]));
            }
        }
        for t in 0..self.tracks {
            for l in 0..self.conv_layers {
                let fan_in = if l == 0 { self.feature_dim } else { self.hidden };
                out.push((Self::conv_name(t, l), [fan_in, self.hidden]));
            }
        }
        out.push((Self::PROJ_W.into(), [self.tracks * self.hidden, self.q_dim]));
        out.push((Self::PROJ_B.into(), [1, self.q_dim]));
        out
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut p = ParamSet::new();
        for (name, [r, c]) in self.param_shapes() {
            let t = Tensor::seeded_init(r, c, seed, &name);
            p.insert(name, t).expect("distinct names");
        }
        p
    }

    fn check(&self, adj: &AdjacencyTensor) -> Result<()> {
        if adj.nodes() != self.nodes || adj.num_channels() != self.channels {
            return Err(Error::shape(
                "encode_graph adjacency",
                [adj.nodes(), adj.num_channels()],
                [self.nodes, self.channels],
            ));
        }
        if self.tracks == 0 || self.stages == 0 || self.conv_layers == 0 {
            return Err(Error::Config("gtn tracks, stages and conv layers must be positive".into()));
        }
        Ok(())
    }
}

/// Adjacency channels as tape constants.
pub fn adjacency_constants(tape: &mut Tape, adj: &AdjacencyTensor) -> Vec<Var> {
    (0..adj.num_channels())
        .map(|c| tape.constant(&adj.channel_tensor(c)))
        .collect()
}

/// `H = sum_c softmax(logits)_c * A_c`.
pub fn channel_mix(tape: &mut Tape, channels: &[Var], logits: Var) -> Result<Var> {
    if tape.shape(logits) != [1, channels.len()] {
        return Err(Error::shape("channel_mix", tape.shape(logits), [1, channels.len()]));
    }
    let weights = tape.softmax(logits, Axis::Cols);
    let mut acc: Option<Var> = None;
    for (c, &a) in channels.iter().enumerate() {
        let w = tape.slice(weights, Axis::Cols, c, 1)?;
        let term = tape.mul(w, a)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    acc.ok_or_else(|| Error::Contract("channel_mix needs at least one channel".into()))
}

/// Left-to-right product `H_1 H_2 ... H_M`.
pub fn compose_adjacency(tape: &mut Tape, mixes: &[Var]) -> Result<Var> {
    let (&first, rest) = mixes
        .split_first()
        .ok_or_else(|| Error::Contract("compose_adjacency needs at least one mix".into()))?;
    rest.iter().try_fold(first, |acc, &h| tape.matmul(acc, h))
}

/// Row-stochastic `E^-1 (A + I)` with `E` the row sums of `A + I`.
pub fn normalized_propagation(tape: &mut Tape, a_new: Var) -> Result<Var> {
    let [n, m] = tape.shape(a_new);
    if n != m {
        return Err(Error::shape("normalized_propagation", [n, m], [n, n]));
    }
    let eye = tape.constant(&Tensor::identity(n));
    let a_tilde = tape.add(a_new, eye)?;
    let ones_col = tape.constant(&Tensor::filled(n, 1, 1.0));
    let degree = tape.matmul(a_tilde, ones_col)?;
    let inv = tape.recip(degree);
    let ones_row = tape.constant(&Tensor::filled(1, n, 1.0));
    let scale = tape.matmul(inv, ones_row)?;
    tape.mul(scale, a_tilde)
}

/// `relu(P (N W))` for a precomputed propagation matrix `P`.
pub fn graph_convolve(tape: &mut Tape, propagation: Var, nodes: Var, w: Var) -> Result<Var> {
    let xw = tape.matmul(nodes, w)?;
    let mixed = tape.matmul(propagation, xw)?;
    Ok(tape.relu(mixed))
}

/// Observation-independent part of the encoder: one propagation matrix per
/// track. Build once per tape and reuse across steps.
pub fn propagation_matrices(tape: &mut Tape, adj: &AdjacencyTensor, bound: &Bound, cfg: &GtnConfig) -> Result<Vec<Var>> {
    cfg.check(adj)?;
    let channels = adjacency_constants(tape, adj);
    (0..cfg.tracks)
        .map(|t| {
            let mixes = (0..cfg.stages)
                .map(|s| {
                    let logits = bound.get(&GtnConfig::mix_name(s, t))?;
                    channel_mix(tape, &channels, logits)
                })
                .collect::<Result<Vec<_>>>()?;
            let a_new = compose_adjacency(tape, &mixes)?;
            normalized_propagation(tape, a_new)
        })
        .collect()
}

/// Graph vector `Q` (`1 x q_dim`) from node features and per-track propagation.
pub fn embed_nodes(tape: &mut Tape, propagation: &[Var], nodes: Var, bound: &Bound, cfg: &GtnConfig) -> Result<Var> {
    if tape.shape(nodes) != [cfg.nodes, cfg.feature_dim] {
        return Err(Error::shape("encode_graph nodes", tape.shape(nodes), [cfg.nodes, cfg.feature_dim]));
    }
    let pool = tape.constant(&Tensor::filled(1, cfg.nodes, 1.0 / cfg.nodes as f64));
    let mut pooled = Vec::with_capacity(propagation.len());
    for (t, &p) in propagation.iter().enumerate() {
        let mut x = nodes;
        for l in 0..cfg.conv_layers {
            let w = bound.get(&GtnConfig::conv_name(t, l))?;
            x = graph_convolve(tape, p, x, w)?;
        }
        pooled.push(tape.matmul(pool, x)?);
    }
    let joined = tape.concat(&pooled, Axis::Cols)?;
    let w = bound.get(GtnConfig::PROJ_W)?;
    let b = bound.get(GtnConfig::PROJ_B)?;
    let proj = tape.matmul(joined, w)?;
    tape.add(proj, b)
}

pub fn encode_graph(tape: &mut Tape, adj: &AdjacencyTensor, nodes: Var, bound: &Bound, cfg: &GtnConfig) -> Result<Var> {
    let props = propagation_matrices(tape, adj, bound, cfg)?;
    embed_nodes(tape, &props, nodes, bound, cfg)
}
