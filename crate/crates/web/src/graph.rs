use std::sync::Arc;

use gve_core::diffcore::Tape;
use gve_core::gridhouse::{HousePool, Split};
use gve_core::gtn::{adjacency_constants, channel_mix, normalized_propagation};
use gve_core::knowgraph::{
    build_from_cooccurrence, AdjacencyTensor, ObjectId, ObjectVocabulary, DEFAULT_COOCCURRENCE_THRESHOLD,
};
use gve_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const HOUSES: usize = 5;
const VIEWS_PER_HOUSE: usize = 300;

/// A co-occurrence graph harvested in the page, for exploring channel mixes.
#[derive(Debug, Clone)]
pub struct GraphExplorer {
    vocab: Arc<ObjectVocabulary>,
    adj: AdjacencyTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbour {
    pub name: String,
    /// Entry of the mixed adjacency `H`.
    pub mixed: f64,
    /// Entry of the row-normalised propagation matrix.
    pub propagation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixView {
    pub channels: Vec<String>,
    /// Softmax of the logits.
    pub weights: Vec<f64>,
    pub object: String,
    /// Propagation weight the object keeps for itself.
    pub self_weight: f64,
    /// Heaviest first.
    pub neighbours: Vec<Neighbour>,
}

impl GraphExplorer {
    pub fn harvest(seed: u64) -> Self {
        let vocab = Arc::new(ObjectVocabulary::standard());
        let pool = HousePool::new(Arc::clone(&vocab), Split::Train, HOUSES);
        let views = pool.harvest_views(VIEWS_PER_HOUSE, &mut ChaCha8Rng::seed_from_u64(seed));
        let adj = build_from_cooccurrence(views, &vocab, DEFAULT_COOCCURRENCE_THRESHOLD);
        Self { vocab, adj }
    }

    pub fn channels(&self) -> &[String] {
        self.adj.labels()
    }

    pub fn objects(&self) -> Vec<String> {
        self.vocab.ids().map(|id| self.vocab.name(id).to_string()).collect()
    }

    pub fn density(&self) -> f64 {
        self.adj.density(&self.vocab)
    }

    /// Mixes the channels with `softmax(logits)` and reports `object`'s row
    /// of the mix and of its propagation matrix.
    pub fn mix(&self, logits: &[f64], object: &str, top: usize) -> Result<MixView> {
        let c = self.adj.num_channels();
        if logits.len() != c {
            return Err(Error::Config(format!("expected {c} logits, got {}", logits.len())));
        }
        let id = self.vocab.id(object)?;
        let n = self.adj.nodes();
        let mut tape = Tape::new();
        let channels = adjacency_constants(&mut tape, &self.adj);
        let l = tape.constant_row(logits.to_vec());
        let h = channel_mix(&mut tape, &channels, l)?;
        let p = normalized_propagation(&mut tape, h)?;
        let row = |v| tape.value(v)[id.0 * n..(id.0 + 1) * n].to_vec();
        let (h_row, p_row) = (row(h), row(p));
        let mut neighbours: Vec<Neighbour> = (0..n)
            .filter(|&j| j != id.0 && h_row[j] > 0.0)
            .map(|j| Neighbour {
                name: self.vocab.name(ObjectId(j)).to_string(),
                mixed: h_row[j],
                propagation: p_row[j],
            })
            .collect();
        neighbours.sort_by(|a, b| b.mixed.total_cmp(&a.mixed).then_with(|| a.name.cmp(&b.name)));
        neighbours.truncate(top);
        Ok(MixView {
            channels: self.adj.labels().to_vec(),
            weights: softmax(logits),
            object: object.to_string(),
            self_weight: p_row[id.0],
            neighbours,
        })
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_room_channel_reproduces_that_channel() {
        let g = GraphExplorer::harvest(0);
        assert!(g.density() > 0.0);
        let kitchen = 0;
        let mut logits = vec![0.0; g.channels().len()];
        logits[kitchen] = 50.0;
        let v = g.mix(&logits, "Fridge", 100).unwrap();
        assert!((v.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let fridge = g.vocab.id("Fridge").unwrap();
        let expected = g
            .adj
            .top_neighbors(fridge, 100)
            .into_iter()
            .filter(|(_, room, _)| room.index() == kitchen)
            .count();
        let strong: Vec<_> = v.neighbours.iter().filter(|nb| nb.mixed > 0.5).collect();
        assert_eq!(strong.len(), expected);
        assert!(strong.iter().all(|nb| (nb.mixed - 1.0).abs() < 1e-10));
        let row_sum = v.self_weight + v.neighbours.iter().map(|nb| nb.propagation).sum::<f64>();
        assert!((row_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_channel_leaves_no_neighbours() {
        let g = GraphExplorer::harvest(0);
        let mut logits = vec![-50.0; g.channels().len()];
        *logits.last_mut().unwrap() = 50.0;
        let v = g.mix(&logits, "Bed", 5).unwrap();
        assert!(v.neighbours.iter().all(|nb| nb.mixed < 1e-10));
        assert!((v.self_weight - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let g = GraphExplorer::harvest(0);
        assert!(g.mix(&[0.0], "Bed", 5).is_err());
        assert!(g.mix(&vec![0.0; g.channels().len()], "Unicorn", 5).is_err());
    }
}
