use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{all_poses, generate_house, visible_objects, AgentPose, Episode, EpisodeSpec, Heading, HouseLayout, Observation, Pitch, Split};
use crate::error::{Error, Result};
use crate::knowgraph::{ObjectId, ObjectVocabulary, RoomType, View};

/// Pre-generated layouts for one split, keyed by `(room, house seed)`.
#[derive(Debug, Clone)]
pub struct HousePool {
    split: Split,
    vocab: Arc<ObjectVocabulary>,
    seeds: Vec<u64>,
    houses: BTreeMap<(RoomType, u64), Arc<HouseLayout>>,
}

impl HousePool {
    pub fn new(vocab: Arc<ObjectVocabulary>, split: Split, houses_per_room: usize) -> Self {
        let seeds = split.house_seeds(houses_per_room);
        let mut houses = BTreeMap::new();
        for room in RoomType::ALL {
            for &seed in &seeds {
                houses.insert((room, seed), Arc::new(generate_house(seed, room, &vocab)));
            }
        }
        Self {
            split,
            vocab,
            seeds,
            houses,
        }
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn vocab(&self) -> &Arc<ObjectVocabulary> {
        &self.vocab
    }

    pub fn layouts(&self) -> impl Iterator<Item = &Arc<HouseLayout>> {
        self.houses.values()
    }

    pub fn layout(&self, room: RoomType, seed: u64) -> Option<&Arc<HouseLayout>> {
        self.houses.get(&(room, seed))
    }

    /// Uniform room, house, free cell, heading, and placed target; level pitch.
    pub fn sample_spec<R: Rng>(&self, rng: &mut R, max_steps: usize) -> EpisodeSpec {
        let room = RoomType::ALL[rng.gen_range(0..RoomType::ALL.len())];
        let seed = self.seeds[rng.gen_range(0..self.seeds.len())];
        let layout = &self.houses[&(room, seed)];
        let cells = layout.walkable_cells();
        let &(x, y) = cells.choose(rng).expect("layouts have free cells");
        let heading = Heading::ALL[rng.gen_range(0..4)];
        let target = layout.objects.choose(rng).expect("layouts have objects").object;
        EpisodeSpec {
            house_seed: seed,
            room,
            spawn: AgentPose {
                x,
                y,
                heading,
                pitch: Pitch::Level,
            },
            target,
            max_steps,
            split: self.split,
        }
    }

    pub fn start(&self, spec: &EpisodeSpec) -> Result<(Episode, Observation)> {
        let layout = self
            .layout(spec.room, spec.house_seed)
            .ok_or_else(|| Error::Contract(format!("house {} not in the {} pool", spec.house_seed, self.split.label())))?;
        Episode::new(spec, Arc::clone(layout), Arc::clone(&self.vocab))
    }
}

impl HousePool {
    /// Visible-object sets from `per_house` uniformly random poses in every
    /// house of the pool.
    pub fn harvest_views<R: Rng>(&self, per_house: usize, rng: &mut R) -> Vec<View> {
        let mut out = Vec::with_capacity(per_house * self.houses.len());
        for layout in self.houses.values() {
            let poses = all_poses(layout);
            for _ in 0..per_house {
                let pose = *poses.choose(rng).expect("layouts have free cells");
                let objects = visible_objects(layout, &self.vocab, pose)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.visible)
                    .map(|(i, _)| ObjectId(i))
                    .collect();
                out.push(View {
                    room: layout.room,
                    objects,
                });
            }
        }
        out
    }
}
