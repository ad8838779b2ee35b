use std::sync::Arc;

use gve_core::evalkit::return_to_go;
use gve_core::gridhouse::{Action, Cell, Episode, EpisodeSpec, HousePool, Observation, Split, TEST_MAX_STEPS};
use gve_core::knowgraph::ObjectVocabulary;
use gve_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Houses per room the demo draws episodes from.
const DEMO_HOUSES: usize = 5;
pub const DEMO_GAMMA: f64 = 0.99;

/// A hand-driven episode in one validation house.
#[derive(Debug, Clone)]
pub struct HouseSession {
    vocab: Arc<ObjectVocabulary>,
    spec: EpisodeSpec,
    episode: Episode,
    obs: Observation,
    rewards: Vec<f64>,
    success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectMarker {
    pub name: String,
    pub x: i32,
    pub y: i32,
    pub target: bool,
    pub visible: bool,
}

/// Everything the page draws, as one JSON-friendly snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub room: String,
    pub width: i32,
    pub height: i32,
    /// `height` strings of `width` chars: `#` wall, `.` free.
    pub cells: Vec<String>,
    pub objects: Vec<ObjectMarker>,
    pub agent: (i32, i32),
    pub heading: String,
    pub pitch: String,
    pub target: String,
    pub steps: usize,
    pub max_steps: usize,
    pub done: bool,
    pub success: bool,
    pub rewards: Vec<f64>,
    pub return_to_go: Vec<f64>,
}

impl HouseSession {
    pub fn new(seed: u64) -> Result<Self> {
        let vocab = Arc::new(ObjectVocabulary::standard());
        let pool = HousePool::new(Arc::clone(&vocab), Split::Val, DEMO_HOUSES);
        let spec = pool.sample_spec(&mut ChaCha8Rng::seed_from_u64(seed), TEST_MAX_STEPS);
        let (episode, obs) = pool.start(&spec)?;
        Ok(Self {
            vocab,
            spec,
            episode,
            obs,
            rewards: Vec::new(),
            success: false,
        })
    }

    pub fn step(&mut self, action: Action) -> Result<f64> {
        let r = self.episode.step(action)?;
        self.obs = r.observation;
        self.rewards.push(r.reward);
        self.success |= r.success;
        Ok(r.reward)
    }

    pub fn view(&self) -> SessionView {
        let layout = self.episode.layout();
        let cells = (0..layout.height)
            .map(|y| {
                (0..layout.width)
                    .map(|x| if layout.cell(x, y) == Cell::Wall { '#' } else { '.' })
                    .collect()
            })
            .collect();
        let objects = layout
            .objects
            .iter()
            .map(|p| ObjectMarker {
                name: self.vocab.name(p.object).to_string(),
                x: p.x,
                y: p.y,
                target: p.object == self.spec.target,
                visible: self.obs.objects[p.object.0].visible,
            })
            .collect();
        let pose = self.episode.pose();
        SessionView {
            room: self.spec.room.label().to_string(),
            width: layout.width,
            height: layout.height,
            cells,
            objects,
            agent: (pose.x, pose.y),
            heading: format!("{:?}", pose.heading),
            pitch: format!("{:?}", pose.pitch),
            target: self.vocab.name(self.spec.target).to_string(),
            steps: self.episode.steps(),
            max_steps: self.spec.max_steps,
            done: self.episode.is_done(),
            success: self.success,
            rewards: self.rewards.clone(),
            return_to_go: return_to_go(&self.rewards, DEMO_GAMMA),
        }
    }

    /// Text rendering: walls, free cells, object initials (target upper
    /// case) and the agent as an arrow.
    pub fn ascii(&self) -> String {
        let v = self.view();
        let mut grid: Vec<Vec<char>> = v.cells.iter().map(|r| r.chars().collect()).collect();
        for o in &v.objects {
            let c = o.name.chars().next().unwrap_or('?');
            grid[o.y as usize][o.x as usize] = if o.target { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() };
        }
        let arrow = match v.heading.as_str() {
            "North" => '^',
            "East" => '>',
            "South" => 'v',
            _ => '<',
        };
        grid[v.agent.1 as usize][v.agent.0 as usize] = arrow;
        grid.into_iter().map(|r| r.into_iter().collect::<String>() + "\n").collect()
    }
}
