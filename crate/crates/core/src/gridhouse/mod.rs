//! Procedurally generated single-room grid houses with egocentric partial
//! observation.

mod layout;
mod path;
mod pool;
mod vision;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowgraph::{ObjectId, ObjectVocabulary, RoomType};

pub use layout::{correlated_pairs, generate_house, generate_house_sized, Cell, HouseLayout, Placement};
pub use path::{all_poses, shortest_path_length};
pub use pool::HousePool;
pub use vision::{line_of_sight, visible_objects, VIEW_RANGE};

pub const SUCCESS_REWARD: f64 = 5.0;
pub const STEP_PENALTY: f64 = -0.01;
pub const TRAIN_MAX_STEPS: usize = 50;
pub const TEST_MAX_STEPS: usize = 200;
/// Chebyshev distance within which a visible target counts as reached.
pub const SUCCESS_DISTANCE: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn right(self) -> Heading {
        Heading::ALL[(self as usize + 1) % 4]
    }

    pub fn left(self) -> Heading {
        Heading::ALL[(self as usize + 3) % 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pitch {
    Up,
    Level,
    Down,
}

impl Pitch {
    pub const ALL: [Pitch; 3] = [Pitch::Up, Pitch::Level, Pitch::Down];

    fn raised(self) -> Pitch {
        match self {
            Pitch::Down => Pitch::Level,
            _ => Pitch::Up,
        }
    }

    fn lowered(self) -> Pitch {
        match self {
            Pitch::Up => Pitch::Level,
            _ => Pitch::Down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: i32,
    pub y: i32,
    pub heading: Heading,
    pub pitch: Pitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    Stop,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
        Action::Stop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

/// What the agent perceives of one object.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub visible: bool,
    /// Euclidean distance over the view range, in `[0, 1]`; 0 when unseen.
    pub distance: f64,
    /// Angle off the heading over 45°, in `[-1, 1]`; 0 when unseen.
    pub bearing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// One entry per vocabulary object.
    pub objects: Vec<ObjectView>,
    pub room: RoomType,
    pub pitch: Pitch,
    pub wall_ahead: bool,
    pub target: ObjectId,
}

impl Observation {
    pub const SUMMARY_DIM: usize = 8;

    /// Room one-hot, pitch one-hot, wall-ahead flag.
    pub fn summary(&self) -> [f64; Self::SUMMARY_DIM] {
        let mut s = [0.0; Self::SUMMARY_DIM];
        s[self.room.index()] = 1.0;
        s[4 + self.pitch as usize] = 1.0;
        s[7] = if self.wall_ahead { 1.0 } else { 0.0 };
        s
    }

    pub fn feature_dim(num_objects: usize) -> usize {
        3 * num_objects + Self::SUMMARY_DIM + 3
    }

    /// Flat vector: `(visible, distance, bearing)` per object, the summary,
    /// then the target's own triple repeated so the policy need not gather it.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::feature_dim(self.objects.len()));
        for v in &self.objects {
            out.extend_from_slice(&[if v.visible { 1.0 } else { 0.0 }, v.distance, v.bearing]);
        }
        out.extend_from_slice(&self.summary());
        let t = self.objects[self.target.0];
        out.extend_from_slice(&[if t.visible { 1.0 } else { 0.0 }, t.distance, t.bearing]);
        out
    }

    pub fn target_visible(&self) -> bool {
        self.objects[self.target.0].visible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .find(|x| x.label() == s)
    }

    /// House seeds reserved for this split; the ranges never overlap.
    pub fn house_seeds(self, count: usize) -> Vec<u64> {
        let base = match self {
            Split::Train => 0,
            Split::Val => 1_000_000,
            Split::Test => 2_000_000,
        };
        (0..count as u64).map(|i| base + i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub house_seed: u64,
    pub room: RoomType,
    pub spawn: AgentPose,
    pub target: ObjectId,
    pub max_steps: usize,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub pose: AgentPose,
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub info: StepInfo,
}

/// Pose after `action`, and whether a forward move hit an obstacle.
/// `Stop` leaves the pose unchanged.
pub fn transition(layout: &HouseLayout, pose: AgentPose, action: Action) -> (AgentPose, bool) {
    let mut next = pose;
    match action {
        Action::MoveAhead => {
            let (dx, dy) = pose.heading.delta();
            let (nx, ny) = (pose.x + dx, pose.y + dy);
            if !layout.walkable(nx, ny) {
                return (pose, true);
            }
            next.x = nx;
            next.y = ny;
        }
        Action::RotateLeft => next.heading = pose.heading.left(),
        Action::RotateRight => next.heading = pose.heading.right(),
        Action::LookUp => next.pitch = pose.pitch.raised(),
        Action::LookDown => next.pitch = pose.pitch.lowered(),
        Action::Stop => {}
    }
    (next, false)
}

pub fn observe(layout: &HouseLayout, vocab: &ObjectVocabulary, pose: AgentPose, target: ObjectId) -> Observation {
    let (dx, dy) = pose.heading.delta();
    Observation {
        objects: visible_objects(layout, vocab, pose),
        room: layout.room,
        pitch: pose.pitch,
        wall_ahead: !layout.walkable(pose.x + dx, pose.y + dy),
        target,
    }
}

/// True when stopping at `pose` would succeed.
pub fn at_goal(layout: &HouseLayout, vocab: &ObjectVocabulary, pose: AgentPose, target: ObjectId) -> bool {
    layout.placements_of(target).any(|p| {
        let close = (p.x - pose.x).abs().max((p.y - pose.y).abs()) <= SUCCESS_DISTANCE;
        close && vision::object_visible(layout, vocab, pose, p).is_some()
    })
}

/// A running episode. Owns its pose and step count; the layout is shared.
#[derive(Debug, Clone)]
pub struct Episode {
    layout: Arc<HouseLayout>,
    vocab: Arc<ObjectVocabulary>,
    pose: AgentPose,
    target: ObjectId,
    steps: usize,
    max_steps: usize,
    done: bool,
}

impl Episode {
    pub fn new(spec: &EpisodeSpec, layout: Arc<HouseLayout>, vocab: Arc<ObjectVocabulary>) -> Result<(Self, Observation)> {
        if layout.seed != spec.house_seed || layout.room != spec.room {
            return Err(Error::Contract("layout does not match episode spec".into()));
        }
        if !layout.walkable(spec.spawn.x, spec.spawn.y) {
            return Err(Error::Contract(format!(
                "spawn ({}, {}) is not a free cell",
                spec.spawn.x, spec.spawn.y
            )));
        }
        if layout.placements_of(spec.target).next().is_none() {
            return Err(Error::Contract(format!(
                "target `{}` is not placed in house {}",
                vocab.name(spec.target),
                spec.house_seed
            )));
        }
        if spec.max_steps == 0 {
            return Err(Error::Contract("max_steps must be positive".into()));
        }
        let ep = Self {
            layout,
            vocab,
            pose: spec.spawn,
            target: spec.target,
            steps: 0,
            max_steps: spec.max_steps,
            done: false,
        };
        let obs = ep.observe();
        Ok((ep, obs))
    }

    pub fn observe(&self) -> Observation {
        observe(&self.layout, &self.vocab, self.pose, self.target)
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn layout(&self) -> &HouseLayout {
        &self.layout
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        self.steps += 1;
        let (pose, blocked) = transition(&self.layout, self.pose, action);
        self.pose = pose;
        let success = action == Action::Stop && at_goal(&self.layout, &self.vocab, pose, self.target);
        self.done = action == Action::Stop || self.steps >= self.max_steps;
        Ok(StepResult {
            observation: self.observe(),
            reward: if success { SUCCESS_REWARD } else { STEP_PENALTY },
            done: self.done,
            success,
            info: StepInfo { pose, blocked },
        })
    }
}

/// Generates the episode's house and returns the starting observation and pose.
pub fn reset_episode(spec: &EpisodeSpec, vocab: &ObjectVocabulary) -> Result<(Observation, AgentPose)> {
    let layout = generate_house(spec.house_seed, spec.room, vocab);
    let (ep, obs) = Episode::new(spec, Arc::new(layout), Arc::new(vocab.clone()))?;
    Ok((obs, ep.pose()))
}

/// Character grid: `#` wall, `.` free, `a`.. objects by vocabulary index,
/// `^ > v <` the agent.
pub fn render_ascii(layout: &HouseLayout, pose: Option<AgentPose>) -> String {
    let mut rows: Vec<Vec<char>> = (0..layout.height)
        .map(|y| {
            (0..layout.width)
                .map(|x| match layout.cell(x, y) {
                    Cell::Wall => '#',
                    Cell::Free => '.',
                })
                .collect()
        })
        .collect();
    for p in &layout.objects {
        rows[p.y as usize][p.x as usize] = (b'a' + p.object.0 as u8) as char;
    }
    if let Some(pose) = pose {
        rows[pose.y as usize][pose.x as usize] = match pose.heading {
            Heading::North => '^',
            Heading::East => '>',
            Heading::South => 'v',
            Heading::West => '<',
        };
    }
    let mut s = String::new();
    for row in rows {
        s.extend(row);
        s.push('\n');
    }
    s
}

impl fmt::Display for HouseLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_ascii(self, None))
    }
}

#[cfg(test)]
mod tests;
