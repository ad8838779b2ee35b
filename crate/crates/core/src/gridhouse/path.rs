use std::collections::VecDeque;

use super::{at_goal, transition, Action, AgentPose, Heading, HouseLayout, Pitch};
use crate::error::{Error, Result};
use crate::knowgraph::{ObjectId, ObjectVocabulary};

fn state_index(layout: &HouseLayout, pose: AgentPose) -> usize {
    let cell = (pose.y * layout.width + pose.x) as usize;
    (cell * 4 + pose.heading as usize) * 3 + pose.pitch as usize
}

/// Fewest actions, counting the final `Stop`, that end the episode in
/// success. Breadth-first over `(cell, heading, pitch)`.
pub fn shortest_path_length(
    layout: &HouseLayout,
    vocab: &ObjectVocabulary,
    spawn: AgentPose,
    target: ObjectId,
) -> Result<usize> {
    let states = (layout.width * layout.height) as usize * 12;
    let mut dist = vec![usize::MAX; states];
    let mut queue = VecDeque::from([spawn]);
    dist[state_index(layout, spawn)] = 0;
    while let Some(pose) = queue.pop_front() {
        let d = dist[state_index(layout, pose)];
        if at_goal(layout, vocab, pose, target) {
            return Ok(d + 1);
        }
        for action in &Action::ALL[..5] {
            let (next, _) = transition(layout, pose, *action);
            let idx = state_index(layout, next);
            if dist[idx] == usize::MAX {
                dist[idx] = d + 1;
                queue.push_back(next);
            }
        }
    }
    Err(Error::Contract(format!(
        "target `{}` unreachable in house {} ({:?})",
        vocab.name(target),
        layout.seed,
        layout.room
    )))
}

/// Every pose on a walkable cell.
pub fn all_poses(layout: &HouseLayout) -> Vec<AgentPose> {
    let mut out = Vec::new();
    for (x, y) in layout.walkable_cells() {
        for heading in Heading::ALL {
            for pitch in Pitch::ALL {
                out.push(AgentPose { x, y, heading, pitch });
            }
        }
    }
    out
}
