use std::f64::consts::FRAC_PI_4;

use super::{AgentPose, Cell, HouseLayout, ObjectView, Pitch, Placement};
use crate::knowgraph::{HeightClass, ObjectVocabulary};

/// Maximum Euclidean viewing distance in cells.
pub const VIEW_RANGE: f64 = 5.0;

/// Cells strictly between `from` and `to` on the Bresenham line are not walls.
pub fn line_of_sight(layout: &HouseLayout, from: (i32, i32), to: (i32, i32)) -> bool {
    let (mut x, mut y) = from;
    let dx = (to.0 - from.0).abs();
    let dy = -(to.1 - from.1).abs();
    let sx = if from.0 < to.0 { 1 } else { -1 };
    let sy = if from.1 < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if (x, y) == to {
            return true;
        }
        if (x, y) != from && layout.cell(x, y) == Cell::Wall {
            return false;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn pitch_allows(pitch: Pitch, height: HeightClass) -> bool {
    match height {
        HeightClass::Mid => true,
        HeightClass::Low => pitch == Pitch::Down,
        HeightClass::High => pitch == Pitch::Up,
    }
}

/// 90° frustum, range, pitch and wall occlusion test for one placement.
pub(super) fn object_visible(
    layout: &HouseLayout,
    _vocab: &ObjectVocabulary,
    pose: AgentPose,
    p: &Placement,
) -> Option<ObjectView> {
    let (hx, hy) = pose.heading.delta();
    let (rx, ry) = pose.heading.right().delta();
    let (dx, dy) = (p.x - pose.x, p.y - pose.y);
    let forward = dx * hx + dy * hy;
    let lateral = dx * rx + dy * ry;
    if forward < 1 || lateral.abs() > forward {
        return None;
    }
    let dist = ((forward * forward + lateral * lateral) as f64).sqrt();
    if dist > VIEW_RANGE || !pitch_allows(pose.pitch, p.height) {
        return None;
    }
    if !line_of_sight(layout, (pose.x, pose.y), (p.x, p.y)) {
        return None;
    }
    Some(ObjectView {
        visible: true,
        distance: dist / VIEW_RANGE,
        bearing: (lateral as f64).atan2(forward as f64) / FRAC_PI_4,
    })
}

/// Per-vocabulary-object view from `pose`; unplaced or unseen objects are zeroed.
pub fn visible_objects(layout: &HouseLayout, vocab: &ObjectVocabulary, pose: AgentPose) -> Vec<ObjectView> {
    let mut out = vec![ObjectView::default(); vocab.len()];
    for p in &layout.objects {
        if let Some(v) = object_visible(layout, vocab, pose, p) {
            out[p.object.0] = v;
        }
    }
    out
}
