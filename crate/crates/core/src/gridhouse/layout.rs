use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowgraph::{HeightClass, ObjectId, ObjectSize, ObjectVocabulary, RoomType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub object: ObjectId,
    pub x: i32,
    pub y: i32,
    pub size: ObjectSize,
    pub height: HeightClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseLayout {
    pub seed: u64,
    pub room: RoomType,
    pub width: i32,
    pub height: i32,
    cells: Vec<Cell>,
    pub objects: Vec<Placement>,
}

/// Probability that a correlated partner lands within Chebyshev distance 2
/// of its anchor.
pub const PAIR_ATTRACTION: f64 = 0.8;
const PAIR_RADIUS: i32 = 2;
const MIN_OBJECTS: usize = 5;
const MAX_OBJECTS: usize = 8;

/// Ground-truth `(anchor, partner)` placement correlations per room.
pub fn correlated_pairs(room: RoomType) -> &'static [(&'static str, &'static str)] {
    match room {
        RoomType::Kitchen => &[("Sink", "Bowl"), ("Stove", "Toaster"), ("Sink", "SoapBottle")],
        RoomType::Bedroom => &[("Bed", "Pillow"), ("Bed", "Book"), ("Dresser", "AlarmClock"), ("Dresser", "Laptop")],
        RoomType::Bathroom => &[("Basin", "SoapBottle"), ("Toilet", "Towel")],
        RoomType::LivingRoom => &[("Sofa", "RemoteControl"), ("Sofa", "Book"), ("Television", "Laptop")],
    }
}

impl Placement {
    pub fn new(vocab: &ObjectVocabulary, object: ObjectId, x: i32, y: i32) -> Self {
        let info = vocab.get(object);
        Self {
            object,
            x,
            y,
            size: info.size,
            height: info.height,
        }
    }
}

impl HouseLayout {
    /// Builds a layout from rows of `#` (wall) and `.` (free).
    pub fn from_rows(seed: u64, room: RoomType, rows: &[&str], objects: Vec<Placement>) -> Result<Self> {
        let height = rows.len() as i32;
        let width = rows.first().map_or(0, |r| r.len()) as i32;
        let mut cells = Vec::with_capacity((width * height) as usize);
        for row in rows {
            if row.len() as i32 != width {
                return Err(Error::Contract("ragged layout rows".into()));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    other => return Err(Error::Contract(format!("unknown layout cell `{other}`"))),
                });
            }
        }
        let layout = Self {
            seed,
            room,
            width,
            height,
            cells,
            objects,
        };
        for p in &layout.objects {
            if layout.cell(p.x, p.y) != Cell::Free {
                return Err(Error::Contract(format!("object at ({}, {}) is not on a free cell", p.x, p.y)));
            }
        }
        Ok(layout)
    }

    pub fn cell(&self, x: i32, y: i32) -> Cell {
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            Cell::Wall
        } else {
            self.cells[(y * self.width + x) as usize]
        }
    }

    pub fn object_at(&self, x: i32, y: i32) -> Option<&Placement> {
        self.objects.iter().find(|p| p.x == x && p.y == y)
    }

    /// Free and not occupied by an object.
    pub fn walkable(&self, x: i32, y: i32) -> bool {
        self.cell(x, y) == Cell::Free && self.object_at(x, y).is_none()
    }

    pub fn walkable_cells(&self) -> Vec<(i32, i32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.walkable(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn placements_of(&self, id: ObjectId) -> impl Iterator<Item = &Placement> {
        self.objects.iter().filter(move |p| p.object == id)
    }

    pub fn placed_objects(&self) -> Vec<ObjectId> {
        self.objects.iter().map(|p| p.object).collect()
    }

    /// Walkable cells reachable from `start` by 4-neighbour moves.
    pub fn flood_fill(&self, start: (i32, i32)) -> Vec<(i32, i32)> {
        let mut seen = vec![false; (self.width * self.height) as usize];
        let mut out = Vec::new();
        if !self.walkable(start.0, start.1) {
            return out;
        }
        let mut queue = VecDeque::from([start]);
        seen[(start.1 * self.width + start.0) as usize] = true;
        while let Some((x, y)) = queue.pop_front() {
            out.push((x, y));
            for (dx, dy) in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
                let (nx, ny) = (x + dx, y + dy);
                if self.walkable(nx, ny) && !seen[(ny * self.width + nx) as usize] {
                    seen[(ny * self.width + nx) as usize] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
        out
    }

    fn is_valid(&self) -> bool {
        let free = self.walkable_cells();
        let Some(first) = free.first() else {
            return false;
        };
        if self.flood_fill(*first).len() != free.len() {
            return false;
        }
        // Every object must be approachable head-on from some free cell.
        self.objects.iter().all(|p| {
            [(0, -1), (1, 0), (0, 1), (-1, 0)]
                .iter()
                .any(|(dx, dy)| self.walkable(p.x + dx, p.y + dy))
        })
    }
}

fn room_salt(room: RoomType) -> u64 {
    0x9e37_79b9_7f4a_7c15u64.wrapping_mul(room.index() as u64 + 1)
}

/// Deterministic in `(seed, room)`. Retries internally until the layout is
/// connected and every object is approachable.
pub fn generate_house(seed: u64, room: RoomType, vocab: &ObjectVocabulary) -> HouseLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ room_salt(room));
    loop {
        let width = rng.gen_range(8..=12);
        let height = rng.gen_range(8..=12);
        if let Some(layout) = attempt(seed, room, vocab, width, height, &mut rng) {
            return layout;
        }
    }
}

/// As [`generate_house`] with a fixed outer size (walls included, min 8x8).
pub fn generate_house_sized(seed: u64, room: RoomType, vocab: &ObjectVocabulary, width: i32, height: i32) -> HouseLayout {
    assert!(width >= 8 && height >= 8, "houses are at least 8x8");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ room_salt(room) ^ ((width as u64) << 40 | (height as u64) << 32));
    loop {
        if let Some(layout) = attempt(seed, room, vocab, width, height, &mut rng) {
            return layout;
        }
    }
}

fn attempt(
    seed: u64,
    room: RoomType,
    vocab: &ObjectVocabulary,
    width: i32,
    height: i32,
    rng: &mut ChaCha8Rng,
) -> Option<HouseLayout> {
    let mut cells = vec![Cell::Free; (width * height) as usize];
    for y in 0..height {
        for x in 0..width {
            if x == 0 || y == 0 || x == width - 1 || y == height - 1 {
                cells[(y * width + x) as usize] = Cell::Wall;
            }
        }
    }
    // A few interior partitions for occlusion.
    for _ in 0..rng.gen_range(1..=3) {
        let len = rng.gen_range(2..=4);
        let horizontal = rng.gen_bool(0.5);
        let (sx, sy) = (rng.gen_range(2..width - 2), rng.gen_range(2..height - 2));
        for k in 0..len {
            let (x, y) = if horizontal { (sx + k, sy) } else { (sx, sy + k) };
            if x > 0 && y > 0 && x < width - 1 && y < height - 1 {
                cells[(y * width + x) as usize] = Cell::Wall;
            }
        }
    }
    let mut layout = HouseLayout {
        seed,
        room,
        width,
        height,
        cells,
        objects: Vec::new(),
    };

    let pairs = correlated_pairs(room);
    let id = |name: &str| vocab.id(name).expect("pair objects are in the vocabulary");
    let members = vocab.room_objects(room);
    let mut mandatory: Vec<ObjectId> = Vec::new();
    for (a, b) in pairs {
        for o in [id(a), id(b)] {
            if !mandatory.contains(&o) {
                mandatory.push(o);
            }
        }
    }
    let mut extras: Vec<ObjectId> = members.iter().copied().filter(|o| !mandatory.contains(o)).collect();
    extras.shuffle(rng);
    let upper = members.len().min(MAX_OBJECTS);
    let count = rng.gen_range(MIN_OBJECTS.min(upper)..=upper).max(mandatory.len());
    let mut chosen = mandatory;
    chosen.extend(extras.into_iter().take(count.saturating_sub(chosen.len())));
    // Large objects first so that partners can be drawn toward them.
    chosen.sort_by_key(|o| (vocab.get(*o).size != ObjectSize::Large, o.0));

    for obj in chosen {
        let anchor = pairs
            .iter()
            .find(|(_, b)| id(b) == obj)
            .and_then(|(a, _)| layout.placements_of(id(a)).next().copied());
        let free = layout.walkable_cells();
        let near: Vec<(i32, i32)> = match anchor {
            Some(a) => free
                .iter()
                .copied()
                .filter(|(x, y)| (x - a.x).abs().max((y - a.y).abs()) <= PAIR_RADIUS)
                .collect(),
            None => Vec::new(),
        };
        let attracted = anchor.is_some() && rng.gen_bool(PAIR_ATTRACTION);
        let pool = if attracted && !near.is_empty() { &near } else { &free };
        let &(x, y) = pool.choose(rng)?;
        layout.objects.push(Placement::new(vocab, obj, x, y));
    }
    layout.is_valid().then_some(layout)
}
