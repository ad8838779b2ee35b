//! Object vocabulary and the multi-channel object co-location graph.
//!
//! The adjacency tensor has one channel per room type plus a trailing
//! self-connection channel that is always the identity. Room channels are
//! binary, symmetric, and zero in every row/column of an object that cannot
//! appear in that room.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::gridhouse::Observation;

/// Threshold used when building the prior graph from harvested views.
pub const DEFAULT_COOCCURRENCE_THRESHOLD: u32 = 3;
/// Width of the observation-derived part of each node feature row.
pub const OBS_SLICE_DIM: usize = 16;
pub const EMBEDDING_PARAM: &str = "backbone.embed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomType {
    Kitchen,
    Bedroom,
    Bathroom,
    LivingRoom,
}

impl RoomType {
    pub const ALL: [RoomType; 4] = [
        RoomType::Kitchen,
        RoomType::Bedroom,
        RoomType::Bathroom,
        RoomType::LivingRoom,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            RoomType::Kitchen => "kitchen",
            RoomType::Bedroom => "bedroom",
            RoomType::Bathroom => "bathroom",
            RoomType::LivingRoom => "living_room",
        }
    }

    pub fn parse(s: &str) -> Option<RoomType> {
        RoomType::ALL.into_iter().find(|r| r.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSize {
    Small,
    Large,
}

/// Which camera pitch an object needs in order to be seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightClass {
    /// Floor-level; only seen while looking down.
    Low,
    /// Seen at any pitch.
    Mid,
    /// Wall-mounted or high shelves; only seen while looking up.
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub name: String,
    pub rooms: Vec<RoomType>,
    pub size: ObjectSize,
    pub height: HeightClass,
}

/// Ordered object catalogue. The index of an object is also its embedding row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectVocabulary {
    objects: Vec<ObjectInfo>,
}

impl ObjectVocabulary {
    pub fn new(objects: Vec<ObjectInfo>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for o in &objects {
            if !seen.insert(o.name.as_str()) {
                return Err(Error::Config(format!("duplicate object `{}`", o.name)));
            }
            if o.rooms.is_empty() {
                return Err(Error::Config(format!("object `{}` belongs to no room", o.name)));
            }
        }
        Ok(Self { objects })
    }

    /// The 20-object, 4-room catalogue the simulator is built around.
    pub fn standard() -> Self {
        use HeightClass::*;
        use ObjectSize::*;
        use RoomType::*;
        let entries: [(&str, ObjectSize, HeightClass, &[RoomType]); 20] = [
            ("Fridge", Large, Mid, &[Kitchen]),
            ("Stove", Large, Mid, &[Kitchen]),
            ("Sink", Large, Mid, &[Kitchen]),
            ("Microwave", Large, High, &[Kitchen]),
            ("Toaster", Small, Mid, &[Kitchen]),
            ("Bowl", Small, Low, &[Kitchen, LivingRoom]),
            ("SoapBottle", Small, Low, &[Kitchen, Bathroom]),
            ("Bed", Large, Mid, &[Bedroom]),
            ("Dresser", Large, Mid, &[Bedroom]),
            ("AlarmClock", Small, High, &[Bedroom]),
            ("Pillow", Small, Mid, &[Bedroom]),
            ("Laptop", Small, Mid, &[Bedroom, LivingRoom]),
            ("Book", Small, Low, &[Bedroom, LivingRoom]),
            ("Toilet", Large, Mid, &[Bathroom]),
            ("Basin", Large, Mid, &[Bathroom]),
            ("Towel", Small, High, &[Bathroom]),
            ("Sofa", Large, Mid, &[LivingRoom]),
            ("Television", Large, High, &[LivingRoom]),
            ("RemoteControl", Small, Low, &[LivingRoom, Bedroom]),
            ("HousePlant", Large, Mid, &[LivingRoom, Bathroom]),
        ];
        let objects = entries
            .iter()
            .map(|(name, size, height, rooms)| ObjectInfo {
                name: name.to_string(),
                rooms: rooms.to_vec(),
                size: *size,
                height: *height,
            })
            .collect();
        Self::new(objects).expect("standard catalogue is valid")
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: ObjectId) -> &ObjectInfo {
        &self.objects[id.0]
    }

    pub fn name(&self, id: ObjectId) -> &str {
        &self.objects[id.0].name
    }

    pub fn id(&self, name: &str) -> Result<ObjectId> {
        self.objects
            .iter()
            .position(|o| o.name == name)
            .map(ObjectId)
            .ok_or_else(|| Error::UnknownObject(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> {
        (0..self.objects.len()).map(ObjectId)
    }

    pub fn in_room(&self, id: ObjectId, room: RoomType) -> bool {
        self.objects[id.0].rooms.contains(&room)
    }

    /// Objects that can appear in `room`, in vocabulary order.
    pub fn room_objects(&self, room: RoomType) -> Vec<ObjectId> {
        self.ids().filter(|id| self.in_room(*id, room)).collect()
    }
}

/// One egocentric view: the set of objects visible together in a room.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    pub room: RoomType,
    pub objects: BTreeSet<ObjectId>,
}

impl View {
    pub fn from_names(room: RoomType, names: &[&str], vocab: &ObjectVocabulary) -> Result<Self> {
        let objects = names
            .iter()
            .map(|n| vocab.id(n))
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(Self { room, objects })
    }
}

/// `n x n x C` co-location tensor; channel `C - 1` is the self-connection channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyTensor {
    n: usize,
    labels: Vec<String>,
    channels: Vec<Vec<f64>>,
}

impl AdjacencyTensor {
    /// Room channels all zero, self channel identity.
    pub fn empty(n: usize) -> Self {
        let mut labels: Vec<String> = RoomType::ALL.iter().map(|r| r.label().to_string()).collect();
        labels.push("self".into());
        let mut channels = vec![vec![0.0; n * n]; RoomType::ALL.len()];
        let mut eye = vec![0.0; n * n];
        for i in 0..n {
            eye[i * n + i] = 1.0;
        }
        channels.push(eye);
        Self { n, labels, channels }
    }

    pub fn from_channels(n: usize, labels: Vec<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != channels.len() || channels.is_empty() {
            return Err(Error::Config("channel/label count mismatch".into()));
        }
        for ch in &channels {
            if ch.len() != n * n {
                return Err(Error::shape("adjacency channel", [n, n], [ch.len(), 1]));
            }
            if ch.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Config("adjacency values must be finite and non-negative".into()));
            }
        }
        Ok(Self { n, labels, channels })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn self_channel(&self) -> usize {
        self.channels.len() - 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channel_tensor(&self, c: usize) -> Tensor {
        Tensor::new(self.n, self.n, self.channels[c].clone())
            .expect("square channel")
            .with_requires_grad(false)
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.channels[c][i * self.n + j]
    }

    fn set_sym(&mut self, i: usize, j: usize, c: usize, v: f64) {
        self.channels[c][i * self.n + j] = v;
        self.channels[c][j * self.n + i] = v;
    }

    /// Edges over pairs the room mask allows, summed across room channels.
    fn edge_stats(&self, vocab: &ObjectVocabulary) -> (usize, usize) {
        let (mut edges, mut allowed) = (0, 0);
        for room in RoomType::ALL {
            let members = vocab.room_objects(room);
            for (a, i) in members.iter().enumerate() {
                for j in &members[a + 1..] {
                    allowed += 1;
                    if self.get(i.0, j.0, room.index()) > 0.0 {
                        edges += 1;
                    }
                }
            }
        }
        (edges, allowed)
    }

    /// Fraction of mask-allowed off-diagonal pairs that carry an edge.
    pub fn density(&self, vocab: &ObjectVocabulary) -> f64 {
        let (edges, allowed) = self.edge_stats(vocab);
        if allowed == 0 {
            0.0
        } else {
            edges as f64 / allowed as f64
        }
    }

    /// Strongest neighbours of `id` over the room channels, heaviest first.
    pub fn top_neighbors(&self, id: ObjectId, k: usize) -> Vec<(ObjectId, RoomType, f64)> {
        let mut out = Vec::new();
        for room in RoomType::ALL {
            for j in 0..self.n {
                let w = self.get(id.0, j, room.index());
                if j != id.0 && w > 0.0 {
                    out.push((ObjectId(j), room, w));
                }
            }
        }
        out.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        out.truncate(k);
        out
    }

    pub fn to_document(&self, vocab: &ObjectVocabulary) -> GraphDocument {
        let n = self.n;
        GraphDocument {
            vocabulary: vocab.clone(),
            channels: self.labels.clone(),
            matrices: self
                .channels
                .iter()
                .map(|ch| ch.chunks(n).map(<[f64]>::to_vec).collect())
                .collect(),
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Self> {
        let n = doc.vocabulary.len();
        let channels = doc
            .matrices
            .iter()
            .map(|m| {
                if m.len() != n || m.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("graph matrix is not {n}x{n}")));
                }
                Ok(m.concat())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_channels(n, doc.channels.clone(), channels)
    }
}

/// JSON export format for the prior graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub vocabulary: ObjectVocabulary,
    pub channels: Vec<String>,
    /// `channels.len()` dense `n x n` matrices.
    pub matrices: Vec<Vec<Vec<f64>>>,
}

/// Binary edge per room channel where a pair was seen together in at least
/// `threshold` views of that room type.
pub fn build_from_cooccurrence<I>(views: I, vocab: &ObjectVocabulary, threshold: u32) -> AdjacencyTensor
where
    I: IntoIterator<Item = View>,
{
    let n = vocab.len();
    let rooms = RoomType::ALL.len();
    let mut counts = vec![0u32; rooms * n * n];
    for view in views {
        let ids: Vec<ObjectId> = view.objects.iter().copied().collect();
        for (a, i) in ids.iter().enumerate() {
            for j in &ids[a + 1..] {
                let base = view.room.index() * n * n;
                counts[base + i.0 * n + j.0] += 1;
            }
        }
    }
    let mut adj = AdjacencyTensor::empty(n);
    for room in RoomType::ALL {
        let base = room.index() * n * n;
        for i in 0..n {
            for j in i + 1..n {
                let masked = vocab.in_room(ObjectId(i), room) && vocab.in_room(ObjectId(j), room);
                if masked && counts[base + i * n + j] >= threshold {
                    adj.set_sym(i, j, room.index(), 1.0);
                }
            }
        }
    }
    adj
}

/// Replaces room channels with symmetric Bernoulli(p) edges over the
/// room-membership mask, `p` being the original graph's density.
pub fn randomize_edges(adj: &AdjacencyTensor, vocab: &ObjectVocabulary, seed: u64) -> AdjacencyTensor {
    let p = adj.density(vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = adj.clone();
    for room in RoomType::ALL {
        out.channels[room.index()].fill(0.0);
        let members = vocab.room_objects(room);
        for (a, i) in members.iter().enumerate() {
            for j in &members[a + 1..] {
                if rng.gen_bool(p) {
                    out.set_sym(i.0, j.0, room.index(), 1.0);
                }
            }
        }
    }
    out
}

/// Observation-derived `n x OBS_SLICE_DIM` block of the node features.
///
/// Per object: visible flag, normalised distance, normalised bearing, a
/// target indicator, then the global summary (room one-hot, pitch one-hot,
/// wall-ahead), zero padded. Unseen objects keep zeros in the first three
/// fields.
pub fn observation_block(obs: &Observation) -> Tensor {
    let n = obs.objects.len();
    let summary = obs.summary();
    let mut data = vec![0.0; n * OBS_SLICE_DIM];
    for (i, view) in obs.objects.iter().enumerate() {
        let row = &mut data[i * OBS_SLICE_DIM..(i + 1) * OBS_SLICE_DIM];
        if view.visible {
            row[0] = 1.0;
            row[1] = view.distance;
            row[2] = view.bearing;
        }
        row[3] = if obs.target.0 == i { 1.0 } else { 0.0 };
        row[4..4 + summary.len()].copy_from_slice(&summary);
    }
    Tensor::new(n, OBS_SLICE_DIM, data)
        .expect("block shape")
        .with_requires_grad(false)
}

fn embedding_table<'a>(vocab: &ObjectVocabulary, embeddings: &'a ParamSet) -> Result<&'a Tensor> {
    let table = embeddings.require(EMBEDDING_PARAM)?;
    if table.rows() != vocab.len() {
        return Err(Error::shape("embedding table", table.shape(), [vocab.len(), table.cols()]));
    }
    Ok(table)
}

/// `concat(observation slice, embedding row)` for every object.
pub fn assemble_node_features(obs: &Observation, vocab: &ObjectVocabulary, embeddings: &ParamSet) -> Result<Tensor> {
    let table = embedding_table(vocab, embeddings)?;
    let block = observation_block(obs);
    let d = OBS_SLICE_DIM + table.cols();
    let mut data = Vec::with_capacity(vocab.len() * d);
    for i in 0..vocab.len() {
        data.extend_from_slice(&block.data()[i * OBS_SLICE_DIM..(i + 1) * OBS_SLICE_DIM]);
        data.extend_from_slice(&table.data()[i * table.cols()..(i + 1) * table.cols()]);
    }
    Tensor::new(vocab.len(), d, data)
}

/// Embedding rows only, zero padded to the full node feature width.
pub fn language_only_features(vocab: &ObjectVocabulary, embeddings: &ParamSet) -> Result<Tensor> {
    let table = embedding_table(vocab, embeddings)?;
    let d = OBS_SLICE_DIM + table.cols();
    let mut data = Vec::with_capacity(vocab.len() * d);
    for i in 0..vocab.len() {
        data.extend_from_slice(&table.data()[i * table.cols()..(i + 1) * table.cols()]);
        data.extend(std::iter::repeat_n(0.0, OBS_SLICE_DIM));
    }
    Tensor::new(vocab.len(), d, data)
}
