//! Navigation metrics and value-estimation error analysis.

mod io;
mod runner;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gridhouse::{EpisodeSpec, SUCCESS_REWARD};
use crate::knowgraph::{ObjectId, RoomType};
use crate::trainer::compute_returns;

pub use io::{
    read_records, read_value_error_csv, write_metrics_csv, write_records, write_value_error_csv, MetricsRow,
    METRICS_HEADER, VALUE_ERROR_HEADER,
};
pub use runner::{evaluate, evaluate_random, episode_spec, EvalConfig};

/// Episodes whose optimal length exceeds this count toward the filtered metrics.
pub const LONG_EPISODE_MIN_LENGTH: usize = 5;
/// Curves stop at the first timestep with fewer samples than this.
pub const MIN_CURVE_SAMPLES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub spec: EpisodeSpec,
    pub success: bool,
    /// Actions taken, `P`.
    pub steps: usize,
    /// Breadth-first optimal action count, `L`.
    pub optimal: usize,
    /// Critic estimate per step; empty for policies without one.
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Monte-Carlo value targets per step, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_returns: Option<Vec<f64>>,
}

impl EpisodeRecord {
    pub fn room(&self) -> RoomType {
        self.spec.room
    }

    pub fn target(&self) -> ObjectId {
        self.spec.target
    }

    /// `success * L / max(P, L)`.
    pub fn spl_term(&self) -> f64 {
        if self.success {
            self.optimal as f64 / self.steps.max(self.optimal) as f64
        } else {
            0.0
        }
    }

    /// Checks the record's internal consistency.
    pub fn validate(&self) -> Result<(), String> {
        if self.optimal < 1 {
            return Err("optimal length below 1".into());
        }
        if self.steps > self.spec.max_steps || self.rewards.len() != self.steps {
            return Err(format!("{} steps, {} rewards, cap {}", self.steps, self.rewards.len(), self.spec.max_steps));
        }
        if self.success != (self.rewards.last() == Some(&SUCCESS_REWARD)) {
            return Err("success flag disagrees with the final reward".into());
        }
        if self.success && self.steps < self.optimal {
            return Err(format!("succeeded in {} steps, optimum is {}", self.steps, self.optimal));
        }
        if !self.values.is_empty() && self.values.len() != self.steps {
            return Err(format!("{} values for {} steps", self.values.len(), self.steps));
        }
        Ok(())
    }
}

pub fn success_rate(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.success).count() as f64 / records.len() as f64
}

pub fn spl(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(EpisodeRecord::spl_term).sum::<f64>() / records.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
}

impl Summary {
    pub fn of(records: &[EpisodeRecord]) -> Self {
        Self {
            episodes: records.len(),
            sr: success_rate(records),
            spl: spl(records),
        }
    }
}

/// SR and SPL over episodes with `L > min_length`; `None` when there are none.
pub fn filtered_metrics(records: &[EpisodeRecord], min_length: usize) -> Option<Summary> {
    let long: Vec<EpisodeRecord> = records.iter().filter(|r| r.optimal > min_length).cloned().collect();
    (!long.is_empty()).then(|| Summary::of(&long))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Summary,
    pub long: Option<Summary>,
    pub per_room: BTreeMap<RoomType, Summary>,
}

impl MetricsReport {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let mut by_room: BTreeMap<RoomType, Vec<EpisodeRecord>> = BTreeMap::new();
        for r in records {
            by_room.entry(r.room()).or_default().push(r.clone());
        }
        Self {
            overall: Summary::of(records),
            long: filtered_metrics(records, LONG_EPISODE_MIN_LENGTH),
            per_room: by_room.iter().map(|(k, v)| (*k, Summary::of(v))).collect(),
        }
    }
}

/// Discounted return-to-go with a terminal bootstrap of 0. `gamma = 1`
/// gives plain suffix sums.
pub fn return_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    compute_returns(rewards, gamma, 0.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    #[default]
    Absolute,
    Squared,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundTruth {
    /// Realized discounted return-to-go.
    #[default]
    ReturnToGo,
    /// Averaged returns of independent continuations, stored on the record.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueErrorCurve {
    pub points: Vec<CurvePoint>,
}

impl ValueErrorCurve {
    /// Sample-weighted mean error over `t >= from`.
    pub fn mean_from(&self, from: usize) -> Option<f64> {
        let (sum, n) = self
            .points
            .iter()
            .filter(|p| p.t >= from)
            .fold((0.0, 0usize), |(s, n), p| (s + p.mean * p.n as f64, n + p.n));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Per-step value targets of one record.
pub fn value_targets(record: &EpisodeRecord, gamma: f64, truth: GroundTruth) -> Option<Vec<f64>> {
    match truth {
        GroundTruth::ReturnToGo => Some(return_to_go(&record.rewards, gamma)),
        GroundTruth::MonteCarlo => record.mc_returns.clone(),
    }
}

fn step_error(v: f64, g: f64, kind: ErrorKind) -> f64 {
    match kind {
        ErrorKind::Absolute => (v - g).abs(),
        ErrorKind::Squared => (v - g) * (v - g),
    }
}

/// Per-timestep errors of every record that reached step `t`.
fn errors_by_step(records: &[EpisodeRecord], gamma: f64, kind: ErrorKind, truth: GroundTruth) -> Vec<Vec<f64>> {
    let mut by_t: Vec<Vec<f64>> = Vec::new();
    for r in records.iter().filter(|r| !r.values.is_empty()) {
        let Some(targets) = value_targets(r, gamma, truth) else { continue };
        for (t, (v, g)) in r.values.iter().zip(&targets).enumerate() {
            if by_t.len() <= t {
                by_t.resize_with(t + 1, Vec::new);
            }
            by_t[t].push(step_error(*v, *g, kind));
        }
    }
    by_t
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean, population std and count of the per-step value error, truncated
/// at the first step with fewer than `min_samples` episodes.
pub fn value_error_curve(
    records: &[EpisodeRecord],
    gamma: f64,
    kind: ErrorKind,
    truth: GroundTruth,
    min_samples: usize,
) -> ValueErrorCurve {
    let points = errors_by_step(records, gamma, kind, truth)
        .into_iter()
        .enumerate()
        .take_while(|(_, e)| e.len() >= min_samples.max(1))
        .map(|(t, e)| {
            let (mean, std) = mean_std(&e);
            CurvePoint { t, mean, std, n: e.len() }
        })
        .collect();
    ValueErrorCurve { points }
}

/// Late-step error of two evaluations run on the same episode list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedError {
    pub mean_a: f64,
    pub mean_b: f64,
    /// `(episode, t)` pairs compared.
    pub samples: usize,
}

/// Mean error over `t >= from` restricted to the steps both runs reached on
/// the same episode. Records pair by position and must share specs.
pub fn paired_value_error(
    a: &[EpisodeRecord],
    b: &[EpisodeRecord],
    gamma: f64,
    from: usize,
    kind: ErrorKind,
) -> crate::Result<PairedError> {
    if a.len() != b.len() {
        return Err(crate::Error::Contract(format!("{} vs {} records", a.len(), b.len())));
    }
    let (mut sa, mut sb, mut n) = (0.0, 0.0, 0usize);
    for (i, (ra, rb)) in a.iter().zip(b).enumerate() {
        if ra.spec != rb.spec {
            return Err(crate::Error::Contract(format!("episode {i} differs between runs")));
        }
        let ga = return_to_go(&ra.rewards, gamma);
        let gb = return_to_go(&rb.rewards, gamma);
        let both = ra.values.len().min(rb.values.len());
        for t in from..both {
            sa += step_error(ra.values[t], ga[t], kind);
            sb += step_error(rb.values[t], gb[t], kind);
            n += 1;
        }
    }
    if n == 0 {
        return Err(crate::Error::Contract(format!("no episode pair reaches step {from}")));
    }
    Ok(PairedError {
        mean_a: sa / n as f64,
        mean_b: sb / n as f64,
        samples: n,
    })
}

#[cfg(test)]
mod tests;
