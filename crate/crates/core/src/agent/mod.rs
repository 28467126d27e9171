//! Tabular Q-learning placement agent with a frozen target table, plus the
//! threshold heuristic and exhaustive oracle it is measured against.

mod baseline;
mod qtable;
mod train;

pub use baseline::{
    best_threshold_heuristic, brute_force_partition, heuristic_baseline, HeuristicResult,
    OracleResult,
};
pub use qtable::QTablePair;
pub use train::{greedy_assignment, train_agent, TrainOutcome};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LayerCost;
use crate::platform::{minimal_tile_bytes, AccelConfig};
use crate::sim::Placement;
use crate::Scalar;

/// Largest graph the exhaustive oracle accepts by default.
pub const DEFAULT_MAX_ORACLE_LAYERS: usize = 14;

/// Intensity range spanned by the log-spaced bucket edges, in MACs/byte.
const INTENSITY_LO: f64 = 0.25;
const INTENSITY_HI: f64 = 256.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("graph has {layers} layers, the oracle enumerates at most {max}")]
    TooManyLayers { layers: usize, max: usize },
    #[error("invalid agent parameter {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("q-table: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionChoice {
    RunOnCpu,
    OffloadToFpga,
}

impl ActionChoice {
    pub const ALL: [ActionChoice; 2] = [ActionChoice::RunOnCpu, ActionChoice::OffloadToFpga];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn placement(self) -> Placement {
        match self {
            ActionChoice::RunOnCpu => Placement::Cpu,
            ActionChoice::OffloadToFpga => Placement::Fpga,
        }
    }
}

/// Observation for one placement decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub layer_index: usize,
    pub prev_placement: Option<Placement>,
    pub intensity_bucket: u8,
    /// 0: under a quarter of the buffer, 1: under half, 2: fits, 3: does not fit.
    pub occupancy_bucket: u8,
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prev = self
            .prev_placement
            .map_or_else(|| "none".to_string(), |p| p.to_string());
        write!(
            f,
            "{} {} {} {}",
            self.layer_index, prev, self.intensity_bucket, self.occupancy_bucket
        )
    }
}

/// Bucket of a MACs/byte intensity among `buckets` log-spaced classes. The
/// `buckets - 1` edges run geometrically from 0.25 to 256; zero intensity
/// lands in bucket 0.
pub fn intensity_bucket(intensity: f64, buckets: usize) -> u8 {
    assert!(buckets >= 2, "need at least two intensity buckets");
    let steps = (buckets - 2).max(1) as f64;
    let ratio = INTENSITY_HI / INTENSITY_LO;
    (0..buckets - 1)
        .filter(|&k| intensity >= INTENSITY_LO * ratio.powf(k as f64 / steps))
        .count() as u8
}

pub fn occupancy_bucket(fraction: f64) -> u8 {
    match fraction {
        f if f < 0.25 => 0,
        f if f < 0.5 => 1,
        f if f <= 1.0 => 2,
        _ => 3,
    }
}

pub fn encode_state(
    costs: &[LayerCost],
    layer_index: usize,
    prev_placement: Option<Placement>,
    accel: &AccelConfig,
    intensity_buckets: usize,
) -> AgentState {
    let cost = &costs[layer_index];
    AgentState {
        layer_index,
        prev_placement,
        intensity_bucket: intensity_bucket(cost.arithmetic_intensity, intensity_buckets),
        occupancy_bucket: occupancy_bucket(
            minimal_tile_bytes(cost) as f64 / accel.onchip_buffer_bytes as f64,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Per-episode multiplicative decay of epsilon.
    pub epsilon_decay: f64,
    /// TD updates between target-table syncs.
    pub sync_period_n: usize,
    pub episodes: usize,
    /// Weight of energy (J) against makespan (s) in the objective.
    pub reward_energy_weight: f64,
    pub rng_seed: u64,
    pub intensity_buckets: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.995,
            sync_period_n: 100,
            episodes: 2000,
            reward_energy_weight: 0.0,
            rng_seed: 0,
            intensity_buckets: 8,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |field, reason: &str| {
            Err(AgentError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", "must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        for (field, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(field, "must lie in [0, 1]");
            }
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon_end", "must not exceed epsilon_start");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay", "must lie in (0, 1]");
        }
        if self.sync_period_n == 0 {
            return bad("sync_period_n", "must be at least 1");
        }
        if !(self.reward_energy_weight >= 0.0 && self.reward_energy_weight.is_finite()) {
            return bad("reward_energy_weight", "must be non-negative");
        }
        if self.intensity_buckets < 2 || self.intensity_buckets > 64 {
            return bad("intensity_buckets", "must lie in [2, 64]");
        }
        Ok(())
    }
}

/// Epsilon-greedy choice over the primary table. One uniform draw decides
/// between exploring and exploiting; exploring draws the action uniformly.
/// Exploitation breaks ties toward the host.
pub fn select_action<T: Scalar, R: Rng>(
    q: &QTablePair<T>,
    s: &AgentState,
    epsilon: f64,
    rng: &mut R,
) -> ActionChoice {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.gen::<f64>() < epsilon {
        return if rng.gen::<bool>() {
            ActionChoice::OffloadToFpga
        } else {
            ActionChoice::RunOnCpu
        };
    }
    greedy_action(q, s)
}

pub fn greedy_action<T: Scalar>(q: &QTablePair<T>, s: &AgentState) -> ActionChoice {
    let [cpu, fpga] = q.primary(s);
    if fpga > cpu {
        ActionChoice::OffloadToFpga
    } else {
        ActionChoice::RunOnCpu
    }
}

/// One temporal-difference step against the frozen target table:
/// `Q_A[s][a] += alpha * (r + gamma * max_a' Q_B[s'][a'] - Q_A[s][a])`.
/// A terminal `s_next` contributes no future value. Every `sync_period_n`
/// updates the target becomes a copy of the primary table.
pub fn td_update<T: Scalar>(
    q: &mut QTablePair<T>,
    s: &AgentState,
    a: ActionChoice,
    reward: T,
    s_next: Option<&AgentState>,
    cfg: &AgentConfig,
) {
    let future = s_next.map_or(T::zero(), |n| {
        let [c, f] = q.target(n);
        c.max(f)
    });
    let (alpha, gamma) = (T::of(cfg.alpha), T::of(cfg.gamma));
    let entry = q.primary_mut(*s);
    let current = entry[a.index()];
    entry[a.index()] = current + alpha * (reward + gamma * future - current);
    q.steps_since_sync += 1;
    if q.steps_since_sync >= cfg.sync_period_n {
        q.sync_target();
    }
}

#[cfg(test)]
mod tests;
