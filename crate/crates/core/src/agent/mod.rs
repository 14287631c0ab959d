//! Deep Q-learning agents over the push action space.
//!
//! [`SplitAgent`] scores every action with a small network per push
//! primitive, fed the feature vector of the action's orientation.
//! [`VanillaAgent`] is the monolithic baseline: one network over the whole
//! concatenated state with one output per action.

mod replay;
mod schedule;
mod split;
mod vanilla;

use std::path::PathBuf;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use replay::{ReplayBuffer, Transition};
pub use schedule::EpsilonSchedule;
pub use split::{PrimitiveNet, SplitAgent};
pub use vanilla::VanillaAgent;

use crate::features::State;
use crate::nn::CheckpointError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("network shape mismatch: expected {expected:?}, found {found:?}")]
    Shape { expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Learning hyperparameters shared by both agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Hidden widths of each per-primitive network.
    pub split_hidden: Vec<usize>,
    /// Hidden widths of the monolithic network.
    pub vanilla_hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            lr: 0.001,
            tau: 0.005,
            batch_size: 64,
            buffer_capacity: 20_000,
            split_hidden: vec![100, 100],
            vanilla_hidden: vec![140, 140],
        }
    }
}

/// What the training loop and evaluation need from a Q-learning agent.
pub trait QAgent {
    fn name(&self) -> &str;
    /// Orientations per primitive.
    fn w(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Online Q-value of every action.
    fn q_values(&self, state: &State) -> Vec<f64>;
    fn store(&mut self, t: Transition);
    /// One gradient step triggered by exploring action `explored_u`.
    /// `None` when the relevant buffer holds fewer than a batch.
    fn train_step(&mut self, explored_u: usize, rng: &mut dyn RngCore) -> Option<f64>;
    fn buffer_lens(&self) -> Vec<usize>;
    fn schedule(&self) -> &EpsilonSchedule;
    fn set_schedule(&mut self, schedule: EpsilonSchedule);
    /// Environment steps taken under the ε schedule so far.
    fn global_step(&self) -> u64;
    fn set_global_step(&mut self, t: u64);
    /// Writes networks, optimizer state and a manifest into `dir`.
    fn save(&self, dir: &std::path::Path) -> Result<(), AgentError>;

    fn greedy_action(&self, state: &State) -> usize {
        argmax(&self.q_values(state))
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice at global step `t`.
pub fn select_action<A: QAgent + ?Sized, R: Rng + ?Sized>(
    agent: &A,
    state: &State,
    t: u64,
    schedule: &EpsilonSchedule,
    rng: &mut R,
) -> usize {
    let explore = rng.gen::<f64>() < schedule.value(t);
    // Draw the random action either way so the stream stays aligned.
    let random = rng.gen_range(0..agent.n_actions());
    if explore {
        random
    } else {
        agent.greedy_action(state)
    }
}

/// On-disk description of a saved agent; network files sit next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub w: usize,
    pub primitives: Vec<String>,
    pub files: Vec<String>,
    pub config: AgentConfig,
    pub schedule: ScheduleState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
    pub global_step: u64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub(crate) fn read_manifest(dir: &std::path::Path) -> Result<Manifest, AgentError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| AgentError::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| AgentError::Manifest {
        path,
        message: e.to_string(),
    })
}

pub(crate) fn write_manifest(dir: &std::path::Path, m: &Manifest) -> Result<(), AgentError> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.5; 16]), 0);
        assert_eq!(argmax(&[-1.0, -0.5]), 1);
    }
}
