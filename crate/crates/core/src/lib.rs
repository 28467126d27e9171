//! Co-design simulator for agent-driven CPU/FPGA inference.
//!
//! The crate partitions a layer graph between calibrated host models and a
//! parameterized accelerator, learns the partition with tabular Q-learning,
//! simulates tiled double-buffered execution and checks 8-bit accuracy
//! fidelity against a float reference.

pub mod agent;
pub mod graph;
pub mod harness;
pub mod platform;
pub mod quant;
mod scalar;
pub mod sim;
pub mod synth;

use std::path::{Path, PathBuf};

pub use scalar::Scalar;

use thiserror::Error;

/// Top-level error, one variant per subsystem plus file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Platform(#[from] platform::PlatformError),
    #[error(transparent)]
    Quant(#[from] quant::QuantError),
    #[error(transparent)]
    Agent(#[from] agent::AgentError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Config(#[from] harness::ConfigError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Tensor32 = quant::Tensor<f32>;
pub type Tensor64 = quant::Tensor<f64>;
pub type FloatWeights32 = quant::FloatWeights<f32>;
pub type ModelWeights32 = quant::ModelWeights<f32>;
pub type Dataset32 = quant::Dataset<f32>;
pub type QTable = agent::QTablePair<f64>;
pub type TrainOutcome64 = agent::TrainOutcome<f64>;
