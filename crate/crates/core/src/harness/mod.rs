//! Benchmark configuration, per-mode runs, claim checks and report output.

mod claims;
mod config;
mod report;
mod run;

pub use claims::{verify_claims, Claim, ClaimChecklist, ClaimStatus, SPEEDUP_TARGET};
pub use config::{
    BenchmarkConfig, Mode, ModelSection, OutputSection, PlatformSection, QuantSection,
    BUILTIN_PREFIX,
};
pub use report::{emit_report, load_reports_json, render_report, ReportFormat};
pub use run::{benchmark_accuracy, resolve_assignment, run_benchmark, run_with, BenchOutcome};

use std::path::PathBuf;

use thiserror::Error;

use crate::agent::AgentError;
use crate::sim::SimError;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}: {field}: {reason}", path.display())]
pub struct ConfigError {
    pub path: PathBuf,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("no report labelled {label}")]
    MissingReport { label: String },
    #[error("accelerator needs {:.1}% of the device; it does not fit", utilization * 100.0)]
    ResourcesExceeded { utilization: f64 },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CLAIM_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Process exit code for a failed run: infeasible placements, oversized
/// accelerators and graphs too large for the oracle map to 3, everything
/// else to 2.
pub fn exit_code(err: &crate::Error) -> i32 {
    match err {
        crate::Error::Sim(SimError::InfeasibleAssignment { .. })
        | crate::Error::Agent(AgentError::TooManyLayers { .. })
        | crate::Error::Harness(HarnessError::ResourcesExceeded { .. }) => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

#[cfg(test)]
mod tests;
