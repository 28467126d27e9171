use serde::{Deserialize, Serialize};

use super::{HostKind, Placement, SimResult};
use crate::platform::PlatformSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementCounts {
    pub cpu: usize,
    pub gpu: usize,
    pub fpga: usize,
}

/// Per-image metrics in the shape of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub latency_ms_per_image: f64,
    pub throughput_images_per_s: f64,
    /// Energy over makespan, so mixed runs are time-weighted.
    pub power_w: f64,
    pub energy_j_per_image: f64,
    pub efficiency_images_per_s_per_w: f64,
    pub stream_overhead_ms: f64,
    pub assignment_summary: PlacementCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1_accuracy: Option<f64>,
}

/// Per-image stream overhead of the platform that carries the run: the
/// accelerator's when any layer is offloaded, otherwise the host's.
pub fn stream_overhead_s(sim: &SimResult, platforms: &PlatformSet) -> f64 {
    if sim.assignment.count(Placement::Fpga) > 0 {
        platforms.accelerator.per_image_stream_overhead_s
    } else {
        match sim.host {
            HostKind::Cpu => platforms.hosts.cpu.per_image_stream_overhead_s,
            HostKind::Gpu => platforms.hosts.gpu.per_image_stream_overhead_s,
        }
    }
}

pub fn report_metrics(label: &str, sim: &SimResult, platforms: &PlatformSet) -> RunReport {
    assert!(sim.makespan_s > 0.0, "a report needs a positive makespan");
    let latency_ms = sim.makespan_s * 1000.0;
    let overhead_ms = stream_overhead_s(sim, platforms) * 1000.0;
    let throughput = 1000.0 / (latency_ms + overhead_ms);
    let power = sim.energy_j / sim.makespan_s;
    let host_layers = sim.assignment.count(Placement::Cpu);
    RunReport {
        label: label.to_string(),
        latency_ms_per_image: latency_ms,
        throughput_images_per_s: throughput,
        power_w: power,
        energy_j_per_image: sim.energy_j,
        efficiency_images_per_s_per_w: throughput / power,
        stream_overhead_ms: overhead_ms,
        assignment_summary: PlacementCounts {
            cpu: if sim.host == HostKind::Cpu {
                host_layers
            } else {
                0
            },
            gpu: if sim.host == HostKind::Gpu {
                host_layers
            } else {
                0
            },
            fpga: sim.assignment.count(Placement::Fpga),
        },
        top1_accuracy: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub latency_speedup: f64,
    pub efficiency_ratio: f64,
}

pub fn compare_reports(baseline: &RunReport, candidate: &RunReport) -> Comparison {
    Comparison {
        latency_speedup: baseline.latency_ms_per_image / candidate.latency_ms_per_image,
        efficiency_ratio: candidate.efficiency_images_per_s_per_w
            / baseline.efficiency_images_per_s_per_w,
    }
}
