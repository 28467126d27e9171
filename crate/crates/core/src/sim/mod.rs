//! Deterministic list-scheduling simulation of a frozen placement.
//!
//! Layers are issued in storage order. A layer starts once its inputs are
//! ready and its resources are free: host layers hold the host, accelerator
//! layers hold the accelerator and its single DMA engine for their whole
//! tile pipeline. A tensor crossing between host and accelerator memory is
//! copied once per destination side by the DMA engine. The graph input and
//! the final output are assumed to live wherever they are needed.
//!
//! An accelerator layer whose immediate storage predecessor also ran on the
//! accelerator finds that tensor still on chip when the tensor plus its own
//! smallest tile fit the buffer; it then skips loading that part of its
//! input.

mod report;

pub use report::{compare_reports, report_metrics, Comparison, PlacementCounts, RunReport};

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{graph_costs, LayerCost, ModelGraph};
use crate::platform::{
    effective_bandwidth, fpga_layer_time_with, host_layer_time, minimal_tile_bytes,
    pipeline_schedule, plan_tiles, tile_timings, AccelConfig, HostConfig, LayerTime, PipelineMode,
    PipelineStage, PlatformSet, TilePlan,
};
use crate::Error as CrateError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("layer {layer} is placed on the accelerator but cannot be tiled into its buffer")]
    InfeasibleAssignment { layer: usize },
    #[error("assignment covers {found} layers, graph has {expected}")]
    AssignmentLength { expected: usize, found: usize },
    #[error("graph: {0}")]
    Graph(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Placement {
    Cpu,
    Fpga,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Cpu => "cpu",
            Placement::Fpga => "fpga",
        })
    }
}

/// One placement per layer, in storage order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub placements: Vec<Placement>,
}

impl Assignment {
    pub fn uniform(len: usize, placement: Placement) -> Self {
        Self {
            placements: vec![placement; len],
        }
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn count(&self, placement: Placement) -> usize {
        self.placements.iter().filter(|&&p| p == placement).count()
    }

    /// Assignment number `bits` of the 2^L enumeration: bit `i` set puts
    /// layer `i` on the accelerator.
    pub fn from_bits(len: usize, bits: u64) -> Self {
        Self {
            placements: (0..len)
                .map(|i| {
                    if bits >> i & 1 == 1 {
                        Placement::Fpga
                    } else {
                        Placement::Cpu
                    }
                })
                .collect(),
        }
    }
}

/// Which calibrated host runs the host-side layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HostKind {
    Cpu,
    Gpu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub host: HostKind,
    pub pipeline: PipelineMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            host: HostKind::Cpu,
            pipeline: PipelineMode::DoubleBuffered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resource {
    CpuCompute,
    FpgaCompute,
    DmaIn,
    DmaOut,
}

impl Resource {
    pub fn label(self) -> &'static str {
        match self {
            Resource::CpuCompute => "CpuCompute",
            Resource::FpgaCompute => "FpgaCompute",
            Resource::DmaIn => "DmaIn",
            Resource::DmaOut => "DmaOut",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub resource: Resource,
    pub layer_id: usize,
    /// Tile index, or `None` for a whole-layer segment.
    pub tile: Option<usize>,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub segments: Vec<Segment>,
}

impl Timeline {
    /// Segments on `resource`, sorted by start time.
    pub fn on(&self, resource: Resource) -> Vec<Segment> {
        let mut v: Vec<_> = self
            .segments
            .iter()
            .filter(|s| s.resource == resource)
            .copied()
            .collect();
        v.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        v
    }

    /// Total busy time per resource.
    pub fn busy(&self, resource: Resource) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.resource == resource)
            .map(|s| s.end_s - s.start_s)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("resource,layer,tile,start_s,end_s\n");
        for s in &self.segments {
            let tile = s
                .tile
                .map_or_else(|| "whole".to_string(), |t| t.to_string());
            out.push_str(&format!(
                "{},{},{},{:e},{:e}\n",
                s.resource.label(),
                s.layer_id,
                tile,
                s.start_s,
                s.end_s
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CrateError> {
        let mut file = std::fs::File::create(path).map_err(|e| CrateError::io(path, e))?;
        file.write_all(self.to_csv().as_bytes())
            .map_err(|e| CrateError::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub timeline: Timeline,
    pub makespan_s: f64,
    pub energy_j: f64,
    pub host_busy_s: f64,
    /// Accelerator layer time plus boundary DMA time.
    pub fpga_busy_s: f64,
    pub assignment: Assignment,
    pub host: HostKind,
}

/// Accelerator view of one layer.
#[derive(Debug, Clone)]
struct FpgaLayer {
    plan: TilePlan,
    full: LayerTime,
    /// Time and load fraction when the immediate predecessor is on chip.
    resident: Option<(LayerTime, f64)>,
}

/// Per-layer timing tables for one graph and platform set; shared by every
/// simulation of that pair.
#[derive(Debug, Clone)]
pub struct SimModel {
    pub costs: Vec<LayerCost>,
    ids: Vec<usize>,
    preds: Vec<Vec<usize>>,
    host_time: Vec<f64>,
    fpga: Vec<Option<FpgaLayer>>,
    /// Smallest tile as a fraction of the buffer, per layer.
    pub occupancy: Vec<f64>,
    bandwidth: f64,
    accel: AccelConfig,
    host: HostConfig,
    pub options: SimOptions,
}

impl SimModel {
    pub fn new(
        graph: &ModelGraph,
        platforms: &PlatformSet,
        options: SimOptions,
    ) -> Result<Self, SimError> {
        let accel = platforms.accelerator.clone();
        let host = match options.host {
            HostKind::Cpu => platforms.hosts.cpu.clone(),
            HostKind::Gpu => platforms.hosts.gpu.clone(),
        };
        let costs = graph_costs(graph, accel.bytes_per_element)
            .map_err(|e| SimError::Graph(e.to_string()))?;
        let preds = graph.predecessor_positions();
        let capacity = accel.onchip_buffer_bytes;
        let mut fpga = Vec::with_capacity(costs.len());
        for (i, cost) in costs.iter().enumerate() {
            let entry = plan_tiles(cost, &accel).ok().map(|plan| {
                let full = fpga_layer_time_with(&plan, &accel, 1.0, options.pipeline);
                let resident = (i > 0
                    && preds[i].contains(&(i - 1))
                    && costs[i - 1].output_bytes + minimal_tile_bytes(cost) <= capacity
                    && cost.input_bytes > 0)
                    .then(|| {
                        let fraction = (1.0
                            - costs[i - 1].output_bytes as f64 / cost.input_bytes as f64)
                            .max(0.0);
                        (
                            fpga_layer_time_with(&plan, &accel, fraction, options.pipeline),
                            fraction,
                        )
                    });
                FpgaLayer {
                    plan,
                    full,
                    resident,
                }
            });
            fpga.push(entry);
        }
        Ok(Self {
            occupancy: costs
                .iter()
                .map(|c| minimal_tile_bytes(c) as f64 / capacity as f64)
                .collect(),
            host_time: costs.iter().map(|c| host_layer_time(c, &host)).collect(),
            ids: graph.layers.iter().map(|l| l.id).collect(),
            bandwidth: effective_bandwidth(&accel),
            costs,
            preds,
            fpga,
            accel,
            host,
            options,
        })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn tileable(&self, pos: usize) -> bool {
        self.fpga[pos].is_some()
    }

    pub fn host(&self) -> &HostConfig {
        &self.host
    }

    pub fn accel(&self) -> &AccelConfig {
        &self.accel
    }

    /// Energy of a run of length `makespan` with the given busy times.
    pub fn energy(&self, makespan: f64, host_busy: f64, fpga_busy: f64) -> f64 {
        self.host.power_w * host_busy
            + self.host.idle_power_w * (makespan - host_busy)
            + self.accel.active_power_w * fpga_busy
            + self.accel.idle_power_w * (makespan - fpga_busy)
    }

    pub fn stepper(&self, record: bool) -> Stepper<'_> {
        Stepper {
            model: self,
            placements: Vec::with_capacity(self.len()),
            finish: Vec::with_capacity(self.len()),
            copied: Vec::with_capacity(self.len()),
            host_free: 0.0,
            fpga_free: 0.0,
            makespan: 0.0,
            host_busy: 0.0,
            fpga_busy: 0.0,
            timeline: record.then(Timeline::default),
        }
    }

    pub fn simulate(&self, assignment: &Assignment, record: bool) -> Result<SimResult, SimError> {
        if assignment.len() != self.len() {
            return Err(SimError::AssignmentLength {
                expected: self.len(),
                found: assignment.len(),
            });
        }
        let mut stepper = self.stepper(record);
        for &p in &assignment.placements {
            stepper.step(p)?;
        }
        Ok(stepper.finish())
    }

    /// `makespan + lambda * energy` of an assignment.
    pub fn objective(&self, assignment: &Assignment, lambda: f64) -> Result<f64, SimError> {
        let r = self.simulate(assignment, false)?;
        Ok(objective(r.makespan_s, r.energy_j, lambda))
    }
}

pub fn objective(makespan_s: f64, energy_j: f64, lambda: f64) -> f64 {
    makespan_s + lambda * energy_j
}

/// Change in makespan and energy caused by placing one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDelta {
    pub makespan_s: f64,
    pub energy_j: f64,
}

/// Incremental simulation: places layers one at a time in storage order.
/// The deltas of all steps sum to the final makespan and energy.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    model: &'a SimModel,
    placements: Vec<Placement>,
    finish: Vec<f64>,
    /// Whether a layer's output already has a copy on the other side.
    copied: Vec<Option<f64>>,
    host_free: f64,
    /// The accelerator and its DMA engine are released together.
    fpga_free: f64,
    makespan: f64,
    host_busy: f64,
    fpga_busy: f64,
    timeline: Option<Timeline>,
}

impl Stepper<'_> {
    pub fn position(&self) -> usize {
        self.placements.len()
    }

    pub fn prev_placement(&self) -> Option<Placement> {
        self.placements.last().copied()
    }

    pub fn makespan(&self) -> f64 {
        self.makespan
    }

    pub fn energy(&self) -> f64 {
        self.model
            .energy(self.makespan, self.host_busy, self.fpga_busy)
    }

    fn push(
        &mut self,
        resource: Resource,
        pos: usize,
        tile: Option<usize>,
        start_s: f64,
        end_s: f64,
    ) {
        if let Some(t) = &mut self.timeline {
            t.segments.push(Segment {
                resource,
                layer_id: self.model.ids[pos],
                tile,
                start_s,
                end_s,
            });
        }
    }

    /// Time at which the output of `producer` is available on the side of
    /// `placement`, issuing a boundary copy on first use.
    fn ready_on(&mut self, producer: usize, placement: Placement) -> f64 {
        if self.placements[producer] == placement {
            return self.finish[producer];
        }
        if let Some(t) = self.copied[producer] {
            return t;
        }
        let duration = self.model.costs[producer].output_bytes as f64 / self.model.bandwidth;
        let start = self.finish[producer].max(self.fpga_free);
        let end = start + duration;
        self.fpga_free = end;
        self.fpga_busy += duration;
        let resource = match placement {
            Placement::Fpga => Resource::DmaIn,
            Placement::Cpu => Resource::DmaOut,
        };
        self.push(resource, producer, None, start, end);
        self.copied[producer] = Some(end);
        self.makespan = self.makespan.max(end);
        end
    }

    pub fn step(&mut self, placement: Placement) -> Result<StepDelta, SimError> {
        let model = self.model;
        let pos = self.position();
        assert!(pos < model.len(), "every layer is already placed");
        if placement == Placement::Fpga && model.fpga[pos].is_none() {
            return Err(SimError::InfeasibleAssignment {
                layer: model.ids[pos],
            });
        }
        let before = (self.makespan, self.energy());

        let mut ready = 0.0f64;
        for k in 0..model.preds[pos].len() {
            let p = model.preds[pos][k];
            ready = ready.max(self.ready_on(p, placement));
        }

        let end = match placement {
            Placement::Cpu => {
                let start = ready.max(self.host_free);
                let end = start + model.host_time[pos];
                self.host_free = end;
                self.host_busy += model.host_time[pos];
                self.push(Resource::CpuCompute, pos, None, start, end);
                end
            }
            Placement::Fpga => {
                let layer = model.fpga[pos].as_ref().expect("checked above");
                let resident = pos > 0 && self.placements[pos - 1] == Placement::Fpga;
                let (time, fraction) = match (&layer.resident, resident) {
                    (Some((t, f)), true) => (*t, *f),
                    _ => (layer.full, 1.0),
                };
                let start = ready.max(self.fpga_free);
                let end = start + time.seconds;
                if self.timeline.is_some() {
                    let timings = tile_timings(&layer.plan, &model.accel, fraction);
                    let (events, _) = pipeline_schedule(
                        &timings,
                        model.accel.per_layer_setup_s,
                        start,
                        model.options.pipeline,
                    );
                    for e in events {
                        let resource = match e.stage {
                            PipelineStage::Load => Resource::DmaIn,
                            PipelineStage::Compute => Resource::FpgaCompute,
                            PipelineStage::Store => Resource::DmaOut,
                        };
                        self.push(resource, pos, Some(e.tile), e.start_s, e.end_s);
                    }
                }
                self.fpga_free = end;
                self.fpga_busy += time.seconds;
                end
            }
        };
        self.placements.push(placement);
        self.finish.push(end);
        self.copied.push(None);
        self.makespan = self.makespan.max(end);
        Ok(StepDelta {
            makespan_s: self.makespan - before.0,
            energy_j: self.energy() - before.1,
        })
    }

    pub fn finish(self) -> SimResult {
        assert_eq!(
            self.placements.len(),
            self.model.len(),
            "not every layer is placed"
        );
        let energy_j = self.energy();
        SimResult {
            timeline: self.timeline.unwrap_or_default(),
            makespan_s: self.makespan,
            energy_j,
            host_busy_s: self.host_busy,
            fpga_busy_s: self.fpga_busy,
            assignment: Assignment {
                placements: self.placements,
            },
            host: self.model.options.host,
        }
    }
}

/// One-shot simulation with the CPU host and double buffering.
pub fn simulate_assignment(
    graph: &ModelGraph,
    assignment: &Assignment,
    platforms: &PlatformSet,
) -> Result<SimResult, SimError> {
    SimModel::new(graph, platforms, SimOptions::default())?.simulate(assignment, true)
}
