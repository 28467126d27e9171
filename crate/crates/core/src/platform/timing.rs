//! Tile pipeline timing for one accelerator layer.
//!
//! With double buffering the DMA engine loads tile `i + 1` and writes back
//! tile `i - 1` while tile `i` computes. Stage `i` therefore lasts
//! `max(c_i, store_{i-1} + load_{i+1})`, bracketed by the first load and
//! the last store:
//!
//! ```text
//! total = setup + load_1 + Σ_i max(c_i, store_{i-1} + load_{i+1}) + store_n
//! ```

use serde::{Deserialize, Serialize};

use super::{effective_bandwidth, AccelConfig, TilePlan};
use crate::graph::LayerCost;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PipelineMode {
    /// DMA of neighbouring tiles overlaps the current tile's compute.
    DoubleBuffered,
    /// Load, compute and store of each tile run back to back.
    Serialized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileTiming {
    pub compute_s: f64,
    pub load_s: f64,
    pub store_s: f64,
}

impl TileTiming {
    pub fn transfer_s(&self) -> f64 {
        self.load_s + self.store_s
    }
}

/// Wall time of a layer together with its summed compute and DMA time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTime {
    pub seconds: f64,
    pub compute_s: f64,
    pub transfer_s: f64,
}

/// Per-tile compute and DMA durations. `input_load_fraction` is the share
/// of the input tensor that must be fetched from external memory; the rest
/// is already resident on chip.
pub fn tile_timings(
    plan: &TilePlan,
    cfg: &AccelConfig,
    input_load_fraction: f64,
) -> Vec<TileTiming> {
    let bandwidth = effective_bandwidth(cfg);
    plan.tiles
        .iter()
        .map(|t| TileTiming {
            compute_s: t.macs.div_ceil(cfg.num_macs) as f64 / cfg.clock_hz,
            load_s: (t.input_bytes as f64 * input_load_fraction + t.weight_bytes as f64)
                / bandwidth,
            store_s: t.output_bytes as f64 / bandwidth,
        })
        .collect()
}

/// Double-buffered time of a layer whose whole input comes from external
/// memory.
pub fn fpga_layer_time(cost: &LayerCost, plan: &TilePlan, cfg: &AccelConfig) -> LayerTime {
    debug_assert_eq!(plan.tiles.iter().map(|t| t.macs).sum::<u64>(), cost.macs);
    fpga_layer_time_with(plan, cfg, 1.0, PipelineMode::DoubleBuffered)
}

pub fn fpga_layer_time_with(
    plan: &TilePlan,
    cfg: &AccelConfig,
    input_load_fraction: f64,
    mode: PipelineMode,
) -> LayerTime {
    let timings = tile_timings(plan, cfg, input_load_fraction);
    let compute_s = timings.iter().map(|t| t.compute_s).sum();
    let transfer_s = timings.iter().map(TileTiming::transfer_s).sum();
    let body = match mode {
        PipelineMode::Serialized => compute_s + transfer_s,
        PipelineMode::DoubleBuffered => {
            let n = timings.len();
            let mut total = timings[0].load_s + timings[n - 1].store_s;
            for i in 0..n {
                let store_prev = if i > 0 { timings[i - 1].store_s } else { 0.0 };
                let load_next = timings.get(i + 1).map_or(0.0, |t| t.load_s);
                total += timings[i].compute_s.max(store_prev + load_next);
            }
            total
        }
    };
    LayerTime {
        seconds: cfg.per_layer_setup_s + body,
        compute_s,
        transfer_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineStage {
    Load,
    Compute,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineEvent {
    pub stage: PipelineStage,
    pub tile: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// Explicit event list of the tile pipeline, starting at `start_s`.
/// Zero-length events are omitted. Returns the events and the end time.
pub fn pipeline_schedule(
    timings: &[TileTiming],
    setup_s: f64,
    start_s: f64,
    mode: PipelineMode,
) -> (Vec<PipelineEvent>, f64) {
    let mut events = Vec::with_capacity(timings.len() * 3);
    let mut emit = |stage, tile, start: f64, dur: f64| {
        if dur > 0.0 {
            events.push(PipelineEvent {
                stage,
                tile,
                start_s: start,
                end_s: start + dur,
            });
        }
        start + dur
    };

    let mut now = start_s + setup_s;
    match mode {
        PipelineMode::Serialized => {
            for (i, t) in timings.iter().enumerate() {
                now = emit(PipelineStage::Load, i, now, t.load_s);
                now = emit(PipelineStage::Compute, i, now, t.compute_s);
                now = emit(PipelineStage::Store, i, now, t.store_s);
            }
        }
        PipelineMode::DoubleBuffered => {
            let n = timings.len();
            let mut stage_start = emit(PipelineStage::Load, 0, now, timings[0].load_s);
            for i in 0..n {
                let compute_end =
                    emit(PipelineStage::Compute, i, stage_start, timings[i].compute_s);
                let mut dma = stage_start;
                if i > 0 {
                    dma = emit(PipelineStage::Store, i - 1, dma, timings[i - 1].store_s);
                }
                if i + 1 < n {
                    dma = emit(PipelineStage::Load, i + 1, dma, timings[i + 1].load_s);
                }
                stage_start = compute_end.max(dma);
            }
            now = emit(
                PipelineStage::Store,
                n - 1,
                stage_start,
                timings[n - 1].store_s,
            );
        }
    }
    (events, now)
}
