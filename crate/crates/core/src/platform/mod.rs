//! Accelerator and host performance, power and resource models.
//!
//! The FPGA side is parameterized (MAC array, clock, on-chip buffer, bus);
//! the CPU and GPU hosts are calibrated throughput/overhead models.

mod tiling;
mod timing;

pub use tiling::{minimal_tile_bytes, plan_tiles, Tile, TilePlan};
pub use timing::{
    fpga_layer_time, fpga_layer_time_with, pipeline_schedule, tile_timings, LayerTime,
    PipelineEvent, PipelineMode, PipelineStage, TileTiming,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::LayerCost;
use crate::Error;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PlatformError {
    #[error("invalid platform parameter {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error(
        "layer untileable: minimal tile needs {minimal_tile_bytes} bytes, buffer holds {capacity}"
    )]
    LayerUntileable {
        minimal_tile_bytes: u64,
        capacity: u64,
    },
}

fn invalid(field: &str, reason: &str) -> PlatformError {
    PlatformError::Invalid {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

/// FPGA logic, arithmetic and memory resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceCapacity {
    pub luts: u64,
    pub dsps: u64,
    pub bram_blocks: u64,
}

/// Parameterized accelerator model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelConfig {
    pub name: String,
    /// Parallel MAC units.
    pub num_macs: u64,
    pub clock_hz: f64,
    /// Capacity shared by the input, weight and output tiles.
    pub onchip_buffer_bytes: u64,
    pub bus_width_bits: u64,
    pub bus_transfers_per_sec: f64,
    /// Sustained fraction of the peak bus rate, in (0, 1].
    pub bus_utilization: f64,
    pub active_power_w: f64,
    #[serde(default)]
    pub idle_power_w: f64,
    /// Fixed cost of invoking the accelerator for one layer.
    pub per_layer_setup_s: f64,
    /// Steady-state per-image overhead added when computing throughput.
    #[serde(default)]
    pub per_image_stream_overhead_s: f64,
    /// Element width of activations and weights on the device.
    #[serde(default = "default_bytes_per_element")]
    pub bytes_per_element: u64,
    /// External memory attached to the device, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dram_bytes: Option<u64>,
    pub device_capacity: DeviceCapacity,
    pub bram_block_bytes: u64,
    #[serde(default = "default_dsps_per_mac")]
    pub dsps_per_mac: u64,
    #[serde(default)]
    pub lut_base: u64,
    #[serde(default)]
    pub lut_per_mac: u64,
}

fn default_bytes_per_element() -> u64 {
    1
}

fn default_dsps_per_mac() -> u64 {
    1
}

impl AccelConfig {
    pub fn validate(&self) -> Result<(), PlatformError> {
        if self.num_macs < 1 {
            return Err(invalid("num_macs", "must be at least 1"));
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return Err(invalid("clock_hz", "must be positive"));
        }
        if self.onchip_buffer_bytes < 1 {
            return Err(invalid("onchip_buffer_bytes", "must be at least 1"));
        }
        if self.bus_width_bits < 1 {
            return Err(invalid("bus_width_bits", "must be at least 1"));
        }
        if !(self.bus_transfers_per_sec > 0.0 && self.bus_transfers_per_sec.is_finite()) {
            return Err(invalid("bus_transfers_per_sec", "must be positive"));
        }
        if !(self.bus_utilization > 0.0 && self.bus_utilization <= 1.0) {
            return Err(invalid("bus_utilization", "must lie in (0, 1]"));
        }
        if !(self.idle_power_w >= 0.0 && self.active_power_w >= self.idle_power_w) {
            return Err(invalid(
                "active_power_w",
                "requires active_power_w >= idle_power_w >= 0",
            ));
        }
        for (field, v) in [
            ("per_layer_setup_s", self.per_layer_setup_s),
            (
                "per_image_stream_overhead_s",
                self.per_image_stream_overhead_s,
            ),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(field, "must be a non-negative duration"));
            }
        }
        if self.bytes_per_element < 1 {
            return Err(invalid("bytes_per_element", "must be at least 1"));
        }
        if self.bram_block_bytes < 1 {
            return Err(invalid("bram_block_bytes", "must be at least 1"));
        }
        let cap = self.device_capacity;
        if cap.luts == 0 || cap.dsps == 0 || cap.bram_blocks == 0 {
            return Err(invalid(
                "device_capacity",
                "every capacity must be positive",
            ));
        }
        Ok(())
    }

    pub fn effective_bandwidth(&self) -> f64 {
        effective_bandwidth(self)
    }
}

/// Sustained DMA bandwidth in bytes/s: bus width in bytes times transfer
/// rate, derated by the utilization factor.
pub fn effective_bandwidth(cfg: &AccelConfig) -> f64 {
    (cfg.bus_width_bits as f64 / 8.0) * cfg.bus_transfers_per_sec * cfg.bus_utilization
}

/// Calibrated host (CPU or GPU) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostConfig {
    pub name: String,
    pub effective_macs_per_sec: f64,
    pub per_layer_overhead_s: f64,
    pub per_image_stream_overhead_s: f64,
    pub power_w: f64,
    #[serde(default)]
    pub idle_power_w: f64,
}

impl HostConfig {
    pub fn validate(&self) -> Result<(), PlatformError> {
        if !(self.effective_macs_per_sec > 0.0 && self.effective_macs_per_sec.is_finite()) {
            return Err(invalid("effective_macs_per_sec", "must be positive"));
        }
        for (field, v) in [
            ("per_layer_overhead_s", self.per_layer_overhead_s),
            (
                "per_image_stream_overhead_s",
                self.per_image_stream_overhead_s,
            ),
            ("power_w", self.power_w),
            ("idle_power_w", self.idle_power_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(field, "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Time for a host to run one layer: dispatch overhead plus MACs at the
/// sustained rate.
pub fn host_layer_time(cost: &LayerCost, cfg: &HostConfig) -> f64 {
    cfg.per_layer_overhead_s + cost.macs as f64 / cfg.effective_macs_per_sec
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub luts_used: u64,
    pub dsps_used: u64,
    pub bram_blocks_used: u64,
    pub lut_utilization: f64,
    pub dsp_utilization: f64,
    pub bram_utilization: f64,
    /// Largest of the three ratios; above 1 the design does not fit.
    pub utilization: f64,
}

impl ResourceReport {
    pub fn is_feasible(&self) -> bool {
        self.utilization <= 1.0
    }
}

/// DSPs scale with the MAC array, BRAM with the on-chip buffer, LUTs
/// linearly with the MAC array on top of a fixed control base.
pub fn estimate_resources(cfg: &AccelConfig) -> ResourceReport {
    let dsps_used = cfg.num_macs * cfg.dsps_per_mac;
    let bram_blocks_used = cfg.onchip_buffer_bytes.div_ceil(cfg.bram_block_bytes);
    let luts_used = cfg.lut_base + cfg.lut_per_mac * cfg.num_macs;
    let cap = cfg.device_capacity;
    let lut_utilization = luts_used as f64 / cap.luts as f64;
    let dsp_utilization = dsps_used as f64 / cap.dsps as f64;
    let bram_utilization = bram_blocks_used as f64 / cap.bram_blocks as f64;
    ResourceReport {
        luts_used,
        dsps_used,
        bram_blocks_used,
        lut_utilization,
        dsp_utilization,
        bram_utilization,
        utilization: lut_utilization.max(dsp_utilization).max(bram_utilization),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostSet {
    pub cpu: HostConfig,
    pub gpu: HostConfig,
}

/// Contents of a platform config file: one accelerator and the two hosts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSet {
    pub name: String,
    pub accelerator: AccelConfig,
    pub hosts: HostSet,
}

const PAPER_CALIBRATED: &str = include_str!("../../../../platforms/paper_calibrated.toml");
const KV260: &str = include_str!("../../../../platforms/kv260.toml");

impl PlatformSet {
    pub fn validate(&self) -> Result<(), PlatformError> {
        self.accelerator.validate()?;
        self.hosts.cpu.validate()?;
        self.hosts.gpu.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let set: PlatformSet = toml::from_str(text).map_err(|e| Error::Parse {
            what: "platform config".into(),
            message: e.to_string(),
        })?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("platform config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Shipped configurations: `paper_calibrated` and `kv260`.
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "paper_calibrated" => PAPER_CALIBRATED,
            "kv260" => KV260,
            _ => return None,
        };
        Some(Self::from_toml_str(text).expect("shipped platform configs are valid"))
    }

    pub fn paper_calibrated() -> Self {
        Self::builtin("paper_calibrated").expect("shipped")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn accel() -> AccelConfig {
        AccelConfig {
            name: "test".into(),
            num_macs: 1024,
            clock_hz: 200e6,
            onchip_buffer_bytes: 2 << 20,
            bus_width_bits: 64,
            bus_transfers_per_sec: 2400e6,
            bus_utilization: 0.85,
            active_power_w: 28.0,
            idle_power_w: 0.0,
            per_layer_setup_s: 0.0,
            per_image_stream_overhead_s: 0.0,
            bytes_per_element: 1,
            dram_bytes: None,
            device_capacity: DeviceCapacity {
                luts: 274_080,
                dsps: 1500,
                bram_blocks: 912,
            },
            bram_block_bytes: 4608,
            dsps_per_mac: 1,
            lut_base: 20_000,
            lut_per_mac: 100,
        }
    }

    #[test]
    fn axi_bandwidth() {
        assert_relative_eq!(effective_bandwidth(&accel()), 16.32e9, max_relative = 1e-12);
        let unit = AccelConfig {
            bus_width_bits: 8,
            bus_transfers_per_sec: 1e9,
            bus_utilization: 1.0,
            ..accel()
        };
        assert_eq!(effective_bandwidth(&unit), 1e9);
    }

    #[test]
    fn invariants_reject_bad_configs() {
        let zero_util = AccelConfig {
            bus_utilization: 0.0,
            ..accel()
        };
        assert!(matches!(
            zero_util.validate(),
            Err(PlatformError::Invalid { field, .. }) if field == "bus_utilization"
        ));
        let no_macs = AccelConfig {
            num_macs: 0,
            ..accel()
        };
        assert!(no_macs.validate().is_err());
        let idle_above_active = AccelConfig {
            idle_power_w: 40.0,
            ..accel()
        };
        assert!(idle_above_active.validate().is_err());
        assert!(accel().validate().is_ok());
    }

    #[test]
    fn host_time_is_overhead_plus_rate() {
        let host = HostConfig {
            name: "cpu".into(),
            effective_macs_per_sec: 1e9,
            per_layer_overhead_s: 1e-5,
            per_image_stream_overhead_s: 0.0,
            power_w: 85.0,
            idle_power_w: 0.0,
        };
        let mut cost = LayerCost {
            macs: 1_000_000,
            weight_bytes: 0,
            input_bytes: 1,
            output_bytes: 1,
            arithmetic_intensity: 0.0,
            tile_units: 1,
        };
        assert_relative_eq!(host_layer_time(&cost, &host), 1.01e-3, max_relative = 1e-12);
        cost.macs = 0;
        assert_eq!(host_layer_time(&cost, &host), 1e-5);
    }

    #[test]
    fn resource_arithmetic() {
        let r = estimate_resources(&accel());
        assert_eq!(r.dsps_used, 1024);
        assert_eq!(r.bram_blocks_used, 456);
        assert_eq!(r.luts_used, 20_000 + 102_400);
        assert_relative_eq!(r.utilization, 1024.0 / 1500.0);
        assert!(r.is_feasible());

        let oversized = AccelConfig {
            num_macs: 4096,
            ..accel()
        };
        let r = estimate_resources(&oversized);
        assert!(r.utilization > 1.0);
        assert!(!r.is_feasible());
    }

    #[test]
    fn shipped_configs_load() {
        let paper = PlatformSet::paper_calibrated();
        let r = estimate_resources(&paper.accelerator);
        assert!((0.65..=0.75).contains(&r.utilization), "{r:?}");

        let kv = PlatformSet::builtin("kv260").unwrap();
        assert_eq!(kv.accelerator.bus_width_bits, 64);
        assert_eq!(kv.accelerator.bus_transfers_per_sec, 2400e6);
        assert_eq!(kv.accelerator.bus_utilization, 0.85);
        assert_eq!(kv.accelerator.dram_bytes, Some(4 << 30));
        assert!(PlatformSet::builtin("nope").is_none());
    }

    #[test]
    fn toml_round_trip() {
        let paper = PlatformSet::paper_calibrated();
        let text = paper.to_toml_string();
        assert_eq!(PlatformSet::from_toml_str(&text).unwrap(), paper);
    }
}
