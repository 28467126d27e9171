//! Seeded random graphs and platforms for optimality experiments.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{LayerSpec, ModelGraph, TensorShape};
use crate::platform::{AccelConfig, DeviceCapacity, HostConfig, HostSet, PlatformSet};

/// Random valid graph with between 5 and `max_layers` layers (fewer only
/// when `max_layers` is below 5, never below 3).
/// The body mixes convolutions, activations, pooling and residual
/// additions; the tail is a global pool and a classifier.
pub fn random_graph<R: Rng>(rng: &mut R, max_layers: usize) -> ModelGraph {
    assert!(
        max_layers >= 3,
        "need room for a body layer, pool and classifier"
    );
    let target = rng.gen_range(max_layers.min(5)..=max_layers);
    let side = *[4usize, 8, 16].choose(rng).expect("non-empty");
    let input = TensorShape::new(1, rng.gen_range(1..=8), side, side);

    let mut layers: Vec<LayerSpec> = Vec::new();
    let (mut c, mut hw) = (input.channels, side);
    let mut last: Option<usize> = None;
    let preds = |last: Option<usize>| last.into_iter().collect::<Vec<_>>();

    while layers.len() + 2 < target {
        let id = layers.len();
        let room = target - 2 - layers.len();
        match rng.gen_range(0..10) {
            0..=4 => {
                let k = *[1usize, 3].choose(rng).expect("non-empty");
                let stride = if hw >= 4 && rng.gen_bool(0.25) { 2 } else { 1 };
                let out = rng.gen_range(2..=48);
                layers.push(LayerSpec::conv(id, k, stride, k / 2, c, out, preds(last)));
                c = out;
                hw = (hw + 2 * (k / 2) - k) / stride + 1;
            }
            5 | 6 if last.is_some() => layers.push(LayerSpec::activation(id, c, last)),
            7 if hw >= 4 => {
                layers.push(LayerSpec::pool(id, 2, 2, 0, c, preds(last)));
                hw /= 2;
            }
            8 | 9 if room >= 2 && last.is_some() => {
                layers.push(LayerSpec::conv(id, 3, 1, 1, c, c, preds(last)));
                layers.push(LayerSpec::add(id + 1, c, last.expect("guarded"), id));
                last = Some(id + 1);
                continue;
            }
            _ => {
                layers.push(LayerSpec::conv(id, 1, 1, 0, c, c, preds(last)));
            }
        }
        last = Some(id);
    }

    let id = layers.len();
    layers.push(LayerSpec::pool(id, hw, 1, 0, c, preds(last)));
    layers.push(LayerSpec::fully_connected(
        id + 1,
        c,
        rng.gen_range(2..=16),
        vec![id],
    ));
    ModelGraph::new(input, layers).expect("generator emits valid graphs")
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Random accelerator and host whose relative speeds vary enough that
/// optimal placements range from all-host through mixed to all-offload.
pub fn random_platforms<R: Rng>(rng: &mut R) -> PlatformSet {
    let accelerator = AccelConfig {
        name: "random".into(),
        num_macs: rng.gen_range(16..=1024),
        clock_hz: log_uniform(rng, 1e8, 4e8),
        onchip_buffer_bytes: log_uniform(rng, 4096.0, 262_144.0) as u64,
        bus_width_bits: *[32u64, 64, 128].choose(rng).expect("non-empty"),
        bus_transfers_per_sec: log_uniform(rng, 2e8, 2.4e9),
        bus_utilization: rng.gen_range(0.3..=1.0),
        active_power_w: rng.gen_range(5.0..40.0),
        idle_power_w: 0.0,
        per_layer_setup_s: log_uniform(rng, 1e-6, 1e-4),
        per_image_stream_overhead_s: 0.0,
        bytes_per_element: 1,
        dram_bytes: None,
        device_capacity: DeviceCapacity {
            luts: 1_000_000,
            dsps: 4096,
            bram_blocks: 4096,
        },
        bram_block_bytes: 4608,
        dsps_per_mac: 1,
        lut_base: 0,
        lut_per_mac: 0,
    };
    let cpu = HostConfig {
        name: "cpu".into(),
        effective_macs_per_sec: log_uniform(rng, 5e8, 1e10),
        per_layer_overhead_s: log_uniform(rng, 1e-7, 2e-5),
        per_image_stream_overhead_s: 0.0,
        power_w: rng.gen_range(20.0..120.0),
        idle_power_w: 0.0,
    };
    let gpu = HostConfig {
        name: "gpu".into(),
        ..cpu.clone()
    };
    PlatformSet {
        name: "random".into(),
        accelerator,
        hosts: HostSet { cpu, gpu },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn graphs_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let g = random_graph(&mut rng, 12);
            assert!(g.len() >= 3 && g.len() <= 12);
            validate_graph(&g).unwrap();
        }
    }

    #[test]
    fn platforms_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            random_platforms(&mut rng).validate().unwrap();
        }
    }
}
