use serde::{Deserialize, Serialize};

use super::{AccelConfig, PlatformError};
use crate::graph::LayerCost;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub input_bytes: u64,
    pub weight_bytes: u64,
    pub output_bytes: u64,
    pub macs: u64,
}

impl Tile {
    pub fn bytes(&self) -> u64 {
        self.input_bytes + self.weight_bytes + self.output_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub tiles: Vec<Tile>,
    pub tile_count: usize,
}

impl TilePlan {
    pub fn max_tile_bytes(&self) -> u64 {
        self.tiles.iter().map(Tile::bytes).max().unwrap_or(0)
    }
}

/// `i`-th of `parts` near-equal shares of `total`; the first `total % parts`
/// shares carry one extra unit.
fn share(total: u64, parts: u64, i: u64) -> u64 {
    total / parts + u64::from(i < total % parts)
}

/// Largest tile when splitting into `parts`.
fn largest_tile(cost: &LayerCost, parts: u64) -> u64 {
    cost.input_bytes.div_ceil(parts)
        + cost.weight_bytes.div_ceil(parts)
        + cost.output_bytes.div_ceil(parts)
}

/// On-chip demand of the finest split: one output row of one channel.
pub fn minimal_tile_bytes(cost: &LayerCost) -> u64 {
    largest_tile(cost, cost.tile_units.max(1))
}

/// Splits a layer into the fewest near-equal tiles whose input, weight and
/// output shares together fit the on-chip buffer. Splitting happens along
/// output channels and then output rows, so a layer can be cut into at most
/// `tile_units` pieces.
pub fn plan_tiles(cost: &LayerCost, cfg: &AccelConfig) -> Result<TilePlan, PlatformError> {
    let capacity = cfg.onchip_buffer_bytes;
    let max_parts = cost.tile_units.max(1);
    let minimal = largest_tile(cost, max_parts);
    if minimal > capacity {
        return Err(PlatformError::LayerUntileable {
            minimal_tile_bytes: minimal,
            capacity,
        });
    }

    // Shares are rounded up, so `total / parts` is a lower bound on the
    // largest tile and no smaller count can fit.
    let mut parts = cost.total_bytes().div_ceil(capacity).clamp(1, max_parts);
    while largest_tile(cost, parts) > capacity {
        parts += 1;
    }

    let tiles = (0..parts)
        .map(|i| Tile {
            input_bytes: share(cost.input_bytes, parts, i),
            weight_bytes: share(cost.weight_bytes, parts, i),
            output_bytes: share(cost.output_bytes, parts, i),
            macs: share(cost.macs, parts, i),
        })
        .collect::<Vec<_>>();
    Ok(TilePlan {
        tile_count: tiles.len(),
        tiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::tests::accel;
    use proptest::prelude::*;

    fn cost(input: u64, weights: u64, output: u64, macs: u64, units: u64) -> LayerCost {
        LayerCost {
            macs,
            weight_bytes: weights,
            input_bytes: input,
            output_bytes: output,
            arithmetic_intensity: macs as f64 / (input + weights + output) as f64,
            tile_units: units,
        }
    }

    fn with_buffer(bytes: u64) -> AccelConfig {
        AccelConfig {
            onchip_buffer_bytes: bytes,
            ..accel()
        }
    }

    /// Smallest split count whose explicit tiles all fit, found by trying
    /// every count and materializing every tile.
    fn brute_force_parts(c: &LayerCost, capacity: u64) -> Option<u64> {
        (1..=c.tile_units.max(1)).find(|&k| {
            (0..k).all(|i| {
                share(c.input_bytes, k, i)
                    + share(c.weight_bytes, k, i)
                    + share(c.output_bytes, k, i)
                    <= capacity
            })
        })
    }

    const KB: u64 = 1024;

    #[test]
    fn fits_whole() {
        let c = cost(512 * KB, 256 * KB, 512 * KB, 1 << 30, 4096);
        let plan = plan_tiles(&c, &with_buffer(2048 * KB)).unwrap();
        assert_eq!(plan.tile_count, 1);
        assert_eq!(plan.tiles[0].bytes(), c.total_bytes());
    }

    #[test]
    fn splits_when_buffer_shrinks() {
        let c = cost(512 * KB, 256 * KB, 512 * KB, 1 << 30, 4096);
        let plan = plan_tiles(&c, &with_buffer(1024 * KB)).unwrap();
        assert!(plan.tile_count >= 2);
        assert!(plan.tiles.iter().all(|t| t.bytes() <= 1024 * KB));
        assert_eq!(
            Some(plan.tile_count as u64),
            brute_force_parts(&c, 1024 * KB)
        );
    }

    #[test]
    fn untileable_layer() {
        // A single unit of 3 MiB cannot be split further.
        let c = cost(1024 * KB, 1024 * KB, 1024 * KB, 10, 1);
        assert_eq!(
            plan_tiles(&c, &with_buffer(1024 * KB)),
            Err(PlatformError::LayerUntileable {
                minimal_tile_bytes: 3072 * KB,
                capacity: 1024 * KB
            })
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]
        #[test]
        fn plans_conserve_and_fit(
            input in 1u64..5_000_000, weights in 0u64..5_000_000, output in 1u64..5_000_000,
            macs in 0u64..1_000_000_000, units in 1u64..400, capacity in 1u64..4_000_000,
        ) {
            let c = cost(input, weights, output, macs, units);
            let oracle = brute_force_parts(&c, capacity);
            match plan_tiles(&c, &with_buffer(capacity)) {
                Ok(plan) => {
                    prop_assert_eq!(Some(plan.tile_count as u64), oracle);
                    prop_assert!(plan.tiles.iter().all(|t| t.bytes() <= capacity));
                    prop_assert_eq!(plan.tiles.iter().map(|t| t.macs).sum::<u64>(), macs);
                    prop_assert_eq!(plan.tiles.iter().map(|t| t.output_bytes).sum::<u64>(), output);
                    prop_assert_eq!(plan.tiles.iter().map(|t| t.input_bytes).sum::<u64>(), input);
                    prop_assert_eq!(plan.tiles.iter().map(|t| t.weight_bytes).sum::<u64>(), weights);
                }
                Err(PlatformError::LayerUntileable { minimal_tile_bytes, .. }) => {
                    prop_assert!(oracle.is_none());
                    prop_assert!(minimal_tile_bytes > capacity);
                }
                Err(e) => prop_assert!(false, "unexpected {e:?}"),
            }
        }
    }
}
