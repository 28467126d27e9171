use serde::{Deserialize, Serialize};

use super::{infer_shapes, GraphError, LayerKind, LayerSpec, ModelGraph, TensorShape};

/// Work and traffic of one layer for a single image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub macs: u64,
    pub weight_bytes: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    /// MACs per byte moved.
    pub arithmetic_intensity: f64,
    /// Independent output rows (one row of one output channel); the finest
    /// granularity the accelerator tiler can split the layer into.
    pub tile_units: u64,
}

impl LayerCost {
    pub fn total_bytes(&self) -> u64 {
        self.weight_bytes + self.input_bytes + self.output_bytes
    }
}

/// Cost of `layer` applied to an input of shape `in_shape`, with every
/// tensor element occupying `bytes_per_element` bytes. Batch is ignored.
pub fn layer_cost(
    layer: &LayerSpec,
    in_shape: TensorShape,
    bytes_per_element: u64,
) -> Result<LayerCost, GraphError> {
    let out = layer.output_shape(in_shape)?;
    let in_elems = in_shape.per_image() as u64;
    let out_elems = out.per_image() as u64;
    let ic = layer.in_channels as u64;
    let oc = layer.out_channels as u64;

    let (macs, weight_elems, input_elems, tile_units) = match layer.kind {
        LayerKind::Conv2D => {
            let taps = (layer.kernel_h * layer.kernel_w) as u64;
            (
                out.height as u64 * out.width as u64 * oc * ic * taps,
                ic * oc * taps,
                in_elems,
                oc * out.height as u64,
            )
        }
        LayerKind::FullyConnected => (ic * oc, ic * oc, in_elems, oc),
        LayerKind::Pool2D => (0, 0, in_elems, out.channels as u64 * out.height as u64),
        LayerKind::Activation => (0, 0, in_elems, out.channels as u64 * out.height as u64),
        LayerKind::ElementwiseAdd => (0, 0, 2 * in_elems, out.channels as u64 * out.height as u64),
    };

    let weight_bytes = weight_elems * bytes_per_element;
    let input_bytes = input_elems * bytes_per_element;
    let output_bytes = out_elems * bytes_per_element;
    let moved = weight_bytes + input_bytes + output_bytes;
    Ok(LayerCost {
        macs,
        weight_bytes,
        input_bytes,
        output_bytes,
        arithmetic_intensity: if moved == 0 {
            0.0
        } else {
            macs as f64 / moved as f64
        },
        tile_units,
    })
}

/// [`layer_cost`] for every layer of `graph`, in storage order.
pub fn graph_costs(
    graph: &ModelGraph,
    bytes_per_element: u64,
) -> Result<Vec<LayerCost>, GraphError> {
    let shapes = infer_shapes(graph)?;
    graph
        .layers
        .iter()
        .zip(&shapes.inputs)
        .map(|(layer, &input)| layer_cost(layer, input, bytes_per_element))
        .collect()
}
