//! Neural-network computation graph: layers, shape inference and the
//! per-layer cost accounting that drives placement decisions.

mod cost;
mod io;
mod resnet;

pub use cost::{graph_costs, layer_cost, LayerCost};
pub use io::{LayerRecord, ModelFile};
pub use resnet::{build_resnet_like, build_resnet_like_with_classes, DEFAULT_NUM_CLASSES};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ordinal identifying a layer inside a [`ModelGraph`].
pub type LayerId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("layer {layer}: predecessor {predecessor} does not precede it in storage order")]
    CycleDetected {
        layer: LayerId,
        predecessor: LayerId,
    },
    #[error("layer {layer}: channel mismatch, expected {expected} found {found}")]
    ShapeMismatch {
        layer: LayerId,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: predecessor {predecessor} does not exist")]
    DanglingPredecessor {
        layer: LayerId,
        predecessor: LayerId,
    },
    #[error("layer {layer}: {kind} cannot take {count} predecessors")]
    PredecessorCount {
        layer: LayerId,
        kind: LayerKind,
        count: usize,
    },
    #[error("graph must have exactly one input-consuming layer, found {count}")]
    RootCount { count: usize },
    #[error("layer id {layer} appears more than once")]
    DuplicateId { layer: LayerId },
    #[error("layer {layer}: {field} must be at least 1")]
    ZeroParameter { layer: LayerId, field: &'static str },
    #[error("input shape has a zero dimension")]
    EmptyInput,
    #[error("layer {layer}: kernel exceeds padded input")]
    NonPositiveOutputDim { layer: LayerId },
    #[error("layer {layer}: {reason}")]
    SpatialMismatch {
        layer: LayerId,
        reason: &'static str,
    },
    #[error("graph has no layers")]
    Empty,
}

/// Dimensions of an NCHW tensor. Fully-connected tensors use 1×1 spatial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            batch,
            channels,
            height,
            width,
        }
    }

    /// Elements of a single image (batch excluded).
    pub fn per_image(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_positive(&self) -> bool {
        self.batch >= 1 && self.channels >= 1 && self.height >= 1 && self.width >= 1
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }
}

impl From<[usize; 4]> for TensorShape {
    fn from(d: [usize; 4]) -> Self {
        Self::new(d[0], d[1], d[2], d[3])
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{})",
            self.batch, self.channels, self.height, self.width
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2D,
    Pool2D,
    FullyConnected,
    Activation,
    ElementwiseAdd,
}

impl LayerKind {
    pub fn is_spatial(self) -> bool {
        matches!(self, LayerKind::Conv2D | LayerKind::Pool2D)
    }

    pub fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv2D | LayerKind::FullyConnected)
    }

    /// Kinds whose output channel count must equal the input's.
    fn preserves_channels(self) -> bool {
        matches!(
            self,
            LayerKind::Pool2D | LayerKind::Activation | LayerKind::ElementwiseAdd
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One node of the graph. Kernel, stride and padding are carried by every
/// kind but only read for [`LayerKind::is_spatial`] kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: LayerId,
    pub kind: LayerKind,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub predecessors: Vec<LayerId>,
}

impl LayerSpec {
    fn non_spatial(
        id: LayerId,
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        predecessors: Vec<LayerId>,
    ) -> Self {
        Self {
            id,
            kind,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            in_channels,
            out_channels,
            predecessors,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        id: LayerId,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_channels: usize,
        out_channels: usize,
        predecessors: Vec<LayerId>,
    ) -> Self {
        Self {
            id,
            kind: LayerKind::Conv2D,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            predecessors,
        }
    }

    /// Average pooling over a `kernel`×`kernel` window.
    pub fn pool(
        id: LayerId,
        kernel: usize,
        stride: usize,
        padding: usize,
        channels: usize,
        predecessors: Vec<LayerId>,
    ) -> Self {
        Self {
            id,
            kind: LayerKind::Pool2D,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            in_channels: channels,
            out_channels: channels,
            predecessors,
        }
    }

    pub fn fully_connected(
        id: LayerId,
        in_features: usize,
        out_features: usize,
        predecessors: Vec<LayerId>,
    ) -> Self {
        Self::non_spatial(
            id,
            LayerKind::FullyConnected,
            in_features,
            out_features,
            predecessors,
        )
    }

    /// Rectifier.
    pub fn activation(id: LayerId, channels: usize, predecessor: Option<LayerId>) -> Self {
        Self::non_spatial(
            id,
            LayerKind::Activation,
            channels,
            channels,
            predecessor.into_iter().collect(),
        )
    }

    pub fn add(id: LayerId, channels: usize, lhs: LayerId, rhs: LayerId) -> Self {
        Self::non_spatial(
            id,
            LayerKind::ElementwiseAdd,
            channels,
            channels,
            vec![lhs, rhs],
        )
    }

    /// Output shape for an input of shape `input`.
    pub fn output_shape(&self, input: TensorShape) -> Result<TensorShape, GraphError> {
        match self.kind {
            LayerKind::Conv2D | LayerKind::Pool2D => {
                let out_dim = |extent: usize, kernel: usize| {
                    let padded = extent + 2 * self.padding;
                    if padded < kernel {
                        Err(GraphError::NonPositiveOutputDim { layer: self.id })
                    } else {
                        Ok((padded - kernel) / self.stride + 1)
                    }
                };
                Ok(TensorShape::new(
                    input.batch,
                    self.out_channels,
                    out_dim(input.height, self.kernel_h)?,
                    out_dim(input.width, self.kernel_w)?,
                ))
            }
            LayerKind::FullyConnected => {
                if input.height != 1 || input.width != 1 {
                    return Err(GraphError::SpatialMismatch {
                        layer: self.id,
                        reason: "fully-connected input must be 1x1 spatially",
                    });
                }
                Ok(TensorShape::new(input.batch, self.out_channels, 1, 1))
            }
            LayerKind::Activation | LayerKind::ElementwiseAdd => Ok(input),
        }
    }
}

/// Layers stored in a topological order together with the network input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelGraph {
    pub layers: Vec<LayerSpec>,
    pub input_shape: TensorShape,
}

impl ModelGraph {
    /// Builds and validates a graph.
    pub fn new(input_shape: TensorShape, layers: Vec<LayerSpec>) -> Result<Self, GraphError> {
        let graph = Self {
            layers,
            input_shape,
        };
        validate_graph(&graph)?;
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Storage position of the layer with id `id`.
    pub fn position(&self, id: LayerId) -> Option<usize> {
        self.layers.iter().position(|l| l.id == id)
    }

    /// Predecessor storage positions for every layer, aligned with `layers`.
    pub fn predecessor_positions(&self) -> Vec<Vec<usize>> {
        let index: HashMap<LayerId, usize> = self
            .layers
            .iter()
            .enumerate()
            .map(|(pos, l)| (l.id, pos))
            .collect();
        self.layers
            .iter()
            .map(|l| l.predecessors.iter().map(|p| index[p]).collect())
            .collect()
    }

    /// Successor storage positions for every layer, aligned with `layers`.
    pub fn successor_positions(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.layers.len()];
        for (pos, preds) in self.predecessor_positions().into_iter().enumerate() {
            for p in preds {
                succ[p].push(pos);
            }
        }
        succ
    }

    pub fn total_macs(&self, bytes_per_element: u64) -> Result<u64, GraphError> {
        Ok(graph_costs(self, bytes_per_element)?
            .iter()
            .map(|c| c.macs)
            .sum())
    }
}

/// Checks every structural invariant of `graph`: unique ids, existing and
/// earlier-stored predecessors, predecessor arity, a single root and
/// channel agreement along every edge.
pub fn validate_graph(graph: &ModelGraph) -> Result<(), GraphError> {
    if graph.layers.is_empty() {
        return Err(GraphError::Empty);
    }
    if !graph.input_shape.is_positive() {
        return Err(GraphError::EmptyInput);
    }

    let mut position = HashMap::with_capacity(graph.layers.len());
    for (pos, layer) in graph.layers.iter().enumerate() {
        if position.insert(layer.id, pos).is_some() {
            return Err(GraphError::DuplicateId { layer: layer.id });
        }
    }

    let mut roots = 0;
    for (pos, layer) in graph.layers.iter().enumerate() {
        for &pred in &layer.predecessors {
            match position.get(&pred) {
                None => {
                    return Err(GraphError::DanglingPredecessor {
                        layer: layer.id,
                        predecessor: pred,
                    })
                }
                Some(&p) if p >= pos => {
                    return Err(GraphError::CycleDetected {
                        layer: layer.id,
                        predecessor: pred,
                    })
                }
                Some(_) => {}
            }
        }

        let count = layer.predecessors.len();
        let arity_ok = match layer.kind {
            LayerKind::ElementwiseAdd => count == 2,
            _ => count <= 1,
        };
        if !arity_ok {
            return Err(GraphError::PredecessorCount {
                layer: layer.id,
                kind: layer.kind,
                count,
            });
        }
        if count == 0 {
            roots += 1;
        }

        for (field, value) in [
            ("in_channels", layer.in_channels),
            ("out_channels", layer.out_channels),
            ("kernel_h", layer.kernel_h),
            ("kernel_w", layer.kernel_w),
            ("stride", layer.stride),
        ] {
            if value == 0 {
                return Err(GraphError::ZeroParameter {
                    layer: layer.id,
                    field,
                });
            }
        }

        if layer.predecessors.is_empty() && layer.in_channels != graph.input_shape.channels {
            return Err(GraphError::ShapeMismatch {
                layer: layer.id,
                expected: graph.input_shape.channels,
                found: layer.in_channels,
            });
        }
        for pred in &layer.predecessors {
            let producer = &graph.layers[position[pred]];
            if producer.out_channels != layer.in_channels {
                return Err(GraphError::ShapeMismatch {
                    layer: layer.id,
                    expected: producer.out_channels,
                    found: layer.in_channels,
                });
            }
        }
        if layer.kind.preserves_channels() && layer.out_channels != layer.in_channels {
            return Err(GraphError::ShapeMismatch {
                layer: layer.id,
                expected: layer.in_channels,
                found: layer.out_channels,
            });
        }
    }

    if roots != 1 {
        return Err(GraphError::RootCount { count: roots });
    }
    Ok(())
}

/// Input and output shapes of every layer, aligned with storage order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferredShapes {
    pub ids: Vec<LayerId>,
    pub inputs: Vec<TensorShape>,
    pub outputs: Vec<TensorShape>,
}

impl InferredShapes {
    pub fn output_of(&self, id: LayerId) -> Option<TensorShape> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .map(|pos| self.outputs[pos])
    }

    pub fn final_output(&self) -> TensorShape {
        *self.outputs.last().expect("validated graphs are non-empty")
    }
}

/// Propagates the input shape through the graph.
pub fn infer_shapes(graph: &ModelGraph) -> Result<InferredShapes, GraphError> {
    validate_graph(graph)?;
    let preds = graph.predecessor_positions();
    let mut inputs = Vec::with_capacity(graph.len());
    let mut outputs: Vec<TensorShape> = Vec::with_capacity(graph.len());
    for (pos, layer) in graph.layers.iter().enumerate() {
        let input = match preds[pos].as_slice() {
            [] => graph.input_shape,
            [p] => outputs[*p],
            [a, b] => {
                if outputs[*a] != outputs[*b] {
                    return Err(GraphError::SpatialMismatch {
                        layer: layer.id,
                        reason: "elementwise operands differ in shape",
                    });
                }
                outputs[*a]
            }
            _ => unreachable!("arity checked by validate_graph"),
        };
        inputs.push(input);
        outputs.push(layer.output_shape(input)?);
    }
    Ok(InferredShapes {
        ids: graph.layers.iter().map(|l| l.id).collect(),
        inputs,
        outputs,
    })
}
