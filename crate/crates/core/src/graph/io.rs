//! JSON model file:
//!
//! ```json
//! {"input_shape":[1,3,32,32],
//!  "layers":[{"id":0,"kind":"Conv2D","kernel":[3,3],"stride":1,"padding":1,
//!             "in_channels":3,"out_channels":16,"pred":[]}]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_graph, LayerKind, LayerSpec, ModelGraph, TensorShape};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub id: usize,
    pub kind: LayerKind,
    pub kernel: [usize; 2],
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub pred: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFile {
    pub input_shape: [usize; 4],
    pub layers: Vec<LayerRecord>,
}

impl From<&ModelGraph> for ModelFile {
    fn from(graph: &ModelGraph) -> Self {
        Self {
            input_shape: graph.input_shape.as_array(),
            layers: graph
                .layers
                .iter()
                .map(|l| LayerRecord {
                    id: l.id,
                    kind: l.kind,
                    kernel: [l.kernel_h, l.kernel_w],
                    stride: l.stride,
                    padding: l.padding,
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    pred: l.predecessors.clone(),
                })
                .collect(),
        }
    }
}

impl From<ModelFile> for ModelGraph {
    fn from(file: ModelFile) -> Self {
        ModelGraph {
            input_shape: TensorShape::from(file.input_shape),
            layers: file
                .layers
                .into_iter()
                .map(|r| LayerSpec {
                    id: r.id,
                    kind: r.kind,
                    kernel_h: r.kernel[0],
                    kernel_w: r.kernel[1],
                    stride: r.stride,
                    padding: r.padding,
                    in_channels: r.in_channels,
                    out_channels: r.out_channels,
                    predecessors: r.pred,
                })
                .collect(),
        }
    }
}

impl ModelGraph {
    /// Parses and validates a model file. Storage order must already be
    /// topological; layers are never re-sorted.
    pub fn from_json_str(text: &str) -> Result<Self, Error> {
        let file: ModelFile = serde_json::from_str(text)?;
        let graph = ModelGraph::from(file);
        validate_graph(&graph)?;
        Ok(graph)
    }

    pub fn to_json_string(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(&ModelFile::from(self)).expect("model file serializes");
        text.push('\n');
        text
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_resnet_like, GraphError};

    #[test]
    fn generator_round_trips_through_json() {
        let g = build_resnet_like(3, 8, TensorShape::new(1, 3, 16, 16));
        let back = ModelGraph::from_json_str(&g.to_json_string()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn parses_the_documented_layout() {
        let text = r#"{"input_shape":[1,3,8,8],
            "layers":[{"id":0,"kind":"Conv2D","kernel":[3,3],"stride":1,"padding":1,
                       "in_channels":3,"out_channels":16,"pred":[]},
                      {"id":1,"kind":"Activation","kernel":[1,1],"stride":1,"padding":0,
                       "in_channels":16,"out_channels":16,"pred":[0]}]}"#;
        let g = ModelGraph::from_json_str(text).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.layers[1].predecessors, vec![0]);
    }

    #[test]
    fn loading_rejects_invalid_graphs() {
        let text = r#"{"input_shape":[1,3,8,8],
            "layers":[{"id":0,"kind":"Conv2D","kernel":[3,3],"stride":1,"padding":1,
                       "in_channels":4,"out_channels":16,"pred":[]}]}"#;
        match ModelGraph::from_json_str(text) {
            Err(Error::Graph(GraphError::ShapeMismatch { layer: 0, .. })) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
