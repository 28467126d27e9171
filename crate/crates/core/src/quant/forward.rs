//! Reference forward passes.
//!
//! The float pass is the fidelity baseline. The integer pass multiplies
//! 8-bit operands into 32-bit accumulators (overflow panics in debug
//! builds), rescales into each layer's calibrated output parameters and
//! applies the rectifier directly to the integer codes. Activation and
//! pooling layers reuse their input's parameters, so they never requantize
//! through a different scale. The final layer is dequantized straight from
//! its accumulator.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kernels;
use super::weights::{expected_weight_len, weight_dims, Manifest, ManifestWriter};
use super::{
    calibrate, quantize, Dataset, FloatWeights, QuantError, QuantParams, QuantTensor, Tensor,
};
use crate::graph::{infer_shapes, InferredShapes, LayerKind, ModelGraph, TensorShape};
use crate::{Error, Scalar};

fn check_input(shapes: &InferredShapes, found: usize) -> Result<(), QuantError> {
    let expected = shapes.inputs[0].per_image();
    if expected != found {
        return Err(QuantError::InputMismatch { expected, found });
    }
    Ok(())
}

fn shapes_of(graph: &ModelGraph) -> Result<InferredShapes, QuantError> {
    infer_shapes(graph).map_err(|e| QuantError::Format(e.to_string()))
}

/// Float forward pass returning every layer's output in storage order.
pub fn float_forward_trace<T: Scalar>(
    graph: &ModelGraph,
    weights: &FloatWeights<T>,
    input: &Tensor<T>,
) -> Result<Vec<Tensor<T>>, QuantError> {
    weights.check(graph)?;
    let shapes = shapes_of(graph)?;
    check_input(&shapes, input.data.len())?;
    let preds = graph.predecessor_positions();
    let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(graph.len());

    for (pos, layer) in graph.layers.iter().enumerate() {
        let in_shape = shapes.inputs[pos];
        let out_shape = with_batch1(shapes.outputs[pos]);
        let src = |k: usize| -> &[T] {
            match preds[pos].get(k) {
                Some(&p) => &outputs[p].data,
                None => &input.data,
            }
        };
        let mut out = vec![T::zero(); out_shape.per_image()];
        match layer.kind {
            LayerKind::Conv2D => {
                let w = weights.layers[pos].as_ref().expect("checked");
                let plane = out_shape.height * out_shape.width;
                for (oc, chunk) in out.chunks_mut(plane).enumerate() {
                    chunk.fill(w.bias[oc]);
                }
                kernels::conv2d(
                    layer,
                    src(0),
                    in_shape,
                    &w.weight,
                    out_shape,
                    &mut out,
                    |x, w| x * w,
                );
            }
            LayerKind::FullyConnected => {
                let w = weights.layers[pos].as_ref().expect("checked");
                out.copy_from_slice(&w.bias);
                kernels::fully_connected(src(0), &w.weight, &mut out, |x, w| x * w);
            }
            LayerKind::Pool2D => {
                kernels::pool_sum(layer, src(0), in_shape, out_shape, &mut out, |x| x);
                let area = T::of((layer.kernel_h * layer.kernel_w) as f64);
                out.iter_mut().for_each(|v| *v /= area);
            }
            LayerKind::Activation => {
                for (o, &x) in out.iter_mut().zip(src(0)) {
                    *o = x.max(T::zero());
                }
            }
            LayerKind::ElementwiseAdd => {
                for ((o, &a), &b) in out.iter_mut().zip(src(0)).zip(src(1)) {
                    *o = a + b;
                }
            }
        }
        outputs.push(Tensor {
            shape: out_shape,
            data: out,
        });
    }
    Ok(outputs)
}

fn with_batch1(shape: TensorShape) -> TensorShape {
    TensorShape { batch: 1, ..shape }
}

/// Float logits: the flattened output of the last stored layer.
pub fn float_forward<T: Scalar>(
    graph: &ModelGraph,
    weights: &FloatWeights<T>,
    input: &Tensor<T>,
) -> Result<Vec<T>, QuantError> {
    let mut trace = float_forward_trace(graph, weights, input)?;
    Ok(trace.pop().expect("non-empty graph").data)
}

impl<T: Scalar> FloatWeights<T> {
    /// Replaces the final fully connected layer with a nearest-centroid
    /// classifier over its input features: class `c` scores
    /// `f . (m_c - m) - (|m_c|^2 - |m|^2) / 2`, where `m_c` is the class mean
    /// feature on `train` and `m` the mean over classes. This stands in for
    /// a trained head without a training loop.
    pub fn fit_centroid_classifier(
        &mut self,
        graph: &ModelGraph,
        train: &Dataset<T>,
    ) -> Result<(), QuantError> {
        let last = graph.len() - 1;
        let head = &graph.layers[last];
        if head.kind != LayerKind::FullyConnected {
            return Err(QuantError::Format(
                "last layer is not fully connected".into(),
            ));
        }
        if train.is_empty() {
            return Err(QuantError::EmptyDataset);
        }
        let feature_pos = graph.predecessor_positions()[last].first().copied();
        let (classes, width) = (head.out_channels, head.in_channels);
        let mut sums = vec![vec![0.0f64; width]; classes];
        let mut counts = vec![0usize; classes];
        for (x, &label) in train.samples.iter().zip(&train.labels) {
            if label >= classes {
                return Err(QuantError::Format(format!(
                    "label {label} outside {classes} classes"
                )));
            }
            let trace = float_forward_trace(graph, self, x)?;
            let features = feature_pos.map_or(x, |p| &trace[p]);
            for (s, v) in sums[label].iter_mut().zip(&features.data) {
                *s += v.to_f64().unwrap_or(0.0);
            }
            counts[label] += 1;
        }
        let centroids: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| s.iter().map(|v| v / n.max(1) as f64).collect())
            .collect();
        let mean: Vec<f64> = (0..width)
            .map(|k| centroids.iter().map(|c| c[k]).sum::<f64>() / classes as f64)
            .collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let layer = self.layers[last]
            .as_mut()
            .ok_or(QuantError::ShapeMismatch {
                layer: head.id,
                what: "weight tensors",
                expected: 1,
                found: 0,
            })?;
        for (c, centroid) in centroids.iter().enumerate() {
            for k in 0..width {
                layer.weight[c * width + k] = T::of(centroid[k] - mean[k]);
            }
            layer.bias[c] = T::of(-(norm(centroid) - norm(&mean)) / 2.0);
        }
        Ok(())
    }
}

/// Integer parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer<T> {
    pub weight: Option<QuantTensor<T>>,
    /// Biases in accumulator units (`input_scale * weight_scale`).
    pub bias: Vec<i32>,
    pub output: QuantParams<T>,
}

/// Fully quantized model: input parameters plus per-layer integer weights
/// and output activation parameters, aligned with storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantModel<T> {
    pub input: QuantParams<T>,
    pub layers: Vec<QuantLayer<T>>,
}

impl<T: Scalar> QuantModel<T> {
    /// Post-training quantization: weights by per-tensor min-max, activation
    /// ranges from float passes over `calibration`.
    pub fn calibrate(
        graph: &ModelGraph,
        weights: &FloatWeights<T>,
        calibration: &[Tensor<T>],
        epsilon: T,
    ) -> Result<Self, QuantError> {
        if calibration.is_empty() {
            return Err(QuantError::NoCalibrationData);
        }
        let mut input_peak = T::zero();
        let mut peaks = vec![T::zero(); graph.len()];
        for sample in calibration {
            input_peak = sample.data.iter().fold(input_peak, |m, v| m.max(v.abs()));
            for (peak, out) in peaks
                .iter_mut()
                .zip(float_forward_trace(graph, weights, sample)?)
            {
                *peak = out.data.iter().fold(*peak, |m, v| m.max(v.abs()));
            }
        }

        let input = calibrate(&[input_peak], epsilon);
        let preds = graph.predecessor_positions();
        let mut layers: Vec<QuantLayer<T>> = Vec::with_capacity(graph.len());
        for (pos, layer) in graph.layers.iter().enumerate() {
            let in_params = preds[pos].first().map_or(input, |&p| layers[p].output);
            let quant = match layer.kind {
                LayerKind::Conv2D | LayerKind::FullyConnected => {
                    let w = weights.layers[pos].as_ref().expect("checked by trace");
                    let wp = calibrate(&w.weight, epsilon);
                    let dims = weight_dims(layer);
                    let acc_scale = in_params.scale * wp.scale;
                    QuantLayer {
                        weight: Some(quantize(
                            &Tensor {
                                shape: dims_shape(&dims),
                                data: w.weight.clone(),
                            },
                            wp,
                        )),
                        bias: w
                            .bias
                            .iter()
                            .map(|&b| (b / acc_scale).round().to_i32().unwrap_or(0))
                            .collect(),
                        output: calibrate(&[peaks[pos]], epsilon),
                    }
                }
                LayerKind::ElementwiseAdd | LayerKind::Pool2D => QuantLayer {
                    weight: None,
                    bias: Vec::new(),
                    output: calibrate(&[peaks[pos]], epsilon),
                },
                LayerKind::Activation => QuantLayer {
                    weight: None,
                    bias: Vec::new(),
                    output: in_params,
                },
            };
            layers.push(quant);
        }
        Ok(Self { input, layers })
    }

    pub fn quantize_input(&self, input: &Tensor<T>) -> QuantTensor<T> {
        quantize(input, self.input)
    }

    pub fn save(&self, graph: &ModelGraph, dir: impl AsRef<Path>) -> Result<(), Error> {
        let mut writer = ManifestWriter::default();
        writer.push_line(format!("input scale={}", self.input.scale));
        for (layer, q) in graph.layers.iter().zip(&self.layers) {
            writer.push_line(format!("act layer={} scale={}", layer.id, q.output.scale));
            if let Some(w) = &q.weight {
                writer.push_i8(
                    layer.id,
                    "weight",
                    &weight_dims(layer),
                    w.params.scale.as_f64(),
                    &w.data,
                );
                writer.push_i32(
                    layer.id,
                    "bias",
                    (w.params.scale * self.in_scale(graph, layer.id)).as_f64(),
                    &q.bias,
                );
            }
        }
        writer.write(dir.as_ref())
    }

    fn in_scale(&self, graph: &ModelGraph, id: usize) -> T {
        let pos = graph.position(id).expect("layer of this graph");
        match graph.layers[pos].predecessors.first() {
            Some(&p) => {
                self.layers[graph.position(p).expect("validated")]
                    .output
                    .scale
            }
            None => self.input.scale,
        }
    }

    pub fn load(graph: &ModelGraph, dir: impl AsRef<Path>) -> Result<Self, Error> {
        let manifest = Manifest::read(dir.as_ref())?;
        let bad = |m: &str| Error::Quant(QuantError::Format(m.to_string()));
        let scale_of = |fields: &std::collections::BTreeMap<String, String>| -> Result<T, Error> {
            fields
                .get("scale")
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|s| *s > 0.0)
                .map(T::of)
                .ok_or_else(|| bad("missing or invalid scale"))
        };
        let mut input = None;
        let mut acts = std::collections::BTreeMap::new();
        for (tag, fields) in &manifest.records {
            match tag.as_str() {
                "input" => input = Some(QuantParams::symmetric(scale_of(fields)?)),
                "act" => {
                    let id: usize = fields
                        .get("layer")
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("act line without layer"))?;
                    acts.insert(id, QuantParams::symmetric(scale_of(fields)?));
                }
                other => return Err(bad(&format!("unknown manifest record '{other}'"))),
            }
        }
        let input = input.ok_or_else(|| bad("manifest has no input scale"))?;
        let mut layers = Vec::with_capacity(graph.len());
        for (pos, layer) in graph.layers.iter().enumerate() {
            let output = *acts
                .get(&layer.id)
                .ok_or_else(|| bad(&format!("no activation scale for layer {}", layer.id)))?;
            let (weight, bias) = if layer.kind.has_weights() {
                let (data, scale) = manifest.i8_tensor(layer.id, "weight")?;
                let expected = expected_weight_len(graph, pos);
                if data.len() != expected {
                    return Err(QuantError::ShapeMismatch {
                        layer: layer.id,
                        what: "weights",
                        expected,
                        found: data.len(),
                    }
                    .into());
                }
                let params = QuantParams::symmetric(T::of(
                    scale.ok_or_else(|| bad("weight without scale"))?,
                ));
                (
                    Some(QuantTensor {
                        shape: dims_shape(&weight_dims(layer)),
                        data,
                        params,
                    }),
                    manifest.i32_tensor(layer.id, "bias")?,
                )
            } else {
                (None, Vec::new())
            };
            layers.push(QuantLayer {
                weight,
                bias,
                output,
            });
        }
        Ok(Self { input, layers })
    }
}

/// Weight dims packed into a [`TensorShape`] (`batch` holds the output
/// channel count).
fn dims_shape(dims: &[usize]) -> TensorShape {
    match *dims {
        [o, i, h, w] => TensorShape::new(o, i, h, w),
        [o, i] => TensorShape::new(o, i, 1, 1),
        _ => unreachable!("weights are 2-D or 4-D"),
    }
}

fn requantize<T: Scalar>(value: T, out: QuantParams<T>) -> i8 {
    out.quantize_value(value)
}

/// Integer forward pass. Returns dequantized logits.
pub fn int8_forward<T: Scalar>(
    graph: &ModelGraph,
    model: &QuantModel<T>,
    input: &QuantTensor<T>,
) -> Result<Vec<T>, QuantError> {
    Ok(int8_forward_trace(graph, model, input)?.1)
}

/// Integer outputs of every layer in storage order, plus the logits.
pub fn int8_forward_trace<T: Scalar>(
    graph: &ModelGraph,
    model: &QuantModel<T>,
    input: &QuantTensor<T>,
) -> Result<(Vec<Vec<i8>>, Vec<T>), QuantError> {
    let shapes = shapes_of(graph)?;
    check_input(&shapes, input.data.len())?;
    if model.layers.len() != graph.len() {
        return Err(QuantError::ShapeMismatch {
            layer: graph.len(),
            what: "quantized layers",
            expected: graph.len(),
            found: model.layers.len(),
        });
    }
    let preds = graph.predecessor_positions();
    let last = graph.len() - 1;
    let mut outputs: Vec<Vec<i8>> = Vec::with_capacity(graph.len());
    let mut logits = None;

    for (pos, layer) in graph.layers.iter().enumerate() {
        let q = &model.layers[pos];
        let in_shape = shapes.inputs[pos];
        let out_shape = with_batch1(shapes.outputs[pos]);
        let in_params = |k: usize| match preds[pos].get(k) {
            Some(&p) => model.layers[p].output,
            None => input.params,
        };
        let src = |k: usize| -> &[i8] {
            match preds[pos].get(k) {
                Some(&p) => &outputs[p],
                None => &input.data,
            }
        };

        let out: Vec<i8> = match layer.kind {
            LayerKind::Conv2D | LayerKind::FullyConnected => {
                let w = q.weight.as_ref().ok_or(QuantError::ShapeMismatch {
                    layer: layer.id,
                    what: "weight tensors",
                    expected: 1,
                    found: 0,
                })?;
                let expected = expected_weight_len(graph, pos);
                if w.data.len() != expected || q.bias.len() != layer.out_channels {
                    return Err(QuantError::ShapeMismatch {
                        layer: layer.id,
                        what: "weights",
                        expected,
                        found: w.data.len(),
                    });
                }
                let mut acc = vec![0i32; out_shape.per_image()];
                let plane = out_shape.height * out_shape.width;
                for (oc, chunk) in acc.chunks_mut(plane).enumerate() {
                    chunk.fill(q.bias[oc]);
                }
                let mul = |x: i8, w: i8| x as i32 * w as i32;
                if layer.kind == LayerKind::Conv2D {
                    kernels::conv2d(layer, src(0), in_shape, &w.data, out_shape, &mut acc, mul);
                } else {
                    kernels::fully_connected(src(0), &w.data, &mut acc, mul);
                }
                let acc_scale = in_params(0).scale * w.params.scale;
                if pos == last {
                    logits = Some(acc.iter().map(|&a| T::of(a as f64) * acc_scale).collect());
                }
                acc.iter()
                    .map(|&a| requantize(T::of(a as f64) * acc_scale, q.output))
                    .collect()
            }
            LayerKind::Pool2D => {
                let mut acc = vec![0i32; out_shape.per_image()];
                kernels::pool_sum(layer, src(0), in_shape, out_shape, &mut acc, |x| x as i32);
                let area = (layer.kernel_h * layer.kernel_w) as f64;
                let ratio = in_params(0).scale / q.output.scale / T::of(area);
                acc.iter()
                    .map(|&a| requantize(T::of(a as f64) * ratio * q.output.scale, q.output))
                    .collect()
            }
            LayerKind::Activation => {
                let zero = q.output.zero_point.clamp(-128, 127) as i8;
                src(0).iter().map(|&x| x.max(zero)).collect()
            }
            LayerKind::ElementwiseAdd => {
                let (pa, pb) = (in_params(0), in_params(1));
                src(0)
                    .iter()
                    .zip(src(1))
                    .map(|(&a, &b)| {
                        requantize(pa.dequantize_value(a) + pb.dequantize_value(b), q.output)
                    })
                    .collect()
            }
        };
        outputs.push(out);
    }

    let logits = logits.unwrap_or_else(|| {
        let params = model.layers[last].output;
        outputs[last]
            .iter()
            .map(|&q| params.dequantize_value(q))
            .collect()
    });
    Ok((outputs, logits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Float,
    Int8,
}

/// Float weights together with their quantized counterpart.
#[derive(Debug, Clone)]
pub struct ModelWeights<T> {
    pub float: FloatWeights<T>,
    pub quant: QuantModel<T>,
}

impl<T: Scalar> ModelWeights<T> {
    pub fn new(
        graph: &ModelGraph,
        float: FloatWeights<T>,
        calibration: &[Tensor<T>],
        epsilon: T,
    ) -> Result<Self, QuantError> {
        let quant = QuantModel::calibrate(graph, &float, calibration, epsilon)?;
        Ok(Self { float, quant })
    }

    pub fn logits(
        &self,
        graph: &ModelGraph,
        input: &Tensor<T>,
        precision: Precision,
    ) -> Result<Vec<T>, QuantError> {
        match precision {
            Precision::Float => float_forward(graph, &self.float, input),
            Precision::Int8 => int8_forward(graph, &self.quant, &self.quant.quantize_input(input)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Percentage in [0, 100].
    pub top1_accuracy: f64,
    pub num_samples: usize,
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy of `weights` over `dataset` in the given precision.
pub fn eval_accuracy<T: Scalar>(
    graph: &ModelGraph,
    weights: &ModelWeights<T>,
    dataset: &Dataset<T>,
    precision: Precision,
) -> Result<EvalResult, QuantError> {
    if dataset.is_empty() {
        return Err(QuantError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (sample, &label) in dataset.samples.iter().zip(&dataset.labels) {
        if argmax(&weights.logits(graph, sample, precision)?) == label {
            correct += 1;
        }
    }
    Ok(EvalResult {
        top1_accuracy: 100.0 * correct as f64 / dataset.len() as f64,
        num_samples: dataset.len(),
    })
}
