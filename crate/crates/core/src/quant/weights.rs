//! Float weights and the on-disk weight format.
//!
//! A weight directory holds `tensors.bin` (little-endian tensors, packed
//! back to back) and `manifest.txt`, one line per tensor:
//!
//! ```text
//! tensor layer=3 name=weight dtype=i8 dims=32x16x3x3 scale=0.0123 offset=0 count=4608
//! ```
//!
//! Quantized models add `input scale=...` and `act layer=... scale=...`
//! lines for the activation parameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::QuantError;
use crate::graph::{LayerKind, ModelGraph};
use crate::{Error, Scalar};

pub(crate) const MANIFEST: &str = "manifest.txt";
pub(crate) const TENSORS: &str = "tensors.bin";
const HEADER: &str = "# cosim weights v1";

/// Parameters of one weighted layer. Convolution weights are laid out
/// `[out][in][kh][kw]`, dense weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Float parameters aligned with the graph's storage order; `None` for
/// layers without weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatWeights<T> {
    pub layers: Vec<Option<LayerWeights<T>>>,
}

pub(crate) fn expected_weight_len(graph: &ModelGraph, pos: usize) -> usize {
    let l = &graph.layers[pos];
    match l.kind {
        LayerKind::Conv2D => l.out_channels * l.in_channels * l.kernel_h * l.kernel_w,
        LayerKind::FullyConnected => l.out_channels * l.in_channels,
        _ => 0,
    }
}

impl<T: Scalar> FloatWeights<T> {
    /// He-uniform weights and zero biases from a seeded generator. Bounded
    /// support lets a per-tensor int8 scale use its whole range.
    pub fn he_init(graph: &ModelGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = graph
            .layers
            .iter()
            .enumerate()
            .map(|(pos, l)| {
                if !l.kind.has_weights() {
                    return None;
                }
                let fan_in = (l.in_channels * l.kernel_h * l.kernel_w) as f64;
                let limit = (6.0 / fan_in).sqrt();
                let weight = (0..expected_weight_len(graph, pos))
                    .map(|_| T::of(rng.gen_range(-limit..=limit)))
                    .collect();
                Some(LayerWeights {
                    weight,
                    bias: vec![T::zero(); l.out_channels],
                })
            })
            .collect();
        Self { layers }
    }

    /// Checks that every weighted layer has correctly sized tensors.
    pub fn check(&self, graph: &ModelGraph) -> Result<(), QuantError> {
        if self.layers.len() != graph.len() {
            return Err(QuantError::ShapeMismatch {
                layer: graph.len(),
                what: "layer entries",
                expected: graph.len(),
                found: self.layers.len(),
            });
        }
        for (pos, (layer, w)) in graph.layers.iter().zip(&self.layers).enumerate() {
            match (layer.kind.has_weights(), w) {
                (false, None) => {}
                (false, Some(_)) | (true, None) => {
                    return Err(QuantError::ShapeMismatch {
                        layer: layer.id,
                        what: "weight tensors",
                        expected: usize::from(layer.kind.has_weights()),
                        found: usize::from(w.is_some()),
                    })
                }
                (true, Some(w)) => {
                    let expected = expected_weight_len(graph, pos);
                    if w.weight.len() != expected {
                        return Err(QuantError::ShapeMismatch {
                            layer: layer.id,
                            what: "weights",
                            expected,
                            found: w.weight.len(),
                        });
                    }
                    if w.bias.len() != layer.out_channels {
                        return Err(QuantError::ShapeMismatch {
                            layer: layer.id,
                            what: "biases",
                            expected: layer.out_channels,
                            found: w.bias.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, graph: &ModelGraph, dir: impl AsRef<Path>) -> Result<(), Error> {
        let mut writer = ManifestWriter::default();
        for (layer, w) in graph.layers.iter().zip(&self.layers) {
            if let Some(w) = w {
                let dims = weight_dims(layer);
                let f32s = |v: &[T]| v.iter().map(|x| x.as_f64() as f32).collect::<Vec<_>>();
                writer.push_f32(layer.id, "weight", &dims, &f32s(&w.weight));
                writer.push_f32(layer.id, "bias", &[w.bias.len()], &f32s(&w.bias));
            }
        }
        writer.write(dir.as_ref())
    }

    pub fn load(graph: &ModelGraph, dir: impl AsRef<Path>) -> Result<Self, Error> {
        let manifest = Manifest::read(dir.as_ref())?;
        let mut layers = vec![None; graph.len()];
        for (pos, layer) in graph.layers.iter().enumerate() {
            if !layer.kind.has_weights() {
                continue;
            }
            let weight = manifest.f32_tensor(layer.id, "weight")?;
            let bias = manifest.f32_tensor(layer.id, "bias")?;
            layers[pos] = Some(LayerWeights {
                weight: weight.into_iter().map(|v| T::of(v as f64)).collect(),
                bias: bias.into_iter().map(|v| T::of(v as f64)).collect(),
            });
        }
        let weights = Self { layers };
        weights.check(graph)?;
        Ok(weights)
    }
}

pub(crate) fn weight_dims(layer: &crate::graph::LayerSpec) -> Vec<usize> {
    match layer.kind {
        LayerKind::Conv2D => vec![
            layer.out_channels,
            layer.in_channels,
            layer.kernel_h,
            layer.kernel_w,
        ],
        _ => vec![layer.out_channels, layer.in_channels],
    }
}

#[derive(Default)]
pub(crate) struct ManifestWriter {
    lines: Vec<String>,
    blob: Vec<u8>,
}

impl ManifestWriter {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        layer: usize,
        name: &str,
        dtype: &str,
        dims: &[usize],
        scale: Option<f64>,
        bytes: &[u8],
        count: usize,
    ) {
        let dims = dims
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("x");
        let scale = scale.map_or_else(|| "-".to_string(), |s| s.to_string());
        self.lines.push(format!(
            "tensor layer={layer} name={name} dtype={dtype} dims={dims} scale={scale} offset={} count={count}",
            self.blob.len()
        ));
        self.blob.extend_from_slice(bytes);
    }

    pub(crate) fn push_f32(&mut self, layer: usize, name: &str, dims: &[usize], values: &[f32]) {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(layer, name, "f32", dims, None, &bytes, values.len());
    }

    pub(crate) fn push_i8(
        &mut self,
        layer: usize,
        name: &str,
        dims: &[usize],
        scale: f64,
        values: &[i8],
    ) {
        let bytes: Vec<u8> = values.iter().map(|&v| v as u8).collect();
        self.push(layer, name, "i8", dims, Some(scale), &bytes, values.len());
    }

    pub(crate) fn push_i32(&mut self, layer: usize, name: &str, scale: f64, values: &[i32]) {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(
            layer,
            name,
            "i32",
            &[values.len()],
            Some(scale),
            &bytes,
            values.len(),
        );
    }

    pub(crate) fn push_line(&mut self, line: String) {
        self.lines.push(line);
    }

    pub(crate) fn write(self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut text = String::from(HEADER);
        text.push('\n');
        for line in &self.lines {
            text.push_str(line);
            text.push('\n');
        }
        let manifest = dir.join(MANIFEST);
        fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
        let tensors = dir.join(TENSORS);
        fs::write(&tensors, &self.blob).map_err(|e| Error::io(&tensors, e))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TensorEntry {
    dtype: String,
    pub(crate) scale: Option<f64>,
    offset: usize,
    count: usize,
}

/// Parsed manifest plus the tensor blob.
pub(crate) struct Manifest {
    pub(crate) tensors: BTreeMap<(usize, String), TensorEntry>,
    /// Non-tensor lines as key/value maps, tagged by their first word.
    pub(crate) records: Vec<(String, BTreeMap<String, String>)>,
    blob: Vec<u8>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Quant(QuantError::Format(msg.into()))
}

impl Manifest {
    pub(crate) fn read(dir: &Path) -> Result<Self, Error> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let blob_path = dir.join(TENSORS);
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(format_err(format!(
                "{}: missing '{HEADER}' header",
                path.display()
            )));
        }
        let mut tensors = BTreeMap::new();
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let tag = words.next().unwrap_or_default().to_string();
            let mut fields = BTreeMap::new();
            for word in words {
                let (k, v) = word.split_once('=').ok_or_else(|| {
                    format_err(format!("manifest line {}: bad field '{word}'", n + 2))
                })?;
                fields.insert(k.to_string(), v.to_string());
            }
            if tag == "tensor" {
                let get = |k: &str| {
                    fields
                        .get(k)
                        .cloned()
                        .ok_or_else(|| format_err(format!("manifest line {}: missing {k}", n + 2)))
                };
                let num = |k: &str| -> Result<usize, Error> {
                    get(k)?
                        .parse()
                        .map_err(|_| format_err(format!("manifest line {}: bad {k}", n + 2)))
                };
                let scale =
                    match get("scale")?.as_str() {
                        "-" => None,
                        s => Some(s.parse().map_err(|_| {
                            format_err(format!("manifest line {}: bad scale", n + 2))
                        })?),
                    };
                tensors.insert(
                    (num("layer")?, get("name")?),
                    TensorEntry {
                        dtype: get("dtype")?,
                        scale,
                        offset: num("offset")?,
                        count: num("count")?,
                    },
                );
            } else {
                records.push((tag, fields));
            }
        }
        Ok(Self {
            tensors,
            records,
            blob,
        })
    }

    pub(crate) fn entry(
        &self,
        layer: usize,
        name: &str,
        dtype: &str,
    ) -> Result<&TensorEntry, Error> {
        let entry = self
            .tensors
            .get(&(layer, name.to_string()))
            .ok_or_else(|| format_err(format!("no tensor '{name}' for layer {layer}")))?;
        if entry.dtype != dtype {
            return Err(format_err(format!(
                "layer {layer} {name}: expected dtype {dtype}, found {}",
                entry.dtype
            )));
        }
        Ok(entry)
    }

    fn bytes(&self, entry: &TensorEntry, width: usize) -> Result<&[u8], Error> {
        let end = entry.offset + entry.count * width;
        self.blob
            .get(entry.offset..end)
            .ok_or_else(|| format_err("tensor extends past the end of tensors.bin"))
    }

    pub(crate) fn f32_tensor(&self, layer: usize, name: &str) -> Result<Vec<f32>, Error> {
        let entry = self.entry(layer, name, "f32")?;
        Ok(self
            .bytes(entry, 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub(crate) fn i8_tensor(
        &self,
        layer: usize,
        name: &str,
    ) -> Result<(Vec<i8>, Option<f64>), Error> {
        let entry = self.entry(layer, name, "i8")?;
        Ok((
            self.bytes(entry, 1)?.iter().map(|&b| b as i8).collect(),
            entry.scale,
        ))
    }

    pub(crate) fn i32_tensor(&self, layer: usize, name: &str) -> Result<Vec<i32>, Error> {
        let entry = self.entry(layer, name, "i32")?;
        Ok(self
            .bytes(entry, 4)?
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
