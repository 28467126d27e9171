//! Symmetric 8-bit quantization and the integer/float reference forward
//! passes used to measure accuracy fidelity.

mod dataset;
mod forward;
mod kernels;
mod weights;

pub use dataset::{Dataset, SyntheticTask};
pub use forward::{
    eval_accuracy, float_forward, float_forward_trace, int8_forward, int8_forward_trace,
    EvalResult, ModelWeights, Precision, QuantLayer, QuantModel,
};
pub use weights::{FloatWeights, LayerWeights};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TensorShape;
use crate::Scalar;

/// Smallest scale handed out by [`calibrate`].
pub const DEFAULT_SCALE_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("layer {layer}: expected {expected} {what}, found {found}")]
    ShapeMismatch {
        layer: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("input has {found} elements, graph expects {expected}")]
    InputMismatch { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("calibration needs at least one sample")]
    NoCalibrationData,
    #[error("{0}")]
    Format(String),
}

/// Dense single-image tensor in CHW order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: TensorShape,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: TensorShape, data: Vec<T>) -> Self {
        assert_eq!(
            shape.per_image(),
            data.len(),
            "tensor data does not match shape"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: TensorShape) -> Self {
        Self::new(shape, vec![T::zero(); shape.per_image()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams<T> {
    pub scale: T,
    pub zero_point: i32,
}

impl<T: Scalar> QuantParams<T> {
    pub fn symmetric(scale: T) -> Self {
        assert!(scale > T::zero(), "quantization scale must be positive");
        Self {
            scale,
            zero_point: 0,
        }
    }

    /// Rounds to the nearest step and saturates symmetrically to ±127.
    pub fn quantize_value(&self, v: T) -> i8 {
        let q = (v / self.scale)
            .round()
            .to_i64()
            .unwrap_or(if v > T::zero() { i64::MAX } else { i64::MIN });
        q.saturating_add(self.zero_point as i64).clamp(-127, 127) as i8
    }

    pub fn dequantize_value(&self, q: i8) -> T {
        self.scale * T::of((q as i32 - self.zero_point) as f64)
    }
}

/// 8-bit tensor with its quantization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor<T> {
    pub shape: TensorShape,
    pub data: Vec<i8>,
    pub params: QuantParams<T>,
}

/// Symmetric min-max calibration: `scale = max|v| / 127`, zero point 0,
/// floored at `epsilon` so all-zero tensors still get a usable scale.
pub fn calibrate<T: Scalar>(values: &[T], epsilon: T) -> QuantParams<T> {
    assert!(!values.is_empty(), "calibration needs values");
    let peak = values.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    QuantParams::symmetric((peak / T::of(127.0)).max(epsilon))
}

pub fn quantize<T: Scalar>(values: &Tensor<T>, params: QuantParams<T>) -> QuantTensor<T> {
    QuantTensor {
        shape: values.shape,
        data: values
            .data
            .iter()
            .map(|&v| params.quantize_value(v))
            .collect(),
        params,
    }
}

pub fn dequantize<T: Scalar>(q: &QuantTensor<T>) -> Tensor<T> {
    Tensor {
        shape: q.shape,
        data: q
            .data
            .iter()
            .map(|&v| q.params.dequantize_value(v))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vector<T: Scalar>(values: &[f64]) -> Tensor<T> {
        Tensor::new(
            TensorShape::new(1, values.len(), 1, 1),
            values.iter().map(|&v| T::of(v)).collect(),
        )
    }

    #[test]
    fn calibration_rules() {
        let p = calibrate(&[-1.0f64, 0.3, 1.0], 1e-8);
        assert_eq!(p.scale, 1.0 / 127.0);
        assert_eq!(p.zero_point, 0);

        let p = calibrate(&[0.0f64; 5], 1e-8);
        assert_eq!(p.scale, 1e-8);

        let p = calibrate(&[-3.0f32, 5.0], 1e-8);
        assert_eq!(p.scale, 5.0f32 / 127.0);
    }

    #[test]
    fn quantize_examples() {
        let p = QuantParams::symmetric(1.0f64 / 127.0);
        let q = quantize(&vector::<f64>(&[0.0, 1.0, 3.0, -3.0]), p);
        assert_eq!(q.data, vec![0, 127, 127, -127]);
        let back = dequantize(&q);
        assert_eq!(back.data[0], 0.0);
        assert!((back.data[1] - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip_within_half_step(values in prop::collection::vec(-50.0f64..50.0, 1..64)) {
            let t = vector::<f64>(&values);
            let p = calibrate(&t.data, 1e-8);
            let back = dequantize(&quantize(&t, p));
            for (v, d) in t.data.iter().zip(&back.data) {
                prop_assert!((v - d).abs() <= p.scale / 2.0 + 1e-12);
            }
        }

        #[test]
        fn round_trip_f32(values in prop::collection::vec(-2.0f32..2.0, 1..64)) {
            let t = vector::<f32>(&values.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let p = calibrate(&t.data, 1e-8);
            let back = dequantize(&quantize(&t, p));
            for (v, d) in t.data.iter().zip(&back.data) {
                prop_assert!((v - d).abs() <= p.scale * 0.5001);
            }
        }
    }
}
