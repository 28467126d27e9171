//! Seeded synthetic labeled datasets and their on-disk form.
//!
//! On disk a dataset is a directory holding `dataset.txt` (header, shape,
//! one label per line) and `samples.bin` (little-endian `f32`, samples
//! back to back in CHW order).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{QuantError, Tensor};
use crate::graph::TensorShape;
use crate::{Error, Scalar};

const INDEX: &str = "dataset.txt";
const SAMPLES: &str = "samples.bin";
const HEADER: &str = "# cosim dataset v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    /// Per-sample shape (batch 1).
    pub shape: TensorShape,
    pub samples: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

fn gaussian<T: Scalar>(rng: &mut ChaCha8Rng, shape: TensorShape, std: f64) -> Tensor<T> {
    let data = (0..shape.per_image())
        .map(|_| T::of(std * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor { shape, data }
}

/// Coarse grid points per side of the smooth input fields.
const FIELD_GRID: usize = 4;
const PROTOTYPE_OFFSET_STD: f64 = 2.0;
const VARIATION_OFFSET_STD: f64 = 0.5;

/// Gaussian values on a coarse grid per channel, bilinearly upsampled to
/// the full image, plus a per-channel offset of standard deviation
/// `offset_std`. Neighbouring pixels are correlated and channel means vary,
/// so pooled features differ from image to image as with natural images.
fn smooth_field<T: Scalar>(rng: &mut ChaCha8Rng, shape: TensorShape, offset_std: f64) -> Tensor<T> {
    let (h, w, g) = (shape.height, shape.width, FIELD_GRID);
    let coord = |i: usize, n: usize| {
        let x = if n > 1 {
            i as f64 * (g - 1) as f64 / (n - 1) as f64
        } else {
            0.0
        };
        let lo = (x.floor() as usize).min(g - 2);
        (lo, x - lo as f64)
    };
    let mut data = Vec::with_capacity(shape.per_image());
    for _ in 0..shape.channels {
        let offset: f64 = offset_std * rng.sample::<f64, _>(StandardNormal);
        let grid: Vec<f64> = (0..g * g)
            .map(|_| offset + rng.sample::<f64, _>(StandardNormal))
            .collect();
        for y in 0..h {
            let (y0, fy) = coord(y, h);
            for x in 0..w {
                let (x0, fx) = coord(x, w);
                let at = |r: usize, c: usize| grid[r * g + c];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
                let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
                data.push(T::of(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Tensor { shape, data }
}

/// Class-conditional image distribution: one smooth prototype per class,
/// and samples that add smooth within-class variation scaled by `spread`.
/// Larger spreads overlap the classes more.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask<T> {
    pub shape: TensorShape,
    pub prototypes: Vec<Tensor<T>>,
    pub spread: f64,
}

impl<T: Scalar> SyntheticTask<T> {
    pub fn new(shape: TensorShape, num_classes: usize, spread: f64, seed: u64) -> Self {
        assert!(num_classes > 0, "need at least one class");
        let shape = TensorShape { batch: 1, ..shape };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prototypes = (0..num_classes)
            .map(|_| smooth_field(&mut rng, shape, PROTOTYPE_OFFSET_STD))
            .collect();
        Self {
            shape,
            prototypes,
            spread,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    /// `count` samples with labels cycling through the classes.
    pub fn sample(&self, count: usize, seed: u64) -> Dataset<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spread = T::of(self.spread);
        let labels: Vec<usize> = (0..count).map(|i| i % self.num_classes()).collect();
        let samples = labels
            .iter()
            .map(|&label| {
                let variation = smooth_field::<T>(&mut rng, self.shape, VARIATION_OFFSET_STD);
                let data = self.prototypes[label]
                    .data
                    .iter()
                    .zip(&variation.data)
                    .map(|(&p, &v)| p + spread * v)
                    .collect();
                Tensor {
                    shape: self.shape,
                    data,
                }
            })
            .collect();
        Dataset {
            shape: self.shape,
            samples,
            labels,
        }
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Gaussian inputs with labels cycling through `num_classes`, so every
    /// class appears equally often. Labels carry no signal.
    pub fn random_balanced(
        shape: TensorShape,
        num_classes: usize,
        count: usize,
        seed: u64,
    ) -> Self {
        assert!(num_classes > 0, "need at least one class");
        let shape = TensorShape { batch: 1, ..shape };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..count).map(|_| gaussian(&mut rng, shape, 1.0)).collect();
        Self {
            shape,
            samples,
            labels: (0..count).map(|i| i % num_classes).collect(),
        }
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<(), Error> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let s = self.shape;
        let mut text = format!(
            "{HEADER}\nshape {} {} {}\ncount {}\n",
            s.channels,
            s.height,
            s.width,
            self.len()
        );
        for label in &self.labels {
            text.push_str(&format!("{label}\n"));
        }
        let mut blob = Vec::with_capacity(self.len() * s.per_image() * 4);
        for sample in &self.samples {
            for v in &sample.data {
                blob.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        let index = dir.join(INDEX);
        fs::write(&index, text).map_err(|e| Error::io(&index, e))?;
        let samples = dir.join(SAMPLES);
        fs::write(&samples, blob).map_err(|e| Error::io(&samples, e))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, Error> {
        let dir = dir.as_ref();
        let bad = |m: String| Error::Quant(QuantError::Format(m));
        let index = dir.join(INDEX);
        let text = fs::read_to_string(&index).map_err(|e| Error::io(&index, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad(format!(
                "{}: missing '{HEADER}' header",
                index.display()
            )));
        }
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("shape "))
            .map(|l| {
                l.split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect()
            })
            .unwrap_or_default();
        let [c, h, w] = dims[..] else {
            return Err(bad("expected 'shape C H W'".into()));
        };
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("count "))
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| bad("expected 'count N'".into()))?;
        let labels = lines
            .take(count)
            .map(|l| {
                l.trim()
                    .parse::<usize>()
                    .map_err(|e| bad(format!("bad label '{l}': {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if labels.len() != count {
            return Err(bad(format!(
                "expected {count} labels, found {}",
                labels.len()
            )));
        }

        let shape = TensorShape::new(1, c, h, w);
        let blob_path = dir.join(SAMPLES);
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let per = shape.per_image();
        if blob.len() != count * per * 4 {
            return Err(bad(format!(
                "{} holds {} bytes, expected {}",
                blob_path.display(),
                blob.len(),
                count * per * 4
            )));
        }
        let samples = blob
            .chunks_exact(per * 4)
            .map(|chunk| Tensor {
                shape,
                data: chunk
                    .chunks_exact(4)
                    .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
                    .collect(),
            })
            .collect();
        Ok(Self {
            shape,
            samples,
            labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_labels_and_determinism() {
        let shape = TensorShape::new(1, 2, 3, 3);
        let a = Dataset::<f32>::random_balanced(shape, 2, 10, 5);
        assert_eq!(a.labels.iter().filter(|&&l| l == 0).count(), 5);
        assert_eq!(a, Dataset::random_balanced(shape, 2, 10, 5));
        assert_ne!(a, Dataset::random_balanced(shape, 2, 10, 6));
    }

    #[test]
    fn task_samples_are_balanced_seeded_and_centered_on_prototypes() {
        let shape = TensorShape::new(1, 2, 6, 6);
        let task = SyntheticTask::<f64>::new(shape, 3, 0.5, 1);
        let a = task.sample(30, 2);
        assert_eq!(a, task.sample(30, 2));
        assert_ne!(a, task.sample(30, 3));
        assert_eq!(a.labels.iter().filter(|&&l| l == 1).count(), 10);

        let flat = SyntheticTask::<f64> {
            spread: 0.0,
            ..task.clone()
        };
        let b = flat.sample(3, 4);
        for (x, &l) in b.samples.iter().zip(&b.labels) {
            assert_eq!(x, &task.prototypes[l]);
        }
    }

    #[test]
    fn smooth_field_interpolates_between_grid_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = TensorShape::new(1, 1, 7, 7);
        let f = smooth_field::<f64>(&mut rng, shape, 0.0);
        // Even rows sit on grid rows; row 1 lies halfway between rows 0 and 2.
        for x in 0..7 {
            let expected = (f.data[x] + f.data[14 + x]) / 2.0;
            assert!((f.data[7 + x] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::<f32>::random_balanced(TensorShape::new(1, 3, 4, 4), 3, 7, 9);
        ds.save_dir(dir.path()).unwrap();
        assert_eq!(Dataset::load_dir(dir.path()).unwrap(), ds);

        fs::write(dir.path().join(SAMPLES), [0u8; 3]).unwrap();
        assert!(Dataset::<f32>::load_dir(dir.path()).is_err());
    }
}
