//! Datasets: loaders, synthetic blobs, IID sharding and label flipping.

mod cifar;
mod idx;
mod partition;
mod poison;
mod synth;

pub use cifar::{encode_cifar_bin, load_cifar_bin, parse_cifar_bin, CIFAR_RECORD_LEN};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx};
pub use partition::{partition_iid, PartitionPlan};
pub use poison::{flip_labels, FlipReport, PoisonSpec};
pub use synth::{synth_blobs, SynthSpec};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// One labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Tensor,
    pub y: usize,
}

/// Labelled samples sharing one input shape.
///
/// Inputs are stored contiguously as `f32`; batches are materialised as `f64`
/// tensors on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_shape: Vec<usize>,
    num_classes: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        input_shape: Vec<usize>,
        num_classes: usize,
        features: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let row: usize = input_shape.iter().product();
        if row == 0 {
            return Err(Error::Dimension(format!("empty input shape {input_shape:?}")));
        }
        if features.len() != row * labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature values for {} samples of shape {input_shape:?}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite input value".into()));
        }
        Ok(Self {
            input_shape,
            num_classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn input(&self, i: usize) -> &[f32] {
        let n = self.input_len();
        &self.features[i * n..(i + 1) * n]
    }

    pub fn sample(&self, i: usize) -> Sample {
        let x = Tensor::new(
            self.input_shape.clone(),
            self.input(i).iter().map(|&v| v as f64).collect(),
        )
        .expect("stored shape is valid");
        Sample {
            x,
            y: self.labels[i],
        }
    }

    /// Gathers the listed samples into a `[n, input_shape..]` batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let n = self.input_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Dimension(format!(
                    "index {i} out of range for {} samples",
                    self.len()
                )));
            }
            data.extend(self.input(i).iter().map(|&v| v as f64));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.input_shape);
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// All samples as one batch.
    pub fn full_batch(&self) -> Result<(Tensor, Vec<usize>)> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let n = self.input_len();
        let mut features = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Dimension(format!(
                    "index {i} out of range for {} samples",
                    self.len()
                )));
            }
            features.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            input_shape: self.input_shape.clone(),
            num_classes: self.num_classes,
            features,
            labels,
        })
    }

    /// First `n` samples (or all of them when `n >= len`).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            input_shape: self.input_shape.clone(),
            num_classes: self.num_classes,
            features: self.features[..n * self.input_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &y)| (y == class).then_some(i))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub(crate) fn with_labels(&self, labels: Vec<usize>) -> Dataset {
        debug_assert_eq!(labels.len(), self.labels.len());
        Dataset {
            labels,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(vec![2], 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec![0, 2, 2]).unwrap()
    }

    #[test]
    fn rejects_inconsistent_construction() {
        assert!(Dataset::new(vec![2], 3, vec![0.0; 5], vec![0, 1, 2]).is_err());
        assert!(Dataset::new(vec![2], 2, vec![0.0; 6], vec![0, 1, 2]).is_err());
        assert!(Dataset::new(vec![1], 2, vec![f32::NAN], vec![0]).is_err());
    }

    #[test]
    fn batch_and_subset() {
        let d = tiny();
        let (x, y) = d.batch(&[2, 0]).unwrap();
        assert_eq!(x.shape(), &[2, 2]);
        assert_eq!(x.data(), &[4.0, 5.0, 0.0, 1.0]);
        assert_eq!(y, vec![2, 0]);
        let s = d.subset(&[1]).unwrap();
        assert_eq!(s.labels(), &[2]);
        assert_eq!(s.input(0), &[2.0, 3.0]);
        assert_eq!(d.class_counts(), vec![1, 0, 2]);
        assert_eq!(d.indices_of_class(2), vec![1, 2]);
        assert_eq!(d.sample(1).y, 2);
    }
}
