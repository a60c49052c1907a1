use crate::error::{Error, Result};

use super::tensor::Tensor;

/// All model weights and biases flattened in fixed layer order.
///
/// Client updates, norms, scaling and aggregation are all expressed in this
/// representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "parameter vectors of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Euclidean distance `‖a − b‖₂` between two parameter vectors.
pub fn norm_diff(a: &ParameterVector, b: &ParameterVector) -> Result<f64> {
    a.check_len(b)?;
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Gradients for every parameter tensor of a model, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    tensors: Vec<Tensor>,
}

impl GradientSet {
    pub(crate) fn new(tensors: Vec<Tensor>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn to_vector(&self) -> ParameterVector {
        let mut out = Vec::with_capacity(self.tensors.iter().map(Tensor::len).sum());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        ParameterVector(out)
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let tensors = self
            .tensors
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.data_mut().iter_mut().for_each(|v| *v *= factor);
                t
            })
            .collect();
        Self { tensors }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_diff_basic_cases() {
        let a = ParameterVector::new(vec![1.0, 2.0]);
        assert_eq!(norm_diff(&a, &a).unwrap(), 0.0);
        let b = ParameterVector::new(vec![-2.0, -2.0]);
        assert!((norm_diff(&a, &b).unwrap() - 5.0).abs() < 1e-12);
        assert!((norm_diff(&b, &a).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn norm_diff_rejects_length_mismatch() {
        let a = ParameterVector::zeros(3);
        let b = ParameterVector::zeros(4);
        assert!(matches!(norm_diff(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn norm_diff_matches_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..200);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut acc = 0.0;
            for i in 0..n {
                let d = a[i] - b[i];
                acc += d * d;
            }
            let expected = acc.sqrt();
            let got = norm_diff(&ParameterVector::new(a), &ParameterVector::new(b)).unwrap();
            assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }
}
