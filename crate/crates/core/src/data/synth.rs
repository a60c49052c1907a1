//! Gaussian blob datasets with known class geometry.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Dataset;

/// Isotropic Gaussian clusters, one per class, around explicit means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn from_means(means: Vec<Vec<f64>>, sigma: f64, per_class: usize, seed: u64) -> Self {
        Self {
            means,
            sigma,
            per_class,
            seed,
        }
    }

    /// Class `c` sits at `spacing · e_c`, so every pair starts `spacing·√2` apart.
    /// Requires `dim >= classes`.
    pub fn axis_layout(
        classes: usize,
        dim: usize,
        spacing: f64,
        sigma: f64,
        per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        if dim < classes {
            return Err(Error::Config(format!(
                "axis layout needs dim >= classes ({dim} < {classes})"
            )));
        }
        let means = (0..classes)
            .map(|c| {
                let mut m = vec![0.0; dim];
                m[c] = spacing;
                m
            })
            .collect();
        Ok(Self::from_means(means, sigma, per_class, seed))
    }

    /// Moves class `b` to `means[a] + gap · e_b`, making it exactly `gap` away
    /// from class `a`.
    pub fn with_partner(mut self, a: usize, b: usize, gap: f64) -> Result<Self> {
        let c = self.means.len();
        if a >= c || b >= c || a == b {
            return Err(Error::Config(format!("invalid partner pair ({a}, {b})")));
        }
        if b >= self.means[a].len() {
            return Err(Error::Config(format!("class {b} has no axis of its own")));
        }
        let mut m = self.means[a].clone();
        m[b] += gap;
        self.means[b] = m;
        Ok(self)
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn mean_distance(&self, a: usize, b: usize) -> f64 {
        self.means[a]
            .iter()
            .zip(&self.means[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// The class whose configured mean is closest to `class`'s (lowest index on ties).
    pub fn nearest_class(&self, class: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..self.classes()).filter(|&c| c != class) {
            let d = self.mean_distance(class, c);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        best.map(|(c, _)| c)
    }
}

/// Draws `per_class` points for every class; sample `i` belongs to class
/// `i % classes`.
pub fn synth_blobs(spec: &SynthSpec) -> Result<Dataset> {
    let c = spec.classes();
    if c < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    let dim = spec.dim();
    if dim == 0 || spec.means.iter().any(|m| m.len() != dim) {
        return Err(Error::Config("class means must share a positive dimension".into()));
    }
    if !(spec.sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {}", spec.sigma)));
    }
    if spec.per_class == 0 {
        return Err(Error::Config("per_class must be positive".into()));
    }
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = c * spec.per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % c;
        features.extend(spec.means[y].iter().map(|&m| (m + noise.sample(&mut rng)) as f32));
        labels.push(y);
    }
    Dataset::new(vec![dim], c, features, labels)
}
