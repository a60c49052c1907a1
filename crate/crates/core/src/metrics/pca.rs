use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Samples projected onto the leading principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// One row of `k` coordinates per sample.
    pub coords: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Unit component vectors, largest variance first.
    pub components: Vec<Vec<f64>>,
    /// Share of total variance captured by each component.
    pub explained: Vec<f64>,
    /// Set when the samples have no variance at all.
    pub degenerate: bool,
}

/// Mean-centred projection onto the top `k` eigenvectors of the sample covariance.
pub fn pca_project(features: &Tensor, labels: &[usize], k: usize) -> Result<PcaProjection> {
    if features.shape().len() != 2 || features.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "features {:?} with {} labels",
            features.shape(),
            labels.len()
        )));
    }
    let (n, dim) = (features.rows(), features.shape()[1]);
    if n < 2 || dim < 2 || k == 0 || k > dim {
        return Err(Error::Domain(format!(
            "need >= 2 samples, dim >= 2 and 1 <= k <= dim (n={n}, dim={dim}, k={k})"
        )));
    }
    let x = DMatrix::from_row_slice(n, dim, features.data());
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let total: f64 = cov.diagonal().iter().sum();
    if total <= 0.0 {
        return Ok(PcaProjection {
            coords: vec![vec![0.0; k]; n],
            labels: labels.to_vec(),
            components: (0..k)
                .map(|c| (0..dim).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
                .collect(),
            explained: vec![0.0; k],
            degenerate: true,
        });
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let components: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&c| {
            let v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            // fix the sign so the largest-magnitude entry is positive
            let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.into_iter().map(|x| -x).collect()
            } else {
                v
            }
        })
        .collect();
    let explained = order[..k]
        .iter()
        .map(|&c| eig.eigenvalues[c].max(0.0) / total)
        .collect();
    let coords = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|v| centred.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        coords,
        labels: labels.to_vec(),
        components,
        explained,
        degenerate: false,
    })
}
