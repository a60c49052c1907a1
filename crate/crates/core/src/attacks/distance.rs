//! Attacking distance between classes in the latent feature space.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Per-class mean feature vectors; classes without samples are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeans {
    pub means: Vec<Option<Vec<f64>>>,
}

impl ClassMeans {
    pub fn missing(&self) -> Vec<usize> {
        self.means
            .iter()
            .enumerate()
            .filter_map(|(c, m)| m.is_none().then_some(c))
            .collect()
    }
}

/// Averages the rows of `features` by their class label.
pub fn class_means(features: &Tensor, labels: &[usize], classes: usize) -> Result<ClassMeans> {
    if features.shape().len() != 2 || features.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "features {:?} with {} labels",
            features.shape(),
            labels.len()
        )));
    }
    let dim = features.shape()[1];
    let mut sums = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Domain(format!("label {y} out of range for {classes} classes")));
        }
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    let means = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    Ok(ClassMeans { means })
}

/// Symmetric matrix of `‖μ_c − μ_c'‖₂`; entries touching an absent class are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    classes: usize,
    values: Vec<Option<f64>>,
}

impl DistanceMatrix {
    pub fn from_entries(classes: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != classes * classes {
            return Err(Error::Dimension(format!(
                "{} entries for a {classes}x{classes} matrix",
                values.len()
            )));
        }
        Ok(Self { classes, values })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values[a * self.classes + b]
    }

    pub fn row(&self, a: usize) -> &[Option<f64>] {
        &self.values[a * self.classes..(a + 1) * self.classes]
    }
}

pub fn attacking_distance(means: &ClassMeans) -> Result<DistanceMatrix> {
    let c = means.means.len();
    if c < 2 {
        return Err(Error::Domain("attacking distance needs at least two classes".into()));
    }
    let mut values = vec![None; c * c];
    for a in 0..c {
        for b in a..c {
            if let (Some(ma), Some(mb)) = (&means.means[a], &means.means[b]) {
                let d = if a == b {
                    0.0
                } else {
                    ma.iter()
                        .zip(mb)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                };
                values[a * c + b] = Some(d);
                values[b * c + a] = Some(d);
            }
        }
    }
    Ok(DistanceMatrix { classes: c, values })
}

/// Non-source class nearest to the source; ties go to the lowest class index.
pub fn select_target_full(adm: &DistanceMatrix, source: usize) -> Result<usize> {
    if source >= adm.classes {
        return Err(Error::Selection(format!(
            "source class {source} outside a {}-class matrix",
            adm.classes
        )));
    }
    argmin_excluding(adm.row(source).iter().copied().enumerate(), source)
        .ok_or_else(|| Error::Selection(format!("no distances available from class {source}")))
}

pub(crate) fn argmin_excluding(
    scores: impl Iterator<Item = (usize, Option<f64>)>,
    exclude: usize,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (c, s) in scores {
        let Some(s) = s else { continue };
        if c == exclude || s.is_nan() {
            continue;
        }
        if best.is_none_or(|(bc, bs)| s < bs || (s == bs && c < bc)) {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_matrix(source: usize, row: &[(usize, f64)], classes: usize) -> DistanceMatrix {
        let mut v = vec![None; classes * classes];
        v[source * classes + source] = Some(0.0);
        for &(c, d) in row {
            v[source * classes + c] = Some(d);
            v[c * classes + source] = Some(d);
        }
        DistanceMatrix::from_entries(classes, v).unwrap()
    }

    #[test]
    fn single_vector_means() {
        let f = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = class_means(&f, &[1, 0], 3).unwrap();
        assert_eq!(m.means[0], Some(vec![3.0, 4.0]));
        assert_eq!(m.means[1], Some(vec![1.0, 2.0]));
        assert_eq!(m.means[2], None);
        assert_eq!(m.missing(), vec![2]);
    }

    #[test]
    fn opposite_vectors_cancel() {
        let f = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, -1.0, 2.0, -0.5]).unwrap();
        let m = class_means(&f, &[0, 0], 1).unwrap();
        assert_eq!(m.means[0], Some(vec![0.0, 0.0, 0.0]));
    }

    #[test]
    fn analytic_distances() {
        let m = ClassMeans {
            means: vec![Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0]), Some(vec![1.0, 0.0])],
        };
        let d = attacking_distance(&m).unwrap();
        assert!((d.get(0, 1).unwrap() - 2f64.sqrt()).abs() < 1e-5);
        assert_eq!(d.get(0, 2), Some(0.0));
        assert_eq!(d.get(1, 1), Some(0.0));
        assert_eq!(d.get(1, 0), d.get(0, 1));
    }

    #[test]
    fn forced_argmin_and_tie_break() {
        let d = row_matrix(2, &[(0, 5.0), (1, 3.0), (3, 1.2), (4, 4.4)], 5);
        assert_eq!(select_target_full(&d, 2).unwrap(), 3);
        let tie = row_matrix(2, &[(1, 2.0), (3, 2.0)], 4);
        assert_eq!(select_target_full(&tie, 2).unwrap(), 1);
    }

    #[test]
    fn no_candidates_is_selection_error() {
        let d = row_matrix(0, &[], 3);
        assert!(matches!(select_target_full(&d, 0), Err(Error::Selection(_))));
    }
}
