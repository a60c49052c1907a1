use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

use super::Dataset;

/// Source class, target class and injection rate for label flipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoisonSpec {
    pub source: usize,
    pub target: usize,
    pub alpha: f64,
}

impl PoisonSpec {
    pub fn new(source: usize, target: usize, alpha: f64) -> Result<Self> {
        if source == target {
            return Err(Error::Config(format!("source and target are both {source}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("injection rate {alpha} outside (0, 1]")));
        }
        Ok(Self {
            source,
            target,
            alpha,
        })
    }

    /// `⌊α·N⌋`, with a small tolerance so e.g. `0.29 · 100` counts as 29.
    pub fn flip_count(&self, n: usize) -> usize {
        ((self.alpha * n as f64) + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipReport {
    /// Indices relabelled to the target, ascending.
    pub flipped: Vec<usize>,
    pub source_flips: usize,
    pub filler_flips: usize,
    /// Set when the shard holds no source-class sample.
    pub source_absent: bool,
}

/// Relabels exactly `⌊α·N⌋` samples to the target class: source-class samples
/// first (a uniform subset if there are more than needed), then uniformly
/// chosen non-source samples to make up the count. Inputs are never touched.
pub fn flip_labels<R: Rng + ?Sized>(
    d: &Dataset,
    spec: &PoisonSpec,
    rng: &mut R,
) -> Result<(Dataset, FlipReport)> {
    if d.is_empty() {
        return Err(Error::Domain("cannot poison an empty dataset".into()));
    }
    if spec.source >= d.num_classes() || spec.target >= d.num_classes() {
        return Err(Error::Domain(format!(
            "classes ({}, {}) out of range for {} classes",
            spec.source,
            spec.target,
            d.num_classes()
        )));
    }
    let k = spec.flip_count(d.len());
    let source = d.indices_of_class(spec.source);
    let mut flipped: Vec<usize> = if source.len() >= k {
        index::sample(rng, source.len(), k)
            .into_iter()
            .map(|i| source[i])
            .collect()
    } else {
        let others: Vec<usize> = (0..d.len())
            .filter(|&i| d.labels()[i] != spec.source)
            .collect();
        let mut chosen = source.clone();
        chosen.extend(
            index::sample(rng, others.len(), k - source.len())
                .into_iter()
                .map(|i| others[i]),
        );
        chosen
    };
    flipped.sort_unstable();
    let source_flips = source.len().min(k);
    let mut labels = d.labels().to_vec();
    for &i in &flipped {
        labels[i] = spec.target;
    }
    Ok((
        d.with_labels(labels),
        FlipReport {
            filler_flips: flipped.len() - source_flips,
            source_flips,
            flipped,
            source_absent: source.is_empty(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 100 samples, 10 of class 2, the rest spread over 0,1,3..9.
    fn shard() -> Dataset {
        let labels: Vec<usize> = (0..100)
            .map(|i| if i % 10 == 0 { 2 } else { [0, 1, 3, 4, 5, 6, 7, 8, 9][i % 9] })
            .collect();
        let features = (0..100).map(|i| i as f32).collect();
        Dataset::new(vec![1], 10, features, labels).unwrap()
    }

    #[test]
    fn full_injection_relabels_everything() {
        let d = shard();
        let spec = PoisonSpec::new(2, 5, 1.0).unwrap();
        let (p, r) = flip_labels(&d, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(p.labels().iter().all(|&y| y == 5));
        assert_eq!(r.flipped.len(), 100);
        assert_eq!(p.features(), d.features());
    }

    #[test]
    fn exact_fit_flips_only_source() {
        let d = shard();
        let spec = PoisonSpec::new(2, 5, 0.1).unwrap();
        let (p, r) = flip_labels(&d, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.flipped, d.indices_of_class(2));
        assert_eq!((r.source_flips, r.filler_flips), (10, 0));
        assert!(p.indices_of_class(2).is_empty());
    }

    #[test]
    fn under_supplied_source_is_filled_from_others() {
        let d = shard();
        let spec = PoisonSpec::new(2, 5, 0.2).unwrap();
        let (p, r) = flip_labels(&d, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // count by direct enumeration over the relabelled output
        assert_eq!(p.labels().iter().filter(|&&y| y == 5).count(), d.class_counts()[5] + 20
            - r.flipped.iter().filter(|&&i| d.labels()[i] == 5).count());
        assert_eq!(r.flipped.len(), 20);
        let source_changed = (0..100).filter(|&i| d.labels()[i] == 2 && p.labels()[i] == 5).count();
        assert_eq!(source_changed, 10);
        let others_flipped = r.flipped.iter().filter(|&&i| d.labels()[i] != 2).count();
        assert_eq!(others_flipped, 10);
        assert_eq!((r.source_flips, r.filler_flips), (10, 10));
    }

    #[test]
    fn over_supplied_source_is_subsampled() {
        let d = shard();
        let spec = PoisonSpec::new(2, 5, 0.05).unwrap();
        let (p, r) = flip_labels(&d, &spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(r.flipped.len(), 5);
        assert!(r.flipped.iter().all(|&i| d.labels()[i] == 2));
        assert_eq!(p.indices_of_class(2).len(), 5);
    }

    #[test]
    fn missing_source_reports_zero_source_flips() {
        let d = Dataset::new(vec![1], 3, vec![0.0; 10], vec![0; 10]).unwrap();
        let spec = PoisonSpec::new(2, 1, 0.3).unwrap();
        let (_, r) = flip_labels(&d, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(r.source_absent);
        assert_eq!(r.source_flips, 0);
        assert_eq!(r.flipped.len(), 3);
    }

    #[test]
    fn spec_validation() {
        assert!(PoisonSpec::new(1, 1, 0.5).is_err());
        assert!(PoisonSpec::new(1, 2, 0.0).is_err());
        assert!(PoisonSpec::new(1, 2, 1.5).is_err());
        assert_eq!(PoisonSpec::new(1, 2, 0.29).unwrap().flip_count(100), 29);
    }
}
