use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::Dataset;

/// Disjoint per-client index lists into a shared dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub seed: u64,
    pub shards: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn clients(&self) -> usize {
        self.shards.len()
    }

    pub fn materialize(&self, d: &Dataset) -> Result<Vec<Dataset>> {
        self.shards.iter().map(|s| d.subset(s)).collect()
    }
}

/// Uniformly shuffles the dataset and deals `clients` shards of `per_client`
/// samples each.
pub fn partition_iid(d: &Dataset, clients: usize, per_client: usize, seed: u64) -> Result<PartitionPlan> {
    let requested = clients
        .checked_mul(per_client)
        .ok_or_else(|| Error::Config("partition size overflow".into()))?;
    if requested > d.len() {
        return Err(Error::Capacity {
            requested,
            available: d.len(),
        });
    }
    if clients == 0 || per_client == 0 {
        return Err(Error::Config("clients and per-client size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let shards = order
        .chunks_exact(per_client)
        .take(clients)
        .map(<[usize]>::to_vec)
        .collect();
    Ok(PartitionPlan { seed, shards })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn labelled(n: usize, classes: usize) -> Dataset {
        Dataset::new(vec![1], classes, vec![0.0; n], (0..n).map(|i| i % classes).collect()).unwrap()
    }

    #[test]
    fn hundred_clients_exact_cover() {
        let d = labelled(50_000, 10);
        let plan = partition_iid(&d, 100, 500, 1).unwrap();
        assert_eq!(plan.clients(), 100);
        let mut seen = HashSet::new();
        for s in &plan.shards {
            assert_eq!(s.len(), 500);
            for &i in s {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 50_000);
    }

    #[test]
    fn single_client_takes_everything() {
        let d = labelled(37, 3);
        let plan = partition_iid(&d, 1, 37, 4).unwrap();
        let mut s = plan.shards[0].clone();
        s.sort_unstable();
        assert_eq!(s, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn capacity_and_determinism() {
        let d = labelled(100, 2);
        assert!(matches!(
            partition_iid(&d, 11, 10, 0),
            Err(Error::Capacity { requested: 110, available: 100 })
        ));
        assert_eq!(partition_iid(&d, 5, 10, 3).unwrap(), partition_iid(&d, 5, 10, 3).unwrap());
        assert_ne!(partition_iid(&d, 5, 10, 3).unwrap(), partition_iid(&d, 5, 10, 4).unwrap());
    }
}
