use adafl::data::{partition_iid, synth_blobs, SynthSpec};
use adafl::federation::sample_compromised;
use adafl::rng::{stream, Purpose};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson statistic against equal expected counts.
fn chi_square(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

#[test]
fn iid_shards_have_balanced_labels() {
    let spec = SynthSpec::axis_layout(10, 10, 3.0, 1.0, 500, 7).unwrap();
    let d = synth_blobs(&spec).unwrap();
    let plan = partition_iid(&d, 50, 100, 11).unwrap();
    let shards = plan.materialize(&d).unwrap();
    // pool the per-shard statistics; each has 9 degrees of freedom
    let stat: f64 = shards.iter().map(|s| chi_square(&s.class_counts())).sum();
    let dist = ChiSquared::new(9.0 * shards.len() as f64).unwrap();
    let p = 1.0 - dist.cdf(stat);
    assert!(p > 0.001, "pooled chi-square {stat:.1}, p = {p:.2e}");
}

#[test]
fn selection_stream_is_uniform_over_clients() {
    let mut counts = vec![0usize; 20];
    for round in 0..2000 {
        let mut r = stream(3, round, Purpose::Selection, 0);
        counts[r.random_range(0..20)] += 1;
    }
    let p = 1.0 - ChiSquared::new(19.0).unwrap().cdf(chi_square(&counts));
    assert!(p > 0.001, "p = {p:.2e}");
}

#[test]
fn compromised_set_has_requested_size() {
    for (eps, want) in [(0.01, 1), (0.05, 5), (0.1, 10)] {
        assert_eq!(sample_compromised(100, eps, 4).unwrap().len(), want);
    }
}
