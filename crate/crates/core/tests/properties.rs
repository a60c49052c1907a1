mod common;

use adafl::attacks::train_and_scale;
use adafl::data::{flip_labels, partition_iid, Dataset, PoisonSpec};
use adafl::defense::ndc_filter;
use adafl::federation::aggregate_fedavg;
use adafl::metrics::Predictions;
use adafl::nn::ParameterVector;
use proptest::prelude::*;

use common::{fedavg_oracle, record, rng};

fn deltas(dim: usize, k: usize) -> impl Strategy<Value = Vec<(Vec<f64>, usize)>> {
    prop::collection::vec((prop::collection::vec(-10.0f64..10.0, dim), 1usize..500), 1..=k)
}

fn labelled(n: usize, classes: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::vec(0..classes, n).prop_map(move |labels| {
        let features = labels.iter().map(|&l| l as f32).collect();
        Dataset::new(vec![1], classes, features, labels).unwrap()
    })
}

proptest! {
    #[test]
    fn fedavg_matches_oracle(dim in 1usize..20, seed in any::<u64>()) {
        let mut r = rng(seed);
        let global = common::normal_vec(&mut r, dim);
        let k = 1 + (seed % 6) as usize;
        let ds: Vec<Vec<f64>> = (0..k).map(|_| common::normal_vec(&mut r, dim)).collect();
        let ns: Vec<usize> = (0..k).map(|i| 1 + (seed as usize >> i) % 300).collect();
        let ups: Vec<_> = ds.iter().zip(&ns).enumerate().map(|(i, (d, &n))| record(i, d.clone(), n)).collect();
        let got = aggregate_fedavg(&ParameterVector::new(global.clone()), &ups).unwrap();
        for (a, b) in got.as_slice().iter().zip(fedavg_oracle(&global, &ds, &ns)) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn fedavg_ignores_order(ups in deltas(5, 6), rot in 0usize..6) {
        let g = ParameterVector::zeros(5);
        let recs: Vec<_> = ups.iter().enumerate().map(|(i, (d, n))| record(i, d.clone(), *n)).collect();
        let mut rotated = recs.clone();
        rotated.rotate_left(rot % recs.len());
        let a = aggregate_fedavg(&g, &recs).unwrap();
        let b = aggregate_fedavg(&g, &rotated).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn ndc_is_idempotent_and_partitions(ups in deltas(4, 8), q in 0.1f64..30.0) {
        let recs: Vec<_> = ups.iter().enumerate().map(|(i, (d, n))| record(i, d.clone(), *n)).collect();
        let once = ndc_filter(recs.clone(), q).unwrap();
        prop_assert_eq!(once.accepted.len() + once.rejected.len(), recs.len());
        prop_assert!(once.accepted.iter().all(|u| u.norm <= q));
        prop_assert!(once.rejected.iter().all(|r| r.norm > q));
        let twice = ndc_filter(once.accepted.clone(), q).unwrap();
        prop_assert_eq!(twice.accepted, once.accepted);
        prop_assert!(twice.rejected.is_empty());
    }

    #[test]
    fn scaling_hits_bound_and_keeps_direction(
        g in prop::collection::vec(-50.0f64..50.0, 1..30),
        seed in any::<u64>(),
        q in 1e-3f64..100.0,
    ) {
        let mut r = rng(seed);
        let step = common::normal_vec(&mut r, g.len());
        prop_assume!(step.iter().any(|v| *v != 0.0));
        let gv = ParameterVector::new(g.clone());
        let adv = ParameterVector::new(g.iter().zip(&step).map(|(a, b)| a + b).collect());
        let (out, _) = train_and_scale(&adv, &gv, q).unwrap();
        let d = out.sub(&gv).unwrap();
        prop_assert!(d.norm() <= q);
        prop_assert!((d.norm() - q).abs() <= 1e-9 * q.max(1.0));
        let cos = d.dot(&adv.sub(&gv).unwrap()).unwrap() / (d.norm() * adv.sub(&gv).unwrap().norm());
        prop_assert!((cos - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn max_ata_dominates_every_target(
        pairs in prop::collection::vec((0usize..6, 0usize..6), 1..120),
        source in 0usize..6,
    ) {
        let (mut labels, predicted): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        labels[0] = source;
        let p = Predictions::new(labels, predicted, 6).unwrap();
        let (best, class) = p.max_ata(source).unwrap();
        prop_assert_ne!(class, source);
        for t in (0..6).filter(|&t| t != source) {
            prop_assert!(best >= p.ts_ata(source, t).unwrap());
        }
    }

    #[test]
    fn flipping_only_touches_labels(d in labelled(60, 4), alpha in 0.01f64..1.0, seed in any::<u64>()) {
        let spec = PoisonSpec::new(1, 3, alpha).unwrap();
        let (poisoned, report) = flip_labels(&d, &spec, &mut rng(seed)).unwrap();
        prop_assert_eq!(poisoned.features(), d.features());
        prop_assert_eq!(report.flipped.len(), spec.flip_count(d.len()));
        let changed: Vec<usize> = (0..d.len()).filter(|&i| poisoned.labels()[i] != d.labels()[i]).collect();
        prop_assert!(changed.iter().all(|i| report.flipped.contains(i)));
        prop_assert!(report.flipped.iter().all(|&i| poisoned.labels()[i] == 3));
        let src = d.indices_of_class(1).len();
        prop_assert_eq!(report.source_flips, src.min(report.flipped.len()));
    }

    #[test]
    fn partition_is_disjoint(n in 10usize..300, clients in 1usize..10, seed in any::<u64>()) {
        let d = Dataset::new(vec![1], 2, vec![0.0; n], vec![0; n]).unwrap();
        let per = n / clients;
        prop_assume!(per > 0);
        let plan = partition_iid(&d, clients, per, seed).unwrap();
        let mut seen = vec![false; n];
        for shard in &plan.shards {
            prop_assert_eq!(shard.len(), per);
            for &i in shard {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
    }
}
