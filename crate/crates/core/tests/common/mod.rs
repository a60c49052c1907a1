#![allow(dead_code)]

use adafl::attacks::{attacking_distance, flame_scores, select_target_full, train_and_scale, ClassMeans};
use adafl::defense::ndc_filter;
use adafl::federation::{aggregate_fedavg, UpdateRecord};
use adafl::harness::config::ExperimentConfig;
use adafl::harness::presets;
use adafl::metrics::Predictions;
use adafl::nn::{LayerSpec, ModelState, ParameterVector, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Largest elementwise relative error between backprop and central
/// differences; entries where both sides are below `floor` are compared
/// against `floor` instead of their own magnitude.
pub fn gradient_check(model: &ModelState, x: &Tensor, y: &[usize], step: f64, floor: f64) -> f64 {
    let analytic = model.backward(x, y).unwrap().to_vector();
    let theta = model.to_vector();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        plus.as_mut_slice()[i] += step;
        let mut minus = theta.clone();
        minus.as_mut_slice()[i] -= step;
        let lp = model.with_vector(&plus).unwrap().loss(x, y).unwrap();
        let lm = model.with_vector(&minus).unwrap().loss(x, y).unwrap();
        let numeric = (lp - lm) / (2.0 * step);
        let a = analytic.as_slice()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// The three gradient-check model families: a 3-class MLP, a lone dense
/// layer, and a convolution feeding a dense head.
pub fn gradient_models(seed: u64) -> Vec<(&'static str, ModelState, Tensor, Vec<usize>)> {
    let mut r = rng(seed);
    let batch = 4;
    let mlp = ModelState::mlp(5, &[7], 3, seed).unwrap();
    let dense = ModelState::new(vec![6], &[LayerSpec::Dense { in_dim: 6, out_dim: 4 }, LayerSpec::Softmax], seed).unwrap();
    let conv = ModelState::new(
        vec![2, 6, 6],
        &[
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel: 3,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { in_dim: 48, out_dim: 3 },
            LayerSpec::Softmax,
        ],
        seed,
    )
    .unwrap();
    let mk = |r: &mut ChaCha8Rng, shape: Vec<usize>, classes: usize| {
        let len: usize = shape.iter().product();
        let x = Tensor::new([vec![batch], shape].concat(), normal_vec(r, batch * len)).unwrap();
        let y = (0..batch).map(|_| r.random_range(0..classes)).collect();
        (x, y)
    };
    let (x1, y1) = mk(&mut r, vec![5], 3);
    let (x2, y2) = mk(&mut r, vec![6], 4);
    let (x3, y3) = mk(&mut r, vec![2, 6, 6], 3);
    vec![("mlp", mlp, x1, y1), ("dense", dense, x2, y2), ("conv", conv, x3, y3)]
}

/// Weighted-sum oracle written independently of the library.
pub fn fedavg_oracle(global: &[f64], deltas: &[Vec<f64>], samples: &[usize]) -> Vec<f64> {
    let total: f64 = samples.iter().map(|&n| n as f64).sum();
    let mut out = global.to_vec();
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (d, &n) in deltas.iter().zip(samples) {
            acc += n as f64 * d[j];
        }
        *o += acc / total;
    }
    out
}

pub fn record(client: usize, delta: Vec<f64>, samples: usize) -> UpdateRecord {
    let g = ParameterVector::zeros(delta.len());
    UpdateRecord::new(client, &ParameterVector::new(delta), &g, samples, false).unwrap()
}

/// Max abs deviation of `aggregate_fedavg` from the oracle on one random instance.
pub fn fedavg_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dim = r.random_range(1..40);
    let k = r.random_range(1..8);
    let global = normal_vec(&mut r, dim);
    let deltas: Vec<Vec<f64>> = (0..k).map(|_| normal_vec(&mut r, dim)).collect();
    let samples: Vec<usize> = (0..k).map(|_| r.random_range(1..1000)).collect();
    let ups: Vec<UpdateRecord> = deltas
        .iter()
        .zip(&samples)
        .enumerate()
        .map(|(i, (d, &n))| record(i, d.clone(), n))
        .collect();
    let got = aggregate_fedavg(&ParameterVector::new(global.clone()), &ups).unwrap();
    let want = fedavg_oracle(&global, &deltas, &samples);
    got.as_slice()
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// `(norm error, 1 − cosine, passes NDC at q)` for one random scaling instance.
pub fn scaling_instance(seed: u64) -> (f64, f64, bool) {
    let mut r = rng(seed);
    let dim = r.random_range(1..200);
    let g = ParameterVector::new(normal_vec(&mut r, dim));
    let l = ParameterVector::new(
        g.as_slice()
            .iter()
            .zip(normal_vec(&mut r, dim))
            .map(|(a, b)| a + b * 10f64.powf(r.random_range(-4.0..2.0)))
            .collect(),
    );
    let q = 10f64.powf(r.random_range(-4.0..2.0));
    let (out, _) = train_and_scale(&l, &g, q).unwrap();
    let d_out = out.sub(&g).unwrap();
    let d_in = l.sub(&g).unwrap();
    let cos = d_out.dot(&d_in).unwrap() / (d_out.norm() * d_in.norm());
    let rec = UpdateRecord::new(0, &out, &g, 1, true).unwrap();
    let passes = ndc_filter(vec![rec], q).unwrap().rejected.is_empty();
    ((d_out.norm() - q).abs(), (1.0 - cos).abs(), passes)
}

/// Checks max-ATA dominance and brute-force equality on one random confusion fixture.
pub fn dominance_instance(seed: u64) -> bool {
    let mut r = rng(seed);
    let classes = r.random_range(2..12);
    let n = r.random_range(1..200);
    let source = r.random_range(0..classes);
    let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
    labels[0] = source;
    let predicted: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
    let p = Predictions::new(labels.clone(), predicted.clone(), classes).unwrap();
    let (best, class) = p.max_ata(source).unwrap();
    let src: Vec<usize> = (0..n).filter(|&i| labels[i] == source).collect();
    let mut brute = f64::NEG_INFINITY;
    for c in (0..classes).filter(|&c| c != source) {
        let hits = src.iter().filter(|&&i| predicted[i] == c).count();
        let v = hits as f64 / src.len() as f64;
        if v > best || p.ts_ata(source, c).unwrap() != v {
            return false;
        }
        brute = brute.max(v);
    }
    best == brute && p.ts_ata(source, class).unwrap() == best
}

/// Largest gap between library FLAME scores and `‖Σ (p − 1_c) xᵀ‖` computed
/// by hand on a single-dense-layer model.
pub fn flame_analytic_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (dim, classes, n) = (r.random_range(2..8), r.random_range(3..7), r.random_range(1..10));
    let model = ModelState::new(
        vec![dim],
        &[LayerSpec::Dense { in_dim: dim, out_dim: classes }, LayerSpec::Softmax],
        seed,
    )
    .unwrap();
    let x = Tensor::new(vec![n, dim], normal_vec(&mut r, n * dim)).unwrap();
    let params = model.parameters();
    let (w, b) = (params[0].data(), params[1].data());
    // weight stored as [out, in]
    assert_eq!(params[0].shape(), &[classes, dim]);
    let candidates: Vec<usize> = (0..classes).collect();
    let scores = flame_scores(&model, &x, &candidates, false).unwrap();
    let mut worst: f64 = 0.0;
    for c in 0..classes {
        let mut g = vec![0.0; classes * dim];
        for i in 0..n {
            let xi = x.row(i);
            let logits: Vec<f64> = (0..classes)
                .map(|k| b[k] + (0..dim).map(|j| w[k * dim + j] * xi[j]).sum::<f64>())
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for k in 0..classes {
                let p = (logits[k] - m).exp() / z;
                let e = p - if k == c { 1.0 } else { 0.0 };
                for j in 0..dim {
                    g[k * dim + j] += e * xi[j];
                }
            }
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((norm - scores.get(c).unwrap()).abs());
    }
    worst
}

/// FLAME scores on a zero-weight model are identical for every class.
pub fn flame_uniform_equal(seed: u64) -> bool {
    let mut r = rng(seed);
    let model = ModelState::new(vec![4], &[LayerSpec::Dense { in_dim: 4, out_dim: 5 }, LayerSpec::Softmax], seed).unwrap();
    let zero = model.with_vector(&ParameterVector::zeros(model.param_count())).unwrap();
    let x = Tensor::new(vec![6, 4], normal_vec(&mut r, 24)).unwrap();
    let s = flame_scores(&zero, &x, &[0, 1, 2, 3, 4], false).unwrap();
    let first = s.scores[0].1;
    s.scores.iter().all(|(_, v)| (v - first).abs() <= 1e-12 * first.max(1.0))
}

/// Symmetry, zero diagonal and deterministic lowest-index tie-breaking on
/// random class means, some of them duplicated to force ties.
pub fn ad_instance(seed: u64) -> bool {
    let mut r = rng(seed);
    let classes = r.random_range(2..10);
    let dim = r.random_range(1..6);
    let mut means: Vec<Option<Vec<f64>>> = (0..classes).map(|_| Some(normal_vec(&mut r, dim))).collect();
    if classes > 2 && r.random_bool(0.5) {
        let a = r.random_range(1..classes);
        means[a] = means[0].clone();
    }
    let source = r.random_range(0..classes);
    let adm = attacking_distance(&ClassMeans { means: means.clone() }).unwrap();
    for a in 0..classes {
        if adm.get(a, a) != Some(0.0) {
            return false;
        }
        for b in 0..classes {
            if adm.get(a, b) != adm.get(b, a) || adm.get(a, b).unwrap() < 0.0 {
                return false;
            }
        }
    }
    let pick = select_target_full(&adm, source).unwrap();
    let best = (0..classes)
        .filter(|&c| c != source)
        .map(|c| adm.get(source, c).unwrap())
        .fold(f64::INFINITY, f64::min);
    let lowest = (0..classes)
        .filter(|&c| c != source)
        .find(|&c| adm.get(source, c).unwrap() == best)
        .unwrap();
    pick == lowest && pick != source && select_target_full(&adm, source).unwrap() == pick
}

/// The desk-scale synthetic scenario at the given seed and attack rate.
pub fn desk(seed: u64, epsilon: f64) -> ExperimentConfig {
    let mut c = presets::preset("desk-synth").unwrap();
    c.seed = seed;
    c.epsilon = epsilon;
    c
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
