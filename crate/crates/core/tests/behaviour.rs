mod common;

use adafl::attacks::Strategy;
use adafl::data::{synth_blobs, SynthSpec};
use adafl::federation::{local_train, TrainConfig};
use adafl::harness::{execute, prepare};
use adafl::nn::{AdamConfig, ModelState};

#[test]
fn honest_federation_learns_the_blobs() {
    let mut cfg = common::desk(6, 0.01);
    cfg.attack.strategy = Strategy::None;
    let exec = execute(prepare(&cfg).unwrap()).unwrap();
    let logs = exec.runs[0].simulation.logs();
    let last = logs.last().unwrap();
    assert!(last.metrics.mta > 0.9, "MTA {}", last.metrics.mta);
    assert!(logs.iter().all(|l| l.events.is_empty()));
    assert!(exec.converged_round().is_some());
}

#[test]
fn unrestricted_label_flipping_takes_over_the_source_class() {
    let mut cfg = common::desk(7, 0.3);
    cfg.attack.strategy = Strategy::LabelFlip;
    cfg.federation.attack_after_convergence = false;
    cfg.federation.rounds = 120;
    cfg.federation.horizon = None;
    let setup = prepare(&cfg).unwrap();
    cfg.attack.target = setup.nearest_to_source;
    let exec = execute(prepare(&cfg).unwrap()).unwrap();
    let best = exec.runs[0]
        .simulation
        .logs()
        .iter()
        .filter_map(|l| l.metrics.ts_ata)
        .fold(0.0, f64::max);
    assert!(best > 0.5, "ts-ATA only reached {best}");
}

#[test]
fn local_training_lowers_the_loss() {
    let spec = SynthSpec::axis_layout(4, 6, 3.0, 1.0, 50, 1).unwrap();
    let d = synth_blobs(&spec).unwrap();
    let model = ModelState::mlp(6, &[16], 4, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        adam: AdamConfig::default(),
    };
    let trained = local_train(&model.to_vector(), &model, &d, &cfg, &mut common::rng(3)).unwrap();
    let (x, y) = d.full_batch().unwrap();
    let before = model.loss(&x, &y).unwrap();
    let after = model.with_vector(&trained).unwrap().loss(&x, &y).unwrap();
    assert!(after < before, "{after} >= {before}");
}
