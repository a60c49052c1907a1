//! Named starting points for configuration files.

use std::path::PathBuf;

use crate::attacks::Strategy;
use crate::error::{Error, Result};

use super::config::{
    Arch, AttackSection, DataConfig, DefenseSection, ExperimentConfig, FederationSection, ModelConfig, Partner,
    SynthData,
};

const EPSILONS: [(&str, f64); 3] = [("01", 0.01), ("05", 0.05), ("10", 0.1)];

/// `(name, description)` for every preset.
pub fn list() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (data, label) in [("mnist", "MNIST"), ("fmnist", "Fashion-MNIST"), ("cifar", "CIFAR-10")] {
        for (tag, eps) in EPSILONS {
            out.push((
                format!("full-{data}-eps{tag}"),
                format!("{label}, reference CNN, 100 clients, 10 per round, epsilon {eps}, ADA with full knowledge"),
            ));
        }
    }
    out.push((
        "desk-synth".into(),
        "10-class Gaussian blobs with one close partner class, small MLP, epsilon 0.01".into(),
    ));
    out
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    if name == "desk-synth" {
        return Ok(desk_synth());
    }
    let rest = name
        .strip_prefix("full-")
        .ok_or_else(|| unknown(name))?;
    let (data, tag) = rest.split_once("-eps").ok_or_else(|| unknown(name))?;
    let eps = EPSILONS
        .iter()
        .find(|(t, _)| *t == tag)
        .map(|(_, e)| *e)
        .ok_or_else(|| unknown(name))?;
    let data = match data {
        "mnist" | "fmnist" => {
            let dir = PathBuf::from("data").join(data);
            DataConfig::Idx {
                train_images: dir.join("train-images-idx3-ubyte"),
                train_labels: dir.join("train-labels-idx1-ubyte"),
                test_images: dir.join("t10k-images-idx3-ubyte"),
                test_labels: dir.join("t10k-labels-idx1-ubyte"),
                train_limit: Some(50_000),
            }
        }
        "cifar" => {
            let dir = PathBuf::from("data/cifar-10-batches-bin");
            DataConfig::Cifar {
                train: (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
                test: vec![dir.join("test_batch.bin")],
                train_limit: None,
            }
        }
        _ => return Err(unknown(name)),
    };
    Ok(ExperimentConfig {
        preset: None,
        seed: 1,
        out: PathBuf::from("runs").join(name),
        epsilon: eps,
        data,
        model: ModelConfig {
            arch: Arch::Cnn,
            hidden: vec![200],
        },
        federation: FederationSection {
            samples_per_client: Some(500),
            ..FederationSection::default()
        },
        attack: AttackSection {
            strategy: Strategy::AdaFull,
            ..AttackSection::default()
        },
        defense: DefenseSection::default(),
    })
}

fn desk_synth() -> ExperimentConfig {
    ExperimentConfig {
        preset: None,
        seed: 1,
        out: PathBuf::from("runs/desk-synth"),
        epsilon: 0.01,
        data: DataConfig::Synth(SynthData {
            classes: 10,
            dim: 16,
            spacing: 4.0,
            sigma: 1.0,
            train_per_class: 1000,
            test_per_class: 200,
            partner: Some(Partner { class: None, gap: 2.0 }),
        }),
        model: ModelConfig {
            arch: Arch::Mlp,
            hidden: vec![32],
        },
        federation: FederationSection {
            samples_per_client: Some(100),
            rounds: 500,
            ..FederationSection::default()
        },
        attack: AttackSection {
            strategy: Strategy::AdaFull,
            ..AttackSection::default()
        },
        defense: DefenseSection::default(),
    }
}

fn unknown(name: &str) -> Error {
    Error::Config(format!(
        "preset: unknown name {name:?}; run `presets list` for the available ones"
    ))
}
