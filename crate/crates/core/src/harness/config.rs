//! Experiment configuration: TOML parsing, preset merging and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, QSource, Strategy};
use crate::defense::{DefenseConfig, Threshold};
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

use super::presets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name of the preset this file starts from; keys in the file override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Fraction of clients that are compromised.
    #[serde(default)]
    pub epsilon: f64,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub federation: FederationSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub defense: DefenseSection,
}

fn default_seed() -> u64 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/latest")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Synth(SynthData),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
    },
    Cifar {
        train: Vec<PathBuf>,
        test: Vec<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
    },
}

/// Gaussian blobs with class `c` centred at `spacing · e_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthData {
    pub classes: usize,
    pub dim: usize,
    pub spacing: f64,
    pub sigma: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Pull one class towards the source class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<Partner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partner {
    /// Partner class; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Mlp,
    Cnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Hidden widths for the MLP; the CNN has a fixed 200-unit hidden layer.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![200]
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Mlp,
            hidden: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub clients: usize,
    pub per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Samples per client; defaults to `min(500, N / clients)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_client: Option<usize>,
    pub rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub attack_after_convergence: bool,
    pub convergence_window: usize,
}

impl Default for FederationSection {
    fn default() -> Self {
        Self {
            clients: 100,
            per_round: 10,
            local_epochs: 1,
            batch_size: 16,
            lr: 0.001,
            samples_per_client: None,
            rounds: 300,
            horizon: Some(50),
            attack_after_convergence: true,
            convergence_window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub strategy: Strategy,
    pub source: usize,
    /// Fixed target for label flipping and train-and-scale; absent means
    /// one run per possible target, averaged.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub scale: bool,
    pub q_source: QSource,
    pub include_bias: bool,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            source: 2,
            target: None,
            alpha: None,
            scale: true,
            q_source: QSource::Estimated,
            include_bias: false,
        }
    }
}

impl AttackSection {
    /// Validates the attack; a missing fixed target is allowed and means a sweep.
    pub fn check(&self, classes: usize) -> Result<()> {
        let a = self.to_attack();
        match (a.strategy, a.target) {
            (Strategy::LabelFlip | Strategy::TrainAndScale, None) => {
                let any = (0..classes).find(|&c| c != a.source).unwrap_or(0);
                a.with_strategy(a.strategy, Some(any)).validate(classes)
            }
            _ => a.validate(classes),
        }
    }

    pub fn to_attack(&self) -> AttackConfig {
        AttackConfig {
            strategy: self.strategy,
            source: self.source,
            target: self.target,
            alpha: self.alpha,
            scale: self.scale,
            q_source: self.q_source,
            include_bias: self.include_bias,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    PreviousBenignMean,
    Fixed,
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseSection {
    pub enabled: bool,
    pub threshold: ThresholdMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Default for DefenseSection {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: ThresholdMode::PreviousBenignMean,
            value: None,
        }
    }
}

impl DefenseSection {
    pub fn to_defense(&self) -> Result<DefenseConfig> {
        let threshold = match (self.threshold, self.value) {
            (ThresholdMode::PreviousBenignMean, None) => Threshold::PreviousBenignMean,
            (ThresholdMode::Fixed, Some(v)) => Threshold::Fixed(v),
            (ThresholdMode::Percentile, Some(v)) => Threshold::RoundPercentile(v),
            (ThresholdMode::PreviousBenignMean, Some(_)) => {
                return Err(Error::Config(
                    "defense.value: not used with threshold = \"previous-benign-mean\"".into(),
                ))
            }
            (_, None) => {
                return Err(Error::Config(
                    "defense.value: expected a number for the fixed or percentile threshold".into(),
                ))
            }
        };
        let cfg = DefenseConfig {
            enabled: self.enabled,
            threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub rounds: Option<usize>,
    pub epsilon: Option<f64>,
}

impl ExperimentConfig {
    /// Parses TOML text, layering it over its preset when one is named.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let merged = match table.get("preset") {
            Some(toml::Value::String(name)) => {
                let base = presets::preset(name)?;
                let mut base = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
                merge(&mut base, table);
                base
            }
            Some(_) => return Err(Error::Config("preset: expected a string".into())),
            None => table,
        };
        merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Reads, overrides and validates a configuration file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        cfg.apply(overrides);
        cfg.validate()?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(r) = o.rounds {
            self.federation.rounds = r;
        }
        if let Some(e) = o.epsilon {
            self.epsilon = e;
        }
    }

    /// Checks everything that does not need the data on disk.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon: expected a value in [0, 1], got {}", self.epsilon)));
        }
        let f = &self.federation;
        let compromised = (self.epsilon * f.clients as f64 + 1e-9).floor() as usize;
        if self.attack.strategy != Strategy::None && compromised == 0 {
            return Err(Error::Config(format!(
                "epsilon: {} x {} clients leaves no compromised client for the configured attack",
                self.epsilon, f.clients
            )));
        }
        if f.clients == 0 || f.per_round == 0 || f.per_round > f.clients {
            return Err(Error::Config(format!(
                "federation.per_round: expected 1..={} , got {}",
                f.clients, f.per_round
            )));
        }
        if f.local_epochs == 0 || f.batch_size == 0 || f.convergence_window == 0 || f.rounds == 0 {
            return Err(Error::Config(
                "federation: rounds, local_epochs, batch_size and convergence_window must be positive".into(),
            ));
        }
        if !(f.lr > 0.0) {
            return Err(Error::Config(format!("federation.lr: expected a positive number, got {}", f.lr)));
        }
        if self.model.arch == Arch::Mlp && self.model.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("model.hidden: widths must be positive".into()));
        }
        if let DataConfig::Synth(s) = &self.data {
            if s.classes < 2 || s.dim < s.classes || s.train_per_class == 0 || s.test_per_class == 0 {
                return Err(Error::Config(
                    "data: synth needs classes >= 2, dim >= classes and positive per-class counts".into(),
                ));
            }
            if let Some(p) = &s.partner {
                if p.class.is_some_and(|c| c >= s.classes || c == self.attack.source) || !(p.gap > 0.0) {
                    return Err(Error::Config("data.partner: class must be a non-source class and gap positive".into()));
                }
            }
        }
        if let Some(classes) = self.known_classes() {
            self.attack.check(classes)?;
        }
        self.defense.to_defense()?;
        Ok(())
    }

    /// Class count when it is known without reading data files.
    pub fn known_classes(&self) -> Option<usize> {
        match &self.data {
            DataConfig::Synth(s) => Some(s.classes),
            DataConfig::Cifar { .. } => Some(10),
            DataConfig::Idx { .. } => None,
        }
    }

    pub fn check_paths(&self) -> Result<()> {
        let paths: Vec<&PathBuf> = match &self.data {
            DataConfig::Synth(_) => vec![],
            DataConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => vec![train_images, train_labels, test_images, test_labels],
            DataConfig::Cifar { train, test, .. } => train.iter().chain(test).collect(),
        };
        match paths.into_iter().find(|p| !p.exists()) {
            Some(p) => Err(Error::Config(format!("data: file {} does not exist", p.display()))),
            None => Ok(()),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.federation.lr,
            ..AdamConfig::default()
        }
    }

    /// Normalised TOML dump with every default filled in.
    pub fn to_toml(&self) -> Result<String> {
        let mut c = self.clone();
        c.preset = None;
        toml::to_string(&c).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hash of the shared setting (data, model and federation); attack,
    /// defense, seed and output location are left out.
    pub fn setup_fingerprint(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Setup<'a> {
            data: &'a DataConfig,
            model: &'a ModelConfig,
            federation: &'a FederationSection,
        }
        let text = toml::to_string(&Setup {
            data: &self.data,
            model: &self.model,
            federation: &self.federation,
        })
        .map_err(|e| Error::Config(e.to_string()))?;
        Ok(super::output::sha256_hex(text.as_bytes()))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                // a different data kind replaces the whole section
                if k == "data" && b.get("kind") != o.get("kind") && o.contains_key("kind") {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
