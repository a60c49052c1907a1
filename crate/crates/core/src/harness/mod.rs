//! Experiment driver: builds the federation from a config, runs it and
//! writes the result files.

pub mod compare;
pub mod config;
pub mod output;
pub mod presets;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::attacks::{AttackConfig, Strategy};
use crate::data::{load_cifar_bin, load_idx, partition_iid, synth_blobs, Dataset, SynthSpec};
use crate::defense::DefenseConfig;
use crate::error::{Error, Result};
use crate::federation::{sample_compromised, FederationConfig, Simulation};
use crate::metrics::pca_project;
use crate::nn::ModelState;
use crate::rng::{derive_seed, stream, Purpose};

pub use compare::{compare, Comparison};
pub use config::{ExperimentConfig, Overrides};
pub use output::{RoundRow, RunSummary};

use output::{VariantSummary, INCOMPLETE};

/// Everything needed to start simulations for one configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub template: ModelState,
    pub shards: Arc<Vec<Dataset>>,
    pub test: Arc<Dataset>,
    pub federation: FederationConfig,
    pub attack: AttackConfig,
    pub defense: DefenseConfig,
    /// Class whose generating mean is nearest the source (synthetic data only).
    pub nearest_to_source: Option<usize>,
}

impl Setup {
    pub fn simulation(&self, attack: AttackConfig) -> Result<Simulation> {
        Simulation::new(
            self.federation.clone(),
            attack,
            self.defense,
            self.template.clone(),
            self.shards.clone(),
            self.test.clone(),
        )
    }

    /// The attacks to run: one per possible target when a fixed-target
    /// strategy has no target configured, otherwise just the configured one.
    pub fn variants(&self) -> Vec<(String, AttackConfig)> {
        let a = &self.attack;
        let sweep = matches!(a.strategy, Strategy::LabelFlip | Strategy::TrainAndScale) && a.target.is_none();
        if !sweep {
            return vec![(String::new(), a.clone())];
        }
        (0..self.template.num_classes())
            .filter(|&t| t != a.source)
            .map(|t| (format!("target-{t}"), a.with_strategy(a.strategy, Some(t))))
            .collect()
    }
}

fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset, Option<usize>)> {
    use config::DataConfig;
    let seed = cfg.seed;
    match &cfg.data {
        DataConfig::Synth(s) => {
            let mut spec = SynthSpec::axis_layout(
                s.classes,
                s.dim,
                s.spacing,
                s.sigma,
                s.train_per_class,
                derive_seed(seed, 0, Purpose::Data, 0),
            )?;
            if let Some(p) = &s.partner {
                let class = match p.class {
                    Some(c) => c,
                    None => {
                        let others: Vec<usize> = (0..s.classes).filter(|&c| c != cfg.attack.source).collect();
                        others[stream(seed, 0, Purpose::Data, 2).random_range(0..others.len())]
                    }
                };
                spec = spec.with_partner(cfg.attack.source, class, p.gap)?;
            }
            let test_spec = SynthSpec {
                per_class: s.test_per_class,
                seed: derive_seed(seed, 0, Purpose::Data, 1),
                ..spec.clone()
            };
            let nearest = s.partner.as_ref().and_then(|_| spec.nearest_class(cfg.attack.source));
            Ok((synth_blobs(&spec)?, synth_blobs(&test_spec)?, nearest))
        }
        DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit,
        } => {
            let train = load_idx(train_images, train_labels)?;
            let train = train_limit.map_or(train.clone(), |n| train.truncated(n));
            Ok((train, load_idx(test_images, test_labels)?, None))
        }
        DataConfig::Cifar { train, test, train_limit } => {
            let tr = load_cifar_bin(train)?;
            let tr = train_limit.map_or(tr.clone(), |n| tr.truncated(n));
            Ok((tr, load_cifar_bin(test)?, None))
        }
    }
}

/// Loads data, shards it and builds the initial model.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let (train, test, nearest_to_source) = load_data(cfg)?;
    if train.num_classes() != test.num_classes() || train.input_shape() != test.input_shape() {
        return Err(Error::Config("data: training and test sets disagree on classes or input shape".into()));
    }
    let classes = train.num_classes();
    cfg.attack.check(classes)?;
    let attack = cfg.attack.to_attack();
    let model_seed = derive_seed(cfg.seed, 0, Purpose::ModelInit, 0);
    let template = match cfg.model.arch {
        config::Arch::Mlp => ModelState::mlp(train.input_len(), &cfg.model.hidden, classes, model_seed)?,
        config::Arch::Cnn => match *train.input_shape() {
            [c, h, w] => ModelState::reference_cnn(c, h, w, classes, model_seed)?,
            ref s => return Err(Error::Config(format!("model.arch: cnn needs [C, H, W] inputs, data has {s:?}"))),
        },
    };
    let f = &cfg.federation;
    let per_client = f
        .samples_per_client
        .unwrap_or_else(|| (train.len() / f.clients).min(500));
    let plan = partition_iid(&train, f.clients, per_client, derive_seed(cfg.seed, 0, Purpose::Partition, 0))?;
    let federation = FederationConfig {
        clients: f.clients,
        per_round: f.per_round,
        local_epochs: f.local_epochs,
        batch_size: f.batch_size,
        adam: cfg.adam(),
        rounds: f.rounds,
        horizon: f.horizon,
        seed: cfg.seed,
        compromised: sample_compromised(f.clients, cfg.epsilon, cfg.seed)?,
        attack_after_convergence: f.attack_after_convergence,
        convergence_window: f.convergence_window,
    };
    Ok(Setup {
        config: cfg.clone(),
        template,
        shards: Arc::new(plan.materialize(&train)?),
        test: Arc::new(test),
        federation,
        attack,
        defense: cfg.defense.to_defense()?,
        nearest_to_source,
    })
}

/// A finished variant.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub label: String,
    pub simulation: Simulation,
}

/// Result of [`execute`]: the shared warm-up plus one finished run per variant.
#[derive(Debug, Clone)]
pub struct Execution {
    pub setup: Setup,
    /// State at the moment the attack window opened (or the run ended).
    pub warmup: Simulation,
    pub runs: Vec<VariantRun>,
}

impl Execution {
    /// Start of the summary window and its length.
    pub fn window(&self) -> (usize, Option<usize>) {
        match self.warmup.attack_opened_after() {
            Some(o) => (o, self.setup.federation.horizon),
            None => (0, None),
        }
    }

    pub fn converged_round(&self) -> Option<usize> {
        self.warmup
            .attack_opened_after()
            .filter(|_| self.setup.federation.attack_after_convergence)
    }
}

/// Runs every variant, sharing the honest rounds before the attack window.
///
/// Until the window opens compromised clients behave honestly, so all
/// variants have identical histories up to that point and can be forked
/// from one warm-up run.
pub fn execute(setup: Setup) -> Result<Execution> {
    let variants = setup.variants();
    let mut warmup = setup.simulation(variants[0].1.clone())?;
    warmup.run_until_open()?;
    let runs = variants
        .into_par_iter()
        .map(|(label, attack)| {
            let mut simulation = warmup.fork(attack)?;
            simulation.run()?;
            Ok(VariantRun { label, simulation })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Execution { setup, warmup, runs })
}

/// Runs one configuration and writes its output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    output::write_file(&out, INCOMPLETE, "run in progress\n")?;
    match run_inner(cfg, &out) {
        Ok(s) => {
            let marker = out.join(INCOMPLETE);
            fs::remove_file(&marker).map_err(|e| Error::io(marker, e))?;
            Ok(s)
        }
        Err(e) => {
            // best effort: the original error matters more than a failed marker write
            let _ = output::write_file(&out, INCOMPLETE, &format!("{e}\n"));
            Err(e)
        }
    }
}

fn run_inner(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let dump = cfg.to_toml()?;
    output::write_file(out, output::CONFIG_DUMP, &dump)?;
    let config_hash = output::sha256_hex(dump.as_bytes());
    let fingerprint = cfg.setup_fingerprint()?;
    let setup = prepare(cfg)?;
    let source = setup.attack.source;
    let exec = execute(setup)?;

    let model = exec.warmup.model()?;
    if model.feature_dim().is_ok() {
        let (x, y) = exec.warmup.test_set().full_batch()?;
        let p = pca_project(&model.extract_features(&x)?, &y, 2)?;
        if p.degenerate {
            log::warn!("latent features have zero variance; PCA output is degenerate");
        }
        output::write_file(out, output::PCA_CSV, &output::pca_csv(&p)?)?;
    }

    let (start, horizon) = exec.window();
    let mut variants = Vec::new();
    let mut summaries = Vec::new();
    for v in &exec.runs {
        let dir: PathBuf = if v.label.is_empty() { out.to_path_buf() } else { out.join(&v.label) };
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let logs = v.simulation.logs();
        let csv = output::rounds_csv(logs)?;
        output::write_file(&dir, output::ROUNDS_CSV, &csv)?;
        output::write_file(&dir, output::ATTACKS_CSV, &output::attacks_csv(logs, source)?)?;
        let w = output::window_stats(&output::parse_rounds_csv(&csv)?, start, horizon)?;
        let s = RunSummary {
            method: cfg.attack.strategy.name().to_string(),
            seed: cfg.seed,
            epsilon: cfg.epsilon,
            rounds: v.simulation.round(),
            converged_round: exec.converged_round(),
            horizon_start: start,
            horizon_end: w.horizon_end,
            best_ata: w.best_ata,
            best_max_ata: w.best_max_ata,
            best_mta: w.best_mta,
            final_mta: w.final_mta,
            wall_time_secs: started.elapsed().as_secs_f64(),
            config_hash: config_hash.clone(),
            setup_fingerprint: fingerprint.clone(),
            target_histogram: w.target_histogram,
            variants: Vec::new(),
        };
        if !v.label.is_empty() {
            output::write_file(&dir, output::SUMMARY, &output::summary_toml(&s)?)?;
            variants.push(VariantSummary {
                label: v.label.clone(),
                best_ata: s.best_ata,
                best_max_ata: s.best_max_ata,
                best_mta: s.best_mta,
            });
        }
        summaries.push(s);
    }
    let mut summary = average(&summaries)?;
    summary.variants = variants;
    summary.wall_time_secs = started.elapsed().as_secs_f64();
    output::write_file(out, output::SUMMARY, &output::summary_toml(&summary)?)?;
    Ok(summary)
}

/// Mean over a target sweep; a single run is returned unchanged.
fn average(runs: &[RunSummary]) -> Result<RunSummary> {
    let first = runs.first().ok_or_else(|| Error::Config("no runs to summarise".into()))?;
    if runs.len() == 1 {
        return Ok(first.clone());
    }
    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&RunSummary) -> f64| output::sig9(runs.iter().map(f).sum::<f64>() / n);
    let mut histogram = std::collections::BTreeMap::new();
    for r in runs {
        for (k, v) in &r.target_histogram {
            *histogram.entry(k.clone()).or_insert(0) += v;
        }
    }
    let atas: Option<Vec<f64>> = runs.iter().map(|r| r.best_ata).collect();
    Ok(RunSummary {
        rounds: runs.iter().map(|r| r.rounds).max().unwrap_or(0),
        horizon_end: runs.iter().map(|r| r.horizon_end).max().unwrap_or(0),
        best_ata: atas.map(|a| output::sig9(a.iter().sum::<f64>() / n)),
        best_max_ata: mean(&|r| r.best_max_ata),
        best_mta: mean(&|r| r.best_mta),
        final_mta: mean(&|r| r.final_mta),
        target_histogram: histogram,
        ..first.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(strategy: &str, extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
seed = 3
epsilon = 0.25
[data]
kind = "synth"
classes = 4
dim = 4
spacing = 3.0
sigma = 0.8
train_per_class = 40
test_per_class = 20
[model]
arch = "mlp"
hidden = [8]
[federation]
clients = 8
per_round = 4
rounds = 6
horizon = 3
convergence_window = 2
[attack]
strategy = "{strategy}"
source = 1
{extra}
"#
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn sweep_has_one_variant_per_target() {
        let s = prepare(&small("label-flip", "")).unwrap();
        let labels: Vec<String> = s.variants().into_iter().map(|(l, _)| l).collect();
        assert_eq!(labels, vec!["target-0", "target-2", "target-3"]);
        let s = prepare(&small("label-flip", "target = 2")).unwrap();
        assert_eq!(s.variants().len(), 1);
        assert_eq!(s.federation.compromised.len(), 2);
        assert_eq!(s.shards.len(), 8);
    }

    #[test]
    fn forked_variant_matches_direct_run() {
        let setup = prepare(&small("ada-full", "")).unwrap();
        let exec = execute(setup.clone()).unwrap();
        let mut direct = setup.simulation(setup.attack.clone()).unwrap();
        direct.run().unwrap();
        assert_eq!(direct.logs(), exec.runs[0].simulation.logs());
    }
}
