//! Adversary strategies: label flipping, train-and-scale, and the
//! attacking-distance-aware attack in full- and partial-knowledge forms.

mod distance;
mod flame;
mod scale;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{flip_labels, Dataset, PoisonSpec};
use crate::error::{Error, Result};
use crate::federation::{local_train, TrainConfig};
use crate::nn::{ModelState, ParameterVector};

pub use distance::{attacking_distance, class_means, select_target_full, ClassMeans, DistanceMatrix};
pub use flame::{flame_scores, select_target_flame, FlameScores};
pub use scale::{estimate_q, train_and_scale, QEstimate, QTracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    None,
    LabelFlip,
    TrainAndScale,
    AdaFull,
    AdaPartial,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::LabelFlip => "label-flip",
            Strategy::TrainAndScale => "train-and-scale",
            Strategy::AdaFull => "ada-full",
            Strategy::AdaPartial => "ada-partial",
        }
    }

    pub fn is_ada(&self) -> bool {
        matches!(self, Strategy::AdaFull | Strategy::AdaPartial)
    }
}

/// Where the bound used for scaling comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QSource {
    /// Running mean of the adversary's own legitimately trained norms.
    Estimated,
    /// The server's actual threshold, when it is known and finite.
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knowledge {
    Full,
    Partial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub strategy: Strategy,
    pub source: usize,
    /// Fixed target for label flipping and train-and-scale.
    pub target: Option<usize>,
    /// Injection rate; `None` flips exactly the local source-class samples.
    pub alpha: Option<f64>,
    /// Scale ADA updates to the bound; train-and-scale always scales.
    pub scale: bool,
    pub q_source: QSource,
    /// Include the last-layer bias gradient in FLAME scores.
    pub include_bias: bool,
}

impl AttackConfig {
    pub fn none(source: usize) -> Self {
        Self {
            strategy: Strategy::None,
            source,
            target: None,
            alpha: None,
            scale: true,
            q_source: QSource::Estimated,
            include_bias: false,
        }
    }

    pub fn with_strategy(&self, strategy: Strategy, target: Option<usize>) -> Self {
        Self {
            strategy,
            target,
            ..self.clone()
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.source >= classes {
            return Err(Error::Config(format!(
                "source class {} out of range for {classes} classes",
                self.source
            )));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!("alpha {a} outside (0, 1]")));
            }
        }
        match (self.strategy, self.target) {
            (Strategy::LabelFlip | Strategy::TrainAndScale, None) => Err(Error::Config(format!(
                "{} needs a fixed target class",
                self.strategy.name()
            ))),
            (Strategy::LabelFlip | Strategy::TrainAndScale, Some(t)) if t == self.source || t >= classes => {
                Err(Error::Config(format!("target {t} must differ from source and be < {classes}")))
            }
            (Strategy::AdaFull | Strategy::AdaPartial, Some(_)) => Err(Error::Config(
                "ADA chooses its own target; remove the fixed target".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn scales(&self) -> bool {
        match self.strategy {
            Strategy::TrainAndScale => true,
            Strategy::AdaFull | Strategy::AdaPartial => self.scale,
            Strategy::None | Strategy::LabelFlip => false,
        }
    }
}

/// Label counts of every sample forwarded through the model during target selection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessAudit {
    pub forwarded: Vec<usize>,
}

impl AccessAudit {
    fn record(&mut self, labels: &[usize], classes: usize) {
        self.forwarded.resize(classes, 0);
        for &y in labels {
            self.forwarded[y] += 1;
        }
    }

    /// Samples outside `source` that were read.
    pub fn non_source_reads(&self, source: usize) -> usize {
        self.forwarded
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != source)
            .map(|(_, n)| n)
            .sum()
    }
}

/// What a compromised client did in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackEvent {
    pub client: usize,
    pub target: Option<usize>,
    /// Row `AD(c_S, ·)` of the attacking-distance matrix (full knowledge).
    pub distances: Option<Vec<Option<f64>>>,
    pub flame: Option<FlameScores>,
    pub q: Option<f64>,
    pub gamma: Option<f64>,
    /// `‖L_adv − G_t‖` before any scaling.
    pub unscaled_norm: Option<f64>,
    pub flipped: usize,
    pub audit: AccessAudit,
    pub skipped: Option<String>,
}

impl AttackEvent {
    pub fn new(client: usize) -> Self {
        Self {
            client,
            target: None,
            distances: None,
            flame: None,
            q: None,
            gamma: None,
            unscaled_norm: None,
            flipped: 0,
            audit: AccessAudit::default(),
            skipped: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub params: ParameterVector,
    pub event: AttackEvent,
}

/// Chooses the target class for an ADA attack from the adversary's local data.
pub fn choose_target(
    model: &ModelState,
    data: &Dataset,
    source: usize,
    knowledge: Knowledge,
    include_bias: bool,
    event: &mut AttackEvent,
) -> Result<usize> {
    let classes = data.num_classes();
    match knowledge {
        Knowledge::Full => {
            let (x, y) = data.full_batch()?;
            event.audit.record(&y, classes);
            let features = model.extract_features(&x)?;
            let adm = attacking_distance(&class_means(&features, &y, classes)?)?;
            event.distances = Some(adm.row(source).to_vec());
            select_target_full(&adm, source)
        }
        Knowledge::Partial => {
            // only source-class rows ever leave the dataset on this path
            let source_only = data.subset(&data.indices_of_class(source))?;
            let (x, y) = source_only.full_batch()?;
            event.audit.record(&y, classes);
            let candidates: Vec<usize> = (0..classes).filter(|&c| c != source).collect();
            let scores = flame_scores(model, &x, &candidates, include_bias)?;
            let target = select_target_flame(&scores, source);
            event.flame = Some(scores);
            target
        }
    }
}

/// Builds a compromised client's update for one round.
///
/// `q` is the bound used when the strategy scales. If the attack cannot be
/// mounted (no local source samples) the client trains honestly and the event
/// records why.
#[allow(clippy::too_many_arguments)]
pub fn craft_update<R: Rng + ?Sized>(
    client: usize,
    global: &ParameterVector,
    template: &ModelState,
    data: &Dataset,
    cfg: &AttackConfig,
    train: &TrainConfig,
    q: Option<f64>,
    rng: &mut R,
) -> Result<AttackOutcome> {
    let mut event = AttackEvent::new(client);
    let source_count = data.indices_of_class(cfg.source).len();
    let needs_source = cfg.strategy.is_ada() || cfg.alpha.is_none();
    if cfg.strategy == Strategy::None || (needs_source && source_count == 0) {
        event.skipped = Some(if cfg.strategy == Strategy::None {
            "no attack configured".into()
        } else {
            format!("no local samples of class {}", cfg.source)
        });
        let params = local_train(global, template, data, train, rng)?;
        return Ok(AttackOutcome { params, event });
    }
    let target = match cfg.strategy {
        Strategy::AdaFull | Strategy::AdaPartial => {
            let knowledge = if cfg.strategy == Strategy::AdaFull {
                Knowledge::Full
            } else {
                Knowledge::Partial
            };
            let model = template.with_vector(global)?;
            choose_target(&model, data, cfg.source, knowledge, cfg.include_bias, &mut event)?
        }
        _ => cfg
            .target
            .ok_or_else(|| Error::Config("fixed target missing".into()))?,
    };
    event.target = Some(target);
    let alpha = cfg
        .alpha
        .unwrap_or(source_count as f64 / data.len() as f64);
    let (poisoned, report) = flip_labels(data, &PoisonSpec::new(cfg.source, target, alpha)?, rng)?;
    event.flipped = report.flipped.len();
    let trained = local_train(global, template, &poisoned, train, rng)?;
    event.unscaled_norm = Some(trained.sub(global)?.norm());
    let params = if cfg.scales() {
        let q = q.ok_or_else(|| Error::Estimation("no bound available for scaling".into()))?;
        let (scaled, gamma) = train_and_scale(&trained, global, q)?;
        event.q = Some(q);
        event.gamma = Some(gamma);
        scaled
    } else {
        trained
    };
    Ok(AttackOutcome { params, event })
}

/// Convenience wrapper running the ADA pipeline with the given knowledge level.
#[allow(clippy::too_many_arguments)]
pub fn ada_attack<R: Rng + ?Sized>(
    global: &ParameterVector,
    template: &ModelState,
    data: &Dataset,
    knowledge: Knowledge,
    cfg: &AttackConfig,
    train: &TrainConfig,
    q: Option<f64>,
    rng: &mut R,
) -> Result<AttackOutcome> {
    let strategy = match knowledge {
        Knowledge::Full => Strategy::AdaFull,
        Knowledge::Partial => Strategy::AdaPartial,
    };
    craft_update(0, global, template, data, &cfg.with_strategy(strategy, None), train, q, rng)
}
