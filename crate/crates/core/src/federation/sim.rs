use std::sync::Arc;

use rayon::prelude::*;

use crate::attacks::{craft_update, AttackConfig, AttackEvent, QSource, QTracker, Strategy};
use crate::data::Dataset;
use crate::defense::{ndc_filter, DefenseConfig, Rejection};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsRow};
use crate::nn::{ModelState, ParameterVector};
use crate::rng::{stream, Purpose};

use super::{aggregate_fedavg, converged, local_train, select_clients, FederationConfig, UpdateRecord};

/// Per-client summary kept in the log; deltas are dropped to bound memory.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateLog {
    pub client: usize,
    pub samples: usize,
    pub norm: f64,
    pub malicious: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub selected: Vec<usize>,
    pub updates: Vec<UpdateLog>,
    pub rejected: Vec<Rejection>,
    /// Bound applied by the defense; infinite when it is off or has no history yet.
    pub threshold: f64,
    pub aggregated: bool,
    pub metrics: MetricsRow,
    pub attack_active: bool,
    pub events: Vec<AttackEvent>,
    /// Adversary's running bound estimate after this round's collection.
    pub q_estimate: Option<f64>,
    pub benign_norm_mean: Option<f64>,
    pub failures: Vec<(usize, String)>,
}

impl RoundLog {
    pub fn val_loss(&self) -> f64 {
        self.metrics.val_loss
    }

    pub fn malicious_norms(&self) -> Vec<f64> {
        self.updates.iter().filter(|u| u.malicious).map(|u| u.norm).collect()
    }
}

/// A FedAvg run that can be advanced round by round and forked.
#[derive(Debug, Clone)]
pub struct Simulation {
    fed: FederationConfig,
    attack: AttackConfig,
    defense: DefenseConfig,
    template: ModelState,
    shards: Arc<Vec<Dataset>>,
    test: Arc<Dataset>,
    global: ParameterVector,
    round: usize,
    losses: Vec<f64>,
    /// Round after which compromised clients may attack.
    opened_after: Option<usize>,
    tracker: QTracker,
    previous_benign_mean: Option<f64>,
    last_target: Option<usize>,
    logs: Vec<RoundLog>,
}

enum ClientResult {
    Benign(ParameterVector),
    Malicious(ParameterVector, AttackEvent),
}

impl Simulation {
    pub fn new(
        fed: FederationConfig,
        attack: AttackConfig,
        defense: DefenseConfig,
        template: ModelState,
        shards: Arc<Vec<Dataset>>,
        test: Arc<Dataset>,
    ) -> Result<Self> {
        fed.validate()?;
        attack.validate(template.num_classes())?;
        defense.validate()?;
        if shards.len() != fed.clients {
            return Err(Error::Config(format!(
                "{} shards for {} clients",
                shards.len(),
                fed.clients
            )));
        }
        let opened_after = (!fed.attack_after_convergence).then_some(0);
        Ok(Self {
            global: template.to_vector(),
            fed,
            attack,
            defense,
            template,
            shards,
            test,
            round: 0,
            losses: Vec::new(),
            opened_after,
            tracker: QTracker::default(),
            previous_benign_mean: None,
            last_target: None,
            logs: Vec::new(),
        })
    }

    pub fn config(&self) -> &FederationConfig {
        &self.fed
    }

    pub fn attack(&self) -> &AttackConfig {
        &self.attack
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn global(&self) -> &ParameterVector {
        &self.global
    }

    pub fn model(&self) -> Result<ModelState> {
        self.template.with_vector(&self.global)
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn logs(&self) -> &[RoundLog] {
        &self.logs
    }

    pub fn into_logs(self) -> Vec<RoundLog> {
        self.logs
    }

    /// Round at which the convergence test fired (0 when attacks are not gated).
    pub fn attack_opened_after(&self) -> Option<usize> {
        self.opened_after
    }

    /// Copy of this run that continues with a different attack.
    pub fn fork(&self, attack: AttackConfig) -> Result<Self> {
        attack.validate(self.template.num_classes())?;
        let mut out = self.clone();
        out.attack = attack;
        out.last_target = None;
        Ok(out)
    }

    pub fn finished(&self) -> bool {
        if self.round >= self.fed.rounds {
            return true;
        }
        matches!((self.opened_after, self.fed.horizon), (Some(o), Some(h)) if self.round >= o + h)
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.finished() {
            self.step()?;
        }
        Ok(())
    }

    /// Advances until the attack window opens or the run ends.
    pub fn run_until_open(&mut self) -> Result<()> {
        while self.opened_after.is_none() && !self.finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<&RoundLog> {
        let r = self.round + 1;
        let seed = self.fed.seed;
        let selected = select_clients(
            self.fed.clients,
            self.fed.per_round,
            &mut stream(seed, r as u64, Purpose::Selection, 0),
        )?;
        let attack_active = self.opened_after.is_some()
            && self.attack.strategy != Strategy::None
            && !self.fed.compromised.is_empty();
        let is_malicious = |k: usize| attack_active && self.fed.compromised.contains(&k);
        let train = self.fed.train_config();

        // phase A: compromised clients train honestly to learn the typical update size
        let mut q_estimate = None;
        if attack_active && self.attack.scales() {
            let probes: Vec<Result<f64>> = selected
                .par_iter()
                .filter(|&&k| is_malicious(k))
                .map(|&k| {
                    let mut rng = stream(seed, r as u64, Purpose::QEstimate, k as u64);
                    let p = local_train(&self.global, &self.template, &self.shards[k], &train, &mut rng)?;
                    Ok(p.sub(&self.global)?.norm())
                })
                .collect();
            for n in probes.into_iter().flatten() {
                self.tracker.record(n);
            }
            q_estimate = self.tracker.estimate().ok().map(|q| q.value);
        }
        let q_for_attack = match self.attack.q_source {
            QSource::Estimated => q_estimate,
            QSource::Server => self
                .defense
                .prior_bound(self.previous_benign_mean)
                .filter(|q| q.is_finite())
                .or(q_estimate),
        };

        // phase B: every selected client produces its update
        let results: Vec<(usize, Result<ClientResult>)> = selected
            .par_iter()
            .map(|&k| {
                let shard = &self.shards[k];
                let res = if is_malicious(k) {
                    let mut rng = stream(seed, r as u64, Purpose::Poison, k as u64);
                    craft_update(k, &self.global, &self.template, shard, &self.attack, &train, q_for_attack, &mut rng)
                        .map(|o| ClientResult::Malicious(o.params, o.event))
                } else {
                    let mut rng = stream(seed, r as u64, Purpose::LocalShuffle, k as u64);
                    local_train(&self.global, &self.template, shard, &train, &mut rng).map(ClientResult::Benign)
                };
                (k, res)
            })
            .collect();

        let mut records = Vec::with_capacity(results.len());
        let mut events = Vec::new();
        let mut failures = Vec::new();
        for (k, res) in results {
            let samples = self.shards[k].len();
            let record = res.and_then(|c| match c {
                ClientResult::Benign(p) => UpdateRecord::new(k, &p, &self.global, samples, false),
                ClientResult::Malicious(p, event) => {
                    let rec = UpdateRecord::new(k, &p, &self.global, samples, event.skipped.is_none());
                    events.push(event);
                    rec
                }
            });
            match record {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    log::warn!("round {r}: client {k} failed: {e}");
                    failures.push((k, e.to_string()));
                }
            }
        }
        if let Some(t) = events.iter().find_map(|e| e.target) {
            self.last_target = Some(t);
        }

        let updates: Vec<UpdateLog> = records
            .iter()
            .map(|u| UpdateLog {
                client: u.client,
                samples: u.samples,
                norm: u.norm,
                malicious: u.malicious,
            })
            .collect();
        let benign: Vec<f64> = records.iter().filter(|u| !u.malicious).map(|u| u.norm).collect();
        let benign_norm_mean = (!benign.is_empty()).then(|| benign.iter().sum::<f64>() / benign.len() as f64);

        let (threshold, accepted, rejected) = if self.defense.enabled {
            let norms: Vec<f64> = records.iter().map(|u| u.norm).collect();
            let q = self.defense.bound(self.previous_benign_mean, &norms);
            let out = ndc_filter(records, q)?;
            (q, out.accepted, out.rejected)
        } else {
            (f64::INFINITY, records, Vec::new())
        };
        if benign_norm_mean.is_some() {
            self.previous_benign_mean = benign_norm_mean;
        }

        let aggregated = !accepted.is_empty();
        if aggregated {
            self.global = aggregate_fedavg(&self.global, &accepted)?;
        } else {
            log::warn!("round {r}: no update accepted, global model unchanged");
        }

        let model = self.template.with_vector(&self.global)?;
        let (loss, preds) = evaluate(&model, &self.test)?;
        let target = self.last_target.or(self.attack.target);
        let metrics = MetricsRow::from_predictions(r, loss, &preds, self.attack.source, target)?;
        self.losses.push(loss);
        self.round = r;
        if self.opened_after.is_none() && converged(&self.losses, self.fed.convergence_window) {
            log::info!("round {r}: validation loss has plateaued");
            self.opened_after = Some(r);
        }

        self.logs.push(RoundLog {
            round: r,
            selected,
            updates,
            rejected,
            threshold,
            aggregated,
            metrics,
            attack_active,
            events,
            q_estimate,
            benign_norm_mean,
            failures,
        });
        Ok(self.logs.last().expect("just pushed"))
    }
}

/// Runs a full experiment and returns its round logs.
pub fn run_experiment(
    fed: FederationConfig,
    template: ModelState,
    shards: Arc<Vec<Dataset>>,
    test: Arc<Dataset>,
    attack: AttackConfig,
    defense: DefenseConfig,
) -> Result<Vec<RoundLog>> {
    let mut sim = Simulation::new(fed, attack, defense, template, shards, test)?;
    sim.run()?;
    Ok(sim.into_logs())
}
