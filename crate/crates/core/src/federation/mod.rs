//! FedAvg: client selection, local training, weighted aggregation and
//! convergence detection, plus the round loop in [`Simulation`].

mod sim;

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, ModelState, ParameterVector};
use crate::rng::{stream, Purpose};

pub use sim::{run_experiment, RoundLog, Simulation, UpdateLog};

/// Round-loop settings shared by the server and all clients.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub clients: usize,
    pub per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Upper bound on the number of rounds.
    pub rounds: usize,
    /// Stop this many rounds after the attack window opens.
    pub horizon: Option<usize>,
    pub seed: u64,
    pub compromised: BTreeSet<usize>,
    /// Compromised clients behave honestly until the global model has converged.
    pub attack_after_convergence: bool,
    pub convergence_window: usize,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_round == 0 || self.per_round > self.clients {
            return Err(Error::Config(format!(
                "per_round must be in 1..={}, got {}",
                self.clients, self.per_round
            )));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("local_epochs and batch_size must be positive".into()));
        }
        if let Some(&bad) = self.compromised.iter().find(|&&c| c >= self.clients) {
            return Err(Error::Config(format!("compromised client {bad} out of range")));
        }
        if self.convergence_window == 0 {
            return Err(Error::Config("convergence_window must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            adam: self.adam,
        }
    }
}

/// Picks `⌊ε·K⌋` distinct compromised clients from the experiment seed.
pub fn sample_compromised(clients: usize, epsilon: f64, seed: u64) -> Result<BTreeSet<usize>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let count = (epsilon * clients as f64 + 1e-9).floor() as usize;
    let mut rng = stream(seed, 0, Purpose::Compromised, 0);
    Ok(index::sample(&mut rng, clients, count).into_iter().collect())
}

/// Uniform sample of `m` distinct clients out of `k`, returned ascending.
pub fn select_clients<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m > k {
        return Err(Error::Capacity {
            requested: m,
            available: k,
        });
    }
    let mut ids = index::sample(rng, k, m).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

/// Client-side training: start from the global parameters and run `epochs`
/// passes of shuffled mini-batch Adam with a fresh optimiser state.
pub fn local_train<R: Rng + ?Sized>(
    global: &ParameterVector,
    architecture: &ModelState,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ParameterVector> {
    if data.is_empty() {
        return Err(Error::Domain("local dataset is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut model = architecture.with_vector(global)?;
    let mut adam = AdamState::new(model.param_count(), cfg.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = data.batch(chunk)?;
            let grads = model.backward(&x, &y)?;
            adam.apply(&mut model, &grads)?;
        }
    }
    Ok(model.to_vector())
}

/// One client's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub client: usize,
    /// `L_{t+1} − G_t`.
    pub delta: ParameterVector,
    pub samples: usize,
    pub norm: f64,
    /// Ground truth, for logging only; the server never reads it.
    pub malicious: bool,
}

impl UpdateRecord {
    pub fn new(
        client: usize,
        local: &ParameterVector,
        global: &ParameterVector,
        samples: usize,
        malicious: bool,
    ) -> Result<Self> {
        let delta = local.sub(global)?;
        let norm = delta.norm();
        Ok(Self {
            client,
            delta,
            samples,
            norm,
            malicious,
        })
    }
}

/// `G + Σ_k (N_k / Σ N) · Δ_k`.
pub fn aggregate_fedavg(global: &ParameterVector, updates: &[UpdateRecord]) -> Result<ParameterVector> {
    if updates.is_empty() {
        return Err(Error::Aggregation("no updates to aggregate".into()));
    }
    let total: usize = updates.iter().map(|u| u.samples).sum();
    if total == 0 {
        return Err(Error::Aggregation("updates carry zero samples".into()));
    }
    // weight by raw counts and divide once, so equal deltas average back exactly
    let mut sum = ParameterVector::zeros(global.len());
    for u in updates {
        sum.axpy(u.samples as f64, &u.delta)?;
    }
    let n = total as f64;
    global.add(&ParameterVector::new(sum.into_inner().into_iter().map(|v| v / n).collect()))
}

/// True once the last `window` losses fail to improve on the best loss seen
/// before them.
pub fn converged(history: &[f64], window: usize) -> bool {
    if window == 0 || history.len() < window + 1 {
        return false;
    }
    let split = history.len() - window;
    let earlier = history[..split].iter().cloned().fold(f64::INFINITY, f64::min);
    let recent = history[split..].iter().cloned().fold(f64::INFINITY, f64::min);
    recent >= earlier
}
