//! Main-task and adversarial accuracies, plus a PCA view of latent features.

mod pca;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, ModelState};

pub use pca::{pca_project, PcaProjection};

const EVAL_CHUNK: usize = 512;

/// True and predicted labels for an evaluation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    pub predicted: Vec<usize>,
    pub classes: usize,
}

impl Predictions {
    pub fn new(labels: Vec<usize>, predicted: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != predicted.len() {
            return Err(Error::Dimension(format!(
                "{} labels vs {} predictions",
                labels.len(),
                predicted.len()
            )));
        }
        if labels.iter().chain(&predicted).any(|&c| c >= classes) {
            return Err(Error::Domain(format!("class index out of range for {classes} classes")));
        }
        Ok(Self {
            labels,
            predicted,
            classes,
        })
    }

    /// Accuracy on samples whose true class is not `source`.
    pub fn mta(&self, source: usize) -> Result<f64> {
        let (hit, total) = self
            .pairs()
            .filter(|(y, _)| *y != source)
            .fold((0usize, 0usize), |(h, n), (y, p)| (h + (y == p) as usize, n + 1));
        if total == 0 {
            return Err(Error::Metric("no non-source samples".into()));
        }
        Ok(hit as f64 / total as f64)
    }

    /// Fraction of `source` samples predicted as `target`.
    pub fn ts_ata(&self, source: usize, target: usize) -> Result<f64> {
        if source == target {
            return Err(Error::Metric("target equals source".into()));
        }
        Ok(self.source_histogram(source)?[target])
    }

    /// Largest `ts_ata` over non-source targets, with its class; ties go to the lowest index.
    pub fn max_ata(&self, source: usize) -> Result<(f64, usize)> {
        let hist = self.source_histogram(source)?;
        let mut best: Option<(f64, usize)> = None;
        for (c, &v) in hist.iter().enumerate() {
            if c != source && best.is_none_or(|(b, _)| v > b) {
                best = Some((v, c));
            }
        }
        best.ok_or_else(|| Error::Metric("only one class".into()))
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().copied().zip(self.predicted.iter().copied())
    }

    fn source_histogram(&self, source: usize) -> Result<Vec<f64>> {
        let mut counts = vec![0usize; self.classes];
        let mut total = 0usize;
        for (_, p) in self.pairs().filter(|(y, _)| *y == source) {
            counts[p] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::Metric(format!("no samples of source class {source}")));
        }
        Ok(counts.into_iter().map(|n| n as f64 / total as f64).collect())
    }
}

/// Mean cross-entropy and predictions of `model` over `data`.
pub fn evaluate(model: &ModelState, data: &Dataset) -> Result<(f64, Predictions)> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let parts = idx
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let (x, y) = data.batch(chunk)?;
            let probs = model.forward(&x)?;
            Ok((cross_entropy(&probs, &y)? * chunk.len() as f64, probs.argmax_rows()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut predicted = Vec::with_capacity(data.len());
    for (l, p) in parts {
        loss += l;
        predicted.extend(p);
    }
    let preds = Predictions::new(data.labels().to_vec(), predicted, data.num_classes())?;
    Ok((loss / data.len() as f64, preds))
}

pub fn mta(model: &ModelState, data: &Dataset, source: usize) -> Result<f64> {
    evaluate(model, data)?.1.mta(source)
}

pub fn ts_ata(model: &ModelState, data: &Dataset, source: usize, target: usize) -> Result<f64> {
    evaluate(model, data)?.1.ts_ata(source, target)
}

pub fn max_ata(model: &ModelState, data: &Dataset, source: usize) -> Result<(f64, usize)> {
    evaluate(model, data)?.1.max_ata(source)
}

/// Evaluation results for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub val_loss: f64,
    pub mta: f64,
    pub ts_ata: Option<f64>,
    pub ata_target: Option<usize>,
    pub max_ata: f64,
    pub max_ata_class: usize,
}

impl MetricsRow {
    pub fn from_predictions(
        round: usize,
        val_loss: f64,
        preds: &Predictions,
        source: usize,
        target: Option<usize>,
    ) -> Result<Self> {
        let (max_ata, max_ata_class) = preds.max_ata(source)?;
        Ok(Self {
            round,
            val_loss,
            mta: preds.mta(source)?,
            ts_ata: target.map(|t| preds.ts_ata(source, t)).transpose()?,
            ata_target: target,
            max_ata,
            max_ata_class,
        })
    }
}
