//! Backward-error target selection from last-layer gradient norms.
//!
//! Source-class samples are relabelled to each candidate class in turn; the
//! candidate whose relabelling demands the smallest last-layer update is taken
//! to be the nearest class in feature space.

use crate::error::{Error, Result};
use crate::nn::{ModelState, Tensor};

use super::distance::argmin_excluding;

/// `(class, ‖∇_W Σ_x CE(f(x), 1_c)‖₂)` for each candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FlameScores {
    pub scores: Vec<(usize, f64)>,
}

impl FlameScores {
    pub fn get(&self, class: usize) -> Option<f64> {
        self.scores.iter().find(|(c, _)| *c == class).map(|(_, s)| *s)
    }
}

/// Scores every candidate class on the given source-class samples.
///
/// Only `source_samples` are forwarded; no other local data is read.
pub fn flame_scores(
    model: &ModelState,
    source_samples: &Tensor,
    candidates: &[usize],
    include_bias: bool,
) -> Result<FlameScores> {
    if source_samples.is_empty() {
        return Err(Error::Domain("no source-class samples".into()));
    }
    let probe = model.last_layer_probe(source_samples)?;
    let scores = candidates
        .iter()
        .map(|&c| Ok((c, probe.gradient(c, include_bias)?.norm())))
        .collect::<Result<Vec<_>>>()?;
    Ok(FlameScores { scores })
}

/// Candidate with the smallest score, never the source; ties go to the lowest index.
pub fn select_target_flame(scores: &FlameScores, source: usize) -> Result<usize> {
    argmin_excluding(scores.scores.iter().map(|&(c, s)| (c, Some(s))), source)
        .ok_or_else(|| Error::Selection("no non-source candidate class".into()))
}
