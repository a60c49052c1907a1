//! Norm-difference clipping: the server drops updates whose norm exceeds a bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::UpdateRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum Threshold {
    Fixed(f64),
    /// Mean norm of the previous round's benign updates; unbounded in round 1.
    PreviousBenignMean,
    /// Percentile (0..=100) of the current round's update norms.
    RoundPercentile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefenseConfig {
    pub enabled: bool,
    pub threshold: Threshold,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: Threshold::PreviousBenignMean,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        match self.threshold {
            Threshold::Fixed(q) if !(q > 0.0) => Err(Error::Config(format!("fixed bound {q} must be positive"))),
            Threshold::RoundPercentile(p) if !(0.0..=100.0).contains(&p) => {
                Err(Error::Config(format!("percentile {p} outside [0, 100]")))
            }
            _ => Ok(()),
        }
    }

    /// Bound known before any update of the round arrives; `None` for the
    /// percentile mode, which depends on the round itself.
    pub fn prior_bound(&self, previous_benign_mean: Option<f64>) -> Option<f64> {
        match self.threshold {
            Threshold::Fixed(q) => Some(q),
            Threshold::PreviousBenignMean => Some(previous_benign_mean.unwrap_or(f64::INFINITY)),
            Threshold::RoundPercentile(_) => None,
        }
    }

    /// The bound applied to this round's updates.
    pub fn bound(&self, previous_benign_mean: Option<f64>, round_norms: &[f64]) -> f64 {
        match self.threshold {
            Threshold::RoundPercentile(p) => percentile(round_norms, p).unwrap_or(f64::INFINITY),
            _ => self.prior_bound(previous_benign_mean).unwrap_or(f64::INFINITY),
        }
    }
}

/// Linear-interpolation percentile of `values`.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rejection {
    pub client: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdcOutcome {
    pub accepted: Vec<UpdateRecord>,
    pub rejected: Vec<Rejection>,
}

/// Keeps updates with `norm <= q`, preserving order.
pub fn ndc_filter(updates: Vec<UpdateRecord>, q: f64) -> Result<NdcOutcome> {
    if q.is_nan() || q <= 0.0 {
        return Err(Error::Config(format!("clipping bound {q} must be positive")));
    }
    let mut accepted = Vec::with_capacity(updates.len());
    let mut rejected = Vec::new();
    for u in updates {
        if u.norm > q {
            rejected.push(Rejection {
                client: u.client,
                norm: u.norm,
            });
        } else {
            accepted.push(u);
        }
    }
    Ok(NdcOutcome { accepted, rejected })
}
