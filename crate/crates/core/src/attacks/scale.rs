use crate::error::{Error, Result};
use crate::nn::ParameterVector;

/// Adversary-side estimate of the server's norm bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEstimate {
    pub value: f64,
    pub samples: usize,
}

/// Mean of legitimately trained update norms.
pub fn estimate_q(benign_norms: &[f64]) -> Result<QEstimate> {
    if benign_norms.is_empty() {
        return Err(Error::Estimation("no benign norms collected".into()));
    }
    if let Some(bad) = benign_norms.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Estimation(format!("invalid norm {bad}")));
    }
    Ok(QEstimate {
        value: benign_norms.iter().sum::<f64>() / benign_norms.len() as f64,
        samples: benign_norms.len(),
    })
}

/// Running mean of collected norms, kept by the adversary across rounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTracker {
    norms: Vec<f64>,
}

impl QTracker {
    pub fn record(&mut self, norm: f64) {
        self.norms.push(norm);
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn estimate(&self) -> Result<QEstimate> {
        estimate_q(&self.norms)
    }
}

/// Rescales the update so that `‖result − global‖₂ = q`, keeping its direction.
/// Returns the scaled parameters and the factor `γ = q / ‖L_adv − G‖`.
pub fn train_and_scale(
    adversarial: &ParameterVector,
    global: &ParameterVector,
    q: f64,
) -> Result<(ParameterVector, f64)> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Scaling(format!("bound {q} must be positive and finite")));
    }
    let delta = adversarial.sub(global)?;
    let norm = delta.norm();
    if norm == 0.0 {
        return Err(Error::Scaling("zero update cannot be rescaled".into()));
    }
    let unit = delta.scaled(1.0 / norm);
    let mut step = q;
    // rounding against large global entries can push the recomputed norm a
    // few ulps above q; back off so a server bound of exactly q accepts it
    for _ in 0..64 {
        let mut out = global.clone();
        out.axpy(step, &unit)?;
        let got = out.sub(global)?.norm();
        if got <= q {
            return Ok((out, q / norm));
        }
        step -= 2.0 * (got - q).max(q * f64::EPSILON);
    }
    Err(Error::Scaling(format!("could not bring the update norm under {q}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec())
    }

    #[test]
    fn q_is_mean() {
        assert_eq!(estimate_q(&[1.0, 2.0, 3.0]).unwrap().value, 2.0);
        assert_eq!(estimate_q(&[0.7]).unwrap().value, 0.7);
        assert!(matches!(estimate_q(&[]), Err(Error::Estimation(_))));
    }

    #[test]
    fn halves_doubles_or_keeps() {
        let g = pv(&[1.0, 1.0]);
        // ‖delta‖ = 5
        let l = pv(&[4.0, 5.0]);
        let (out, gamma) = train_and_scale(&l, &g, 2.5).unwrap();
        assert!((gamma - 0.5).abs() < 1e-12);
        assert!((out.sub(&g).unwrap().norm() - 2.5).abs() < 1e-12);
        let (same, gamma) = train_and_scale(&l, &g, 5.0).unwrap();
        assert!((gamma - 1.0).abs() < 1e-12);
        for (a, b) in same.as_slice().iter().zip(l.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (out, gamma) = train_and_scale(&l, &g, 10.0).unwrap();
        assert!((gamma - 2.0).abs() < 1e-12);
        assert!((out.as_slice()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_is_error() {
        let g = pv(&[1.0, 2.0]);
        assert!(matches!(train_and_scale(&g, &g, 1.0), Err(Error::Scaling(_))));
        assert!(train_and_scale(&pv(&[2.0, 2.0]), &g, 0.0).is_err());
    }
}
