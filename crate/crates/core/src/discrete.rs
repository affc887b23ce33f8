use crate::error::{FusionError, Result};

/// Probability vector over `L` class labels, stored as normalized log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteBelief {
    log_probs: Vec<f64>,
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl DiscreteBelief {
    /// Normalizes arbitrary finite log-weights.
    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(FusionError::EmptyInput("discrete belief needs at least one class"));
        }
        if log_weights.iter().any(|w| !w.is_finite()) {
            return Err(FusionError::InvalidArgument("log-weights must be finite".into()));
        }
        let z = logsumexp(&log_weights);
        Ok(Self {
            log_probs: log_weights.into_iter().map(|w| w - z).collect(),
        })
    }

    /// From strictly positive (not necessarily normalized) probabilities.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if let Some(class) = probs.iter().position(|&p| !(p > 0.0)) {
            return Err(FusionError::ZeroPriorProbability { class });
        }
        Self::from_log_weights(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        Self::from_log_weights(vec![0.0; classes])
    }

    /// Two-class belief `(p1, 1 − p1)`.
    pub fn binary(p1: f64) -> Result<Self> {
        Self::from_probs(&[p1, 1.0 - p1])
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Most probable class (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.log_probs.iter().enumerate() {
            if l > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    /// `KL(self ‖ other)` in nats.
    pub fn kl_divergence(&self, other: &DiscreteBelief) -> Result<f64> {
        crate::error::check_dim(self.len(), other.len())?;
        let kl: f64 = self
            .log_probs
            .iter()
            .zip(&other.log_probs)
            .map(|(p, q)| p.exp() * (p - q))
            .sum();
        Ok(kl.max(0.0))
    }
}
