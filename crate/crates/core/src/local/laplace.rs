use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::mlp::{nll_and_gradient, squared_gradient_sum, MlpSpec};
use crate::data::LabeledShard;
use crate::error::{check_dim, FusionError, Result};
use crate::gaussian::{GaussianBelief, Precision};
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Seeds the weight initialization when not warm-starting.
    pub rng_seed: u64,
    /// Added to every diagonal entry of the Laplace precision.
    pub fisher_jitter: f64,
    /// Start from the prior mean instead of a fresh seeded initialization.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.05,
            rng_seed: 0,
            fisher_jitter: 1e-6,
            warm_start: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(FusionError::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(FusionError::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.fisher_jitter >= 0.0) {
            return Err(FusionError::InvalidArgument("fisher jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Diagonal empirical Fisher `(1/N) Σ_n (∇ log p(y_n|x_n,θ))²`.
pub fn empirical_fisher(spec: &MlpSpec, params: &DVector<f64>, shard: &LabeledShard) -> Result<Precision> {
    check_dim(spec.parameter_count(), params.len())?;
    if shard.is_empty() {
        return Ok(Precision::Diagonal(DVector::zeros(params.len())));
    }
    let sum = squared_gradient_sum(spec, params, &shard.data)?;
    Ok(Precision::Diagonal(sum / shard.len() as f64))
}

/// `v ↦ argmin_θ ½‖θ − v‖² + (η/2)(θ − μ₀)ᵀP₀(θ − μ₀)`.
enum ProximalPrior {
    Diagonal {
        scale: DVector<f64>,
        shift: DVector<f64>,
    },
    Dense {
        factor: Cholesky<f64, Dyn>,
        shift: DVector<f64>,
    },
}

impl ProximalPrior {
    fn new(prior: &GaussianBelief, step: f64) -> Result<Self> {
        let shift = prior.information() * step;
        Ok(match prior.precision() {
            Precision::Diagonal(p) => ProximalPrior::Diagonal {
                scale: p.map(|v| 1.0 / (1.0 + step * v)),
                shift,
            },
            Precision::Dense(p) => {
                let m = DMatrix::identity(p.nrows(), p.ncols()) + p * step;
                let factor = m
                    .cholesky()
                    .ok_or_else(|| FusionError::NotPositiveDefinite("proximal system".into()))?;
                ProximalPrior::Dense { factor, shift }
            }
        })
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            ProximalPrior::Diagonal { scale, shift } => (v + shift).component_mul(scale),
            ProximalPrior::Dense { factor, shift } => factor.solve(&(v + shift)),
        }
    }
}

/// Laplace approximation of the local posterior of an MLP classifier.
///
/// The mean minimizes `(1/N)[Σ_n −log p(y_n|x_n,θ) + ½(θ−μ₀)ᵀP₀(θ−μ₀)]`
/// by full-batch proximal gradient descent: an explicit step on the
/// likelihood followed by the exact minimizer of the quadratic prior term,
/// which stays stable however sharp the prior becomes. The precision is
/// `P₀ + N·Fisher(θ̂) + jitter·I`.
pub fn laplace_fit(
    prior: &GaussianBelief,
    shard: &LabeledShard,
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<GaussianBelief> {
    check_dim(spec.parameter_count(), prior.dim())?;
    cfg.validate()?;
    if shard.is_empty() {
        return Ok(prior.clone());
    }
    let n = shard.len() as f64;
    let mut theta = if cfg.warm_start {
        prior.mean().clone()
    } else {
        spec.init_params(&mut rng_for(cfg.rng_seed, &[]))
    };
    let step = cfg.learning_rate / n;
    let prox = ProximalPrior::new(prior, step)?;
    for epoch in 0..cfg.epochs {
        let (nll, grad) = nll_and_gradient(spec, &theta, &shard.data)?;
        let offset = &theta - prior.mean();
        let loss = (nll + 0.5 * offset.dot(&prior.precision().mul_vec(&offset))) / n;
        if !loss.is_finite() {
            return Err(FusionError::OptimizerDiverged {
                agent_id: shard.agent_id,
                epoch,
                loss,
            });
        }
        theta.axpy(-step, &grad, 1.0);
        theta = prox.apply(&theta);
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(FusionError::OptimizerDiverged {
            agent_id: shard.agent_id,
            epoch: cfg.epochs,
            loss: f64::NAN,
        });
    }
    let curvature = squared_gradient_sum(spec, &theta, &shard.data)?.add_scalar(cfg.fisher_jitter);
    let precision = prior.precision().add(&Precision::Diagonal(curvature))?;
    GaussianBelief::new(theta, precision)
}
