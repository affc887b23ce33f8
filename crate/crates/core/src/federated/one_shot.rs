use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shard_dataset;
use crate::data::{Dataset, LabeledShard};
use crate::datagen::{gen_classification, gen_linear, GeneratorSpec};
use crate::discrete::DiscreteBelief;
use crate::divergence::kl_cil_cip;
use crate::error::{FusionError, Result};
use crate::fusion::{fuse_cil, fuse_cip, fuse_discrete_cil, fuse_discrete_cip, FusionReport};
use crate::gaussian::{kl_divergence, GaussianBelief};
use crate::local::linear::linear_posterior_isotropic;
use crate::local::{accuracy, laplace_fit, LdaModel, MlpSpec, TrainConfig};
use crate::seed::{derive_seed, rng_for};

/// Bayesian linear regression with prior `N(prior_mean·1, q₀I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionSetup {
    pub generator: GeneratorSpec,
    pub agents: usize,
    pub q0: f64,
    #[serde(default)]
    pub prior_mean: f64,
}

/// LDA class posteriors; every agent assumes the class prior `class_prior`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaSetup {
    pub generator: GeneratorSpec,
    pub agents: usize,
    pub class_prior: Vec<f64>,
    pub mean_prior_strength: f64,
}

/// Where the isotropic weight prior is centred.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorCentre {
    /// `N(0, q₀I)`; agents start from the shared seeded initialization.
    Origin,
    /// `N(θ_init, q₀I)` with `θ_init` the shared seeded initialization;
    /// agents start from the prior mean.
    #[default]
    SharedInit,
}

/// Laplace-approximated MLP classifier with an isotropic prior of variance `q₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnnSetup {
    pub generator: GeneratorSpec,
    pub agents: usize,
    pub q0: f64,
    pub spec: MlpSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub prior_centre: PriorCentre,
}

/// Isotropic weight prior and the matching training configuration.
pub fn weight_prior(
    spec: &MlpSpec,
    q0: f64,
    centre: PriorCentre,
    train: &TrainConfig,
) -> Result<(GaussianBelief, TrainConfig)> {
    check_q0(q0)?;
    let p = spec.parameter_count();
    let (mean, warm_start) = match centre {
        PriorCentre::Origin => (DVector::zeros(p), false),
        PriorCentre::SharedInit => (spec.init_params(&mut rng_for(train.rng_seed, &[])), true),
    };
    let prior = GaussianBelief::diagonal(mean, DVector::from_element(p, 1.0 / q0))?;
    Ok((
        prior,
        TrainConfig {
            warm_start,
            ..train.clone()
        },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub enum OneShotConfig {
    Regression(RegressionSetup),
    Lda(LdaSetup),
    Bnn(BnnSetup),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    TestMse,
    TestAccuracy,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::TestMse => "test_mse",
            Metric::TestAccuracy => "test_accuracy",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneShotOutcome {
    /// Gaussian fusion results; absent for class-posterior fusion.
    pub cil: Option<FusionReport>,
    pub cip: Option<FusionReport>,
    pub metric: Metric,
    pub cil_metric: f64,
    pub cip_metric: f64,
    /// Same model fitted by a single agent holding all the training data.
    pub centralized_metric: f64,
    /// `KL(CIL ‖ CIP)`; averaged over test queries for class posteriors.
    pub kl_cil_cip: f64,
}

/// Generates data, shards it, fits every agent, fuses with both rules and
/// evaluates on the held-out set. Sharding is seeded from the generator seed.
pub fn run_one_shot(cfg: &OneShotConfig) -> Result<OneShotOutcome> {
    match cfg {
        OneShotConfig::Regression(s) => regression(s),
        OneShotConfig::Lda(s) => lda(s),
        OneShotConfig::Bnn(s) => bnn(s),
    }
}

fn partition_seed(generator: &GeneratorSpec) -> u64 {
    derive_seed(generator.seed, &[0x5aad])
}

fn check_q0(q0: f64) -> Result<()> {
    if q0 > 0.0 && q0.is_finite() {
        Ok(())
    } else {
        Err(FusionError::InvalidArgument(format!("q0 must be positive, got {q0}")))
    }
}

fn mse(mean: &DVector<f64>, test: &Dataset) -> Result<f64> {
    let y = test.real_targets()?.column(0);
    let resid = test.features() * mean - y;
    Ok(resid.norm_squared() / test.len() as f64)
}

fn regression(s: &RegressionSetup) -> Result<OneShotOutcome> {
    check_q0(s.q0)?;
    let data = gen_linear(&s.generator)?;
    let d = s.generator.input_dim;
    let prior = GaussianBelief::isotropic(DVector::from_element(d, s.prior_mean), s.q0)?;
    let noise_var = s.generator.noise_std.powi(2);
    let local = |shard: &LabeledShard| {
        let y = shard.data.real_targets()?.column(0).into_owned();
        linear_posterior_isotropic(&prior, shard.data.features(), &y, noise_var)
    };
    let shards = shard_dataset(&data.train, s.agents, partition_seed(&s.generator))?;
    let locals = shards.iter().map(local).collect::<Result<Vec<_>>>()?;
    let cil = fuse_cil(&prior, &locals)?;
    let cip = fuse_cip(&locals)?;
    let central = local(&LabeledShard::new(0, data.train.clone()))?;
    Ok(OneShotOutcome {
        metric: Metric::TestMse,
        cil_metric: mse(cil.fused.mean(), &data.test)?,
        cip_metric: mse(cip.fused.mean(), &data.test)?,
        centralized_metric: mse(central.mean(), &data.test)?,
        kl_cil_cip: kl_cil_cip(&prior, &locals)?,
        cil: Some(cil),
        cip: Some(cip),
    })
}

fn lda(s: &LdaSetup) -> Result<OneShotOutcome> {
    let (train, test) = gen_classification(&s.generator)?;
    let (labels, classes) = test.labels()?;
    let d = s.generator.input_dim;
    let class_prior = DiscreteBelief::from_probs(&s.class_prior)?;
    if class_prior.len() != classes {
        return Err(FusionError::DimensionMismatch {
            expected: classes,
            found: class_prior.len(),
        });
    }
    let prior_means = DMatrix::zeros(classes, d);
    let cov = DMatrix::identity(d, d);
    let fit = |shard: &LabeledShard| LdaModel::fit(&prior_means, &cov, &class_prior, shard, s.mean_prior_strength);
    let shards = shard_dataset(&train, s.agents, partition_seed(&s.generator))?;
    let models = shards.iter().map(fit).collect::<Result<Vec<_>>>()?;
    let central = fit(&LabeledShard::new(0, train))?;

    let per_query: Vec<(bool, bool, bool, f64)> = (0..test.len())
        .into_par_iter()
        .map(|n| {
            let x = test.features().row(n).transpose();
            let locals = models.iter().map(|m| m.posterior(&x)).collect::<Result<Vec<_>>>()?;
            let cil = fuse_discrete_cil(&class_prior, &locals)?;
            let cip = fuse_discrete_cip(&locals)?;
            let c = labels[n];
            Ok((
                cil.argmax() == c,
                cip.argmax() == c,
                central.posterior(&x)?.argmax() == c,
                cil.kl_divergence(&cip)?,
            ))
        })
        .collect::<Result<_>>()?;
    let n = test.len() as f64;
    let frac = |f: fn(&(bool, bool, bool, f64)) -> bool| per_query.iter().filter(|q| f(q)).count() as f64 / n;
    Ok(OneShotOutcome {
        cil: None,
        cip: None,
        metric: Metric::TestAccuracy,
        cil_metric: frac(|q| q.0),
        cip_metric: frac(|q| q.1),
        centralized_metric: frac(|q| q.2),
        kl_cil_cip: per_query.iter().map(|q| q.3).sum::<f64>() / n,
    })
}

fn bnn(s: &BnnSetup) -> Result<OneShotOutcome> {
    let (train, test) = gen_classification(&s.generator)?;
    let (prior, cfg) = weight_prior(&s.spec, s.q0, s.prior_centre, &s.train)?;
    let shards = shard_dataset(&train, s.agents, partition_seed(&s.generator))?;
    let locals = shards
        .par_iter()
        .map(|shard| laplace_fit(&prior, shard, &s.spec, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let central = laplace_fit(&prior, &LabeledShard::new(0, train), &s.spec, &cfg)?;
    let cil = fuse_cil(&prior, &locals)?;
    let cip = fuse_cip(&locals)?;
    Ok(OneShotOutcome {
        metric: Metric::TestAccuracy,
        cil_metric: accuracy(&s.spec, cil.fused.mean(), &test)?,
        cip_metric: accuracy(&s.spec, cip.fused.mean(), &test)?,
        centralized_metric: accuracy(&s.spec, central.mean(), &test)?,
        kl_cil_cip: kl_divergence(&cil.fused, &cip.fused)?,
        cil: Some(cil),
        cip: Some(cip),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_single_agent_rules_agree() {
        let out = run_one_shot(&OneShotConfig::Regression(RegressionSetup {
            generator: GeneratorSpec::linear(3),
            agents: 1,
            q0: 1.0,
            prior_mean: 0.0,
        }))
        .unwrap();
        assert_eq!(out.cil_metric, out.cip_metric);
        assert_eq!(out.kl_cil_cip, 0.0);
        assert!((out.cil_metric - out.centralized_metric).abs() < 1e-9);
    }

    #[test]
    fn lda_flat_prior_rules_agree() {
        let out = run_one_shot(&OneShotConfig::Lda(LdaSetup {
            generator: GeneratorSpec::two_class(5),
            agents: 6,
            class_prior: vec![0.5, 0.5],
            mean_prior_strength: 1.0,
        }))
        .unwrap();
        assert_eq!(out.cil_metric, out.cip_metric);
        assert!(out.kl_cil_cip < 1e-12);
    }
}
