//! In-process simulation of a coordinator and `M` agents.

mod message;
mod one_shot;

use log::warn;
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use message::{deserialize_message, serialize_message, AgentMessage, MessageKind, WireError, WIRE_VERSION};
pub use one_shot::{
    run_one_shot, weight_prior, BnnSetup, LdaSetup, Metric, OneShotConfig, OneShotOutcome, PriorCentre, RegressionSetup,
};

use crate::data::{Dataset, LabeledShard};
use crate::error::{FusionError, Result};
use crate::fusion::{fuse_cil, fuse_cip, FusionRule};
use crate::gaussian::GaussianBelief;
use crate::local::{accuracy, laplace_fit, MlpSpec, TrainConfig};
use crate::seed::rng_for;

/// Randomly partitions `dataset` into `agents` near-equal shards; the first
/// `N mod M` shards get one extra point. A single agent gets the dataset as is.
pub fn shard_dataset(dataset: &Dataset, agents: usize, seed: u64) -> Result<Vec<LabeledShard>> {
    if agents == 0 {
        return Err(FusionError::InvalidArgument("need at least one agent".into()));
    }
    if agents > dataset.len() {
        return Err(FusionError::InvalidArgument(format!(
            "{agents} agents for only {} data points",
            dataset.len()
        )));
    }
    if agents == 1 {
        return Ok(vec![LabeledShard::new(0, dataset.clone())]);
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_for(seed, &[agents as u64]));
    let base = dataset.len() / agents;
    let extra = dataset.len() % agents;
    let mut start = 0;
    Ok((0..agents)
        .map(|m| {
            let size = base + usize::from(m < extra);
            let shard = LabeledShard::new(m, dataset.select(&order[start..start + size]));
            start += size;
            shard
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub test_accuracy: f64,
    /// Average marginal variance of the global belief.
    pub mean_param_variance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundState {
    /// Number of completed rounds.
    pub t: usize,
    pub global: GaussianBelief,
    pub agent_posteriors: Vec<GaussianBelief>,
    pub metrics: RoundMetrics,
    /// The CIL rule was requested but failed, and CIP was used instead.
    pub fell_back_to_cip: bool,
}

fn metrics(spec: &MlpSpec, global: &GaussianBelief, test: &Dataset) -> Result<RoundMetrics> {
    let v: DVector<f64> = global.variances();
    Ok(RoundMetrics {
        test_accuracy: accuracy(spec, global.mean(), test)?,
        mean_param_variance: v.mean(),
    })
}

impl RoundState {
    /// State before round 1, with `prior` as the global belief.
    pub fn initial(spec: &MlpSpec, prior: GaussianBelief, test: &Dataset) -> Result<Self> {
        crate::error::check_dim(spec.parameter_count(), prior.dim())?;
        let global = prior;
        Ok(Self {
            t: 0,
            metrics: metrics(spec, &global, test)?,
            global,
            agent_posteriors: Vec::new(),
            fell_back_to_cip: false,
        })
    }
}

fn transmit(kind: MessageKind, round: usize, agent: usize, belief: &GaussianBelief) -> Result<GaussianBelief> {
    let msg = AgentMessage::new(kind, round as u32, agent as u32, belief.clone())
        .map_err(|e| FusionError::InvalidArgument(e.to_string()))?;
    deserialize_message(&serialize_message(&msg))
        .map(|m| m.belief)
        .map_err(|e| FusionError::InvalidArgument(e.to_string()))
}

/// One communication round: broadcast the global belief, fit every agent
/// against it, fuse the uploads and evaluate on `test`.
///
/// Every agent trains from the same starting point: the broadcast mean from
/// round 2 on (or always, with `cfg.warm_start`), otherwise the initialization
/// seeded by `cfg.rng_seed`.
pub fn run_round(
    state: &RoundState,
    shards: &[LabeledShard],
    spec: &MlpSpec,
    cfg: &TrainConfig,
    rule: FusionRule,
    test: &Dataset,
) -> Result<RoundState> {
    let round = state.t + 1;
    let wrap = |source: FusionError| FusionError::Round {
        round,
        source: Box::new(source),
    };
    if shards.is_empty() {
        return Err(wrap(FusionError::EmptyInput("no agents")));
    }
    let agent_cfg = TrainConfig {
        warm_start: cfg.warm_start || round > 1,
        ..cfg.clone()
    };
    let posteriors: Vec<GaussianBelief> = shards
        .par_iter()
        .map(|shard| {
            let prior = transmit(MessageKind::PriorBroadcast, round, shard.agent_id, &state.global)?;
            let local = laplace_fit(&prior, shard, spec, &agent_cfg)?;
            transmit(MessageKind::PosteriorUpload, round, shard.agent_id, &local)
        })
        .collect::<Result<_>>()
        .map_err(wrap)?;

    let mut fell_back = false;
    let fused = match rule {
        FusionRule::Cip => fuse_cip(&posteriors),
        FusionRule::Cil => match fuse_cil(&state.global, &posteriors) {
            Err(FusionError::IndefinitePrecision { min_eigenvalue }) => {
                warn!("round {round}: CIL precision indefinite (min eigenvalue {min_eigenvalue:.3e}), using CIP");
                fell_back = true;
                fuse_cip(&posteriors)
            }
            other => other,
        },
    }
    .map_err(wrap)?
    .fused;
    Ok(RoundState {
        t: round,
        metrics: metrics(spec, &fused, test).map_err(wrap)?,
        global: fused,
        agent_posteriors: posteriors,
        fell_back_to_cip: fell_back,
    })
}

/// Runs `rounds` rounds from the initial state; returns the states after each round.
pub fn run_rounds(
    initial: RoundState,
    rounds: usize,
    shards: &[LabeledShard],
    spec: &MlpSpec,
    cfg: &TrainConfig,
    rule: FusionRule,
    test: &Dataset,
) -> Result<Vec<RoundState>> {
    let mut out: Vec<RoundState> = Vec::with_capacity(rounds);
    let mut state = initial;
    for _ in 0..rounds {
        let next = run_round(&state, shards, spec, cfg, rule, test)?;
        // Agent posteriors are only needed for the current round.
        state.agent_posteriors.clear();
        out.push(next.clone());
        state = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_mixture, GeneratorSpec};
    use crate::local::Activation;
    use nalgebra::DMatrix;

    fn toy(n: usize) -> Dataset {
        Dataset::classification(
            DMatrix::from_fn(n, 1, |i, _| i as f64),
            (0..n).map(|i| i % 2).collect(),
            2,
        )
        .unwrap()
    }

    #[test]
    fn sharding_partitions_data() {
        let data = toy(10);
        let shards = shard_dataset(&data, 4, 3).unwrap();
        let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        let mut seen: Vec<f64> = shards
            .iter()
            .flat_map(|s| s.data.features().iter().copied().collect::<Vec<_>>())
            .collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(shard_dataset(&data, 1, 3).unwrap()[0].data, data);
        assert!(shard_dataset(&data, 11, 3).is_err());
        assert_eq!(
            shard_dataset(&toy(1000), 4, 0)
                .unwrap()
                .iter()
                .map(|s| s.len())
                .collect::<Vec<_>>(),
            vec![250; 4]
        );
    }

    #[test]
    fn single_agent_cil_round_is_sequential_training() {
        let (train, test) = gen_mixture(&GeneratorSpec {
            n_train: 60,
            n_test: 30,
            ..GeneratorSpec::mixture(1)
        })
        .unwrap();
        let spec = MlpSpec::new(vec![10, 4, 3], Activation::Tanh).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let shards = shard_dataset(&train, 1, 0).unwrap();
        let prior = GaussianBelief::isotropic(DVector::zeros(spec.parameter_count()), 100.0).unwrap();
        let init = RoundState::initial(&spec, prior, &test).unwrap();
        let a = run_rounds(init.clone(), 2, &shards, &spec, &cfg, FusionRule::Cil, &test).unwrap();
        let b = run_rounds(init.clone(), 2, &shards, &spec, &cfg, FusionRule::Cip, &test).unwrap();
        assert_eq!(a, b);
        let first = laplace_fit(&init.global, &shards[0], &spec, &cfg).unwrap();
        assert_eq!(a[0].global, first);
        assert!(a[1].metrics.mean_param_variance < a[0].metrics.mean_param_variance);
    }
}
