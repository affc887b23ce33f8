use std::collections::HashMap;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, Model};
use super::ExperimentError;
use crate::datagen::{gen_mixture, GeneratorSpec};
use crate::divergence::{sweep, KlSweep, PointFailure, SweepAxis};
use crate::error::Result;
use crate::federated::{
    run_one_shot, run_rounds, shard_dataset, weight_prior, BnnSetup, LdaSetup, OneShotConfig, OneShotOutcome,
    RegressionSetup, RoundState,
};
use crate::fusion::FusionRule;
use crate::local::TrainConfig;
use crate::seed::derive_seed;
use crate::stats::mean_stderr;

/// One line of the result table: a statistic of one series at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub axis_value: f64,
    /// `CIL`, `CIP`, `central` (single agent with all data) or `both`
    /// (quantities comparing the two rules).
    pub rule: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation over `√repetitions`.
    pub stderr: f64,
    /// Repetitions that completed.
    pub repetitions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub rows: Vec<Row>,
    pub failures: Vec<PointFailure>,
    /// Present for KL sweeps.
    pub kl_sweep: Option<KlSweep>,
}

type Sample = (&'static str, &'static str, f64);

/// Runs every grid point and repetition of `cfg`. Failed repetitions are
/// listed in `failures` and left out of the averages.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<ExperimentOutcome, ExperimentError> {
    let fingerprint = cfg.fingerprint();
    let mut outcome = ExperimentOutcome {
        config: cfg.clone(),
        fingerprint: fingerprint.clone(),
        rows: Vec::new(),
        failures: Vec::new(),
        kl_sweep: None,
    };
    match cfg.experiment {
        ExperimentKind::KlSweep => {
            let kl = sweep(
                cfg.axis,
                &cfg.grid,
                cfg.repetitions,
                cfg.base_seed,
                fingerprint,
                |v, _, seed| Ok(run_one_shot(&one_shot_config(cfg, v, seed)?)?.kl_cil_cip),
            )
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
            outcome.rows = cfg
                .grid
                .iter()
                .enumerate()
                .filter(|&(i, _)| kl.completed(i) > 0)
                .map(|(i, &v)| Row {
                    axis_value: v,
                    rule: "both".into(),
                    metric: "kl_cil_cip".into(),
                    mean: kl.values[i],
                    stderr: kl.stderr[i],
                    repetitions: kl.completed(i),
                })
                .collect();
            outcome.failures = kl.failures.clone();
            outcome.kl_sweep = Some(kl);
        }
        ExperimentKind::Federated => {
            let results: Vec<Result<Vec<(usize, Sample)>>> = (0..cfg.repetitions)
                .into_par_iter()
                .map(|r| federated_repetition(cfg, rep_seed(cfg, r)))
                .collect();
            let mut jobs = Vec::new();
            for (r, res) in results.into_iter().enumerate() {
                match res {
                    Ok(samples) => jobs.push((r, samples)),
                    Err(e) => outcome.failures.extend((0..cfg.grid.len()).map(|i| PointFailure {
                        index: i,
                        repetition: r,
                        message: e.to_string(),
                    })),
                }
            }
            outcome.rows = aggregate(&cfg.grid, jobs);
        }
        _ => {
            let points: Vec<(usize, usize)> = (0..cfg.grid.len())
                .flat_map(|i| (0..cfg.repetitions).map(move |r| (i, r)))
                .collect();
            let results: Vec<Result<Vec<Sample>>> = points
                .par_iter()
                .map(|&(i, r)| {
                    let out = run_one_shot(&one_shot_config(cfg, cfg.grid[i], rep_seed(cfg, r))?)?;
                    Ok(one_shot_samples(cfg, &out))
                })
                .collect();
            let mut jobs = Vec::new();
            for (&(i, r), res) in points.iter().zip(results) {
                match res {
                    Ok(samples) => jobs.push((r, samples.into_iter().map(|s| (i, s)).collect())),
                    Err(e) => outcome.failures.push(PointFailure {
                        index: i,
                        repetition: r,
                        message: e.to_string(),
                    }),
                }
            }
            outcome.rows = aggregate(&cfg.grid, jobs);
        }
    }
    Ok(outcome)
}

/// Repetition `r` uses the same seed at every grid point.
fn rep_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    derive_seed(cfg.base_seed, &[r as u64])
}

/// Groups samples by (grid point, rule, metric), keeping first-seen order
/// within each point.
fn aggregate(grid: &[f64], jobs: Vec<(usize, Vec<(usize, Sample)>)>) -> Vec<Row> {
    let mut keys: Vec<Vec<(&'static str, &'static str)>> = vec![Vec::new(); grid.len()];
    let mut values: HashMap<(usize, &'static str, &'static str), Vec<f64>> = HashMap::new();
    for (_, samples) in jobs {
        for (i, (rule, metric, v)) in samples {
            let entry = values.entry((i, rule, metric)).or_insert_with(|| {
                keys[i].push((rule, metric));
                Vec::new()
            });
            entry.push(v);
        }
    }
    let mut rows = Vec::new();
    for (i, point_keys) in keys.iter().enumerate() {
        for &(rule, metric) in point_keys {
            let xs = &values[&(i, rule, metric)];
            let (mean, stderr) = mean_stderr(xs);
            rows.push(Row {
                axis_value: grid[i],
                rule: rule.into(),
                metric: metric.into(),
                mean,
                stderr,
                repetitions: xs.len(),
            });
        }
    }
    rows
}

fn with_seed(generator: &GeneratorSpec, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        seed,
        ..generator.clone()
    }
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        rng_seed: seed,
        ..cfg.train.clone()
    }
}

/// The one-shot setup at sweep value `value` for one repetition.
fn one_shot_config(cfg: &ExperimentConfig, value: f64, seed: u64) -> Result<OneShotConfig> {
    let pick = |axis: SweepAxis, fixed: f64| if cfg.axis == axis { value } else { fixed };
    let agents = pick(SweepAxis::Clients, cfg.agents as f64) as usize;
    let q0 = pick(SweepAxis::PriorVariance, cfg.q0);
    let p1 = pick(SweepAxis::ClassPrior, cfg.p1);
    let generator = with_seed(&cfg.generator, seed);
    Ok(match cfg.model {
        Model::Regression => OneShotConfig::Regression(RegressionSetup {
            generator,
            agents,
            q0,
            prior_mean: 0.0,
        }),
        Model::Lda => {
            let mut class_prior = vec![(1.0 - p1) / (generator.output_dim - 1) as f64; generator.output_dim];
            class_prior[0] = p1;
            OneShotConfig::Lda(LdaSetup {
                generator,
                agents,
                class_prior,
                mean_prior_strength: cfg.mean_prior_strength,
            })
        }
        Model::Bnn => OneShotConfig::Bnn(BnnSetup {
            generator,
            agents,
            q0,
            spec: cfg.mlp_spec()?,
            train: train_config(cfg, seed),
            prior_centre: cfg.prior_centre,
        }),
    })
}

fn one_shot_samples(cfg: &ExperimentConfig, out: &OneShotOutcome) -> Vec<Sample> {
    let metric = out.metric.name();
    let mut samples = Vec::new();
    for &rule in cfg.rules.rules() {
        let value = match rule {
            FusionRule::Cil => out.cil_metric,
            FusionRule::Cip => out.cip_metric,
        };
        samples.push((rule.name(), metric, value));
        if cfg.model == Model::Bnn {
            samples.push((rule.name(), "accuracy_ratio", value / out.centralized_metric));
        }
    }
    samples.push(("central", metric, out.centralized_metric));
    if cfg.rules.rules().len() == 2 {
        samples.push(("both", "kl_cil_cip", out.kl_cil_cip));
    }
    samples
}

fn federated_repetition(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(usize, Sample)>> {
    let spec = cfg.mlp_spec()?;
    let (train, test) = gen_mixture(&with_seed(&cfg.generator, seed))?;
    let (prior, train_cfg) = weight_prior(&spec, cfg.q0, cfg.prior_centre, &train_config(cfg, seed))?;
    let shards = shard_dataset(&train, cfg.agents, derive_seed(seed, &[0x5aad]))?;
    let initial = RoundState::initial(&spec, prior, &test)?;
    let mut samples = Vec::new();
    for &rule in cfg.rules.rules() {
        let states = run_rounds(initial.clone(), cfg.rounds, &shards, &spec, &train_cfg, rule, &test)?;
        for (t, state) in std::iter::once(&initial).chain(&states).enumerate() {
            samples.push((t, (rule.name(), "test_accuracy", state.metrics.test_accuracy)));
            samples.push((
                t,
                (rule.name(), "mean_param_variance", state.metrics.mean_param_variance),
            ));
            if rule == FusionRule::Cil {
                samples.push((
                    t,
                    (rule.name(), "cip_fallback", f64::from(u8::from(state.fell_back_to_cip))),
                ));
            }
        }
    }
    Ok(samples)
}
