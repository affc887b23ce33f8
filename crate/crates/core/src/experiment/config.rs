use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::datagen::GeneratorSpec;
use crate::divergence::{check_grid, SweepAxis};
use crate::federated::PriorCentre;
use crate::fusion::FusionRule;
use crate::local::{Activation, MlpSpec, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Regression,
    Lda,
    Bnn,
    Federated,
    KlSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Regression => "regression",
            ExperimentKind::Lda => "lda",
            ExperimentKind::Bnn => "bnn",
            ExperimentKind::Federated => "federated",
            ExperimentKind::KlSweep => "kl_sweep",
        }
    }
}

/// Local model behind a KL sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Regression,
    Lda,
    Bnn,
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(Model::Regression),
            "lda" => Ok(Model::Lda),
            "bnn" => Ok(Model::Bnn),
            other => Err(format!("unknown model `{other}` (expected regression, lda or bnn)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleSet {
    Cil,
    Cip,
    Both,
}

impl RuleSet {
    pub fn rules(self) -> &'static [FusionRule] {
        match self {
            RuleSet::Cil => &[FusionRule::Cil],
            RuleSet::Cip => &[FusionRule::Cip],
            RuleSet::Both => &[FusionRule::Cil, FusionRule::Cip],
        }
    }
}

impl FromStr for RuleSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cil" => Ok(RuleSet::Cil),
            "cip" => Ok(RuleSet::Cip),
            "both" => Ok(RuleSet::Both),
            other => Err(format!("unknown rule `{other}` (expected CIL, CIP or both)")),
        }
    }
}

/// Sweep grid, written as `start:stop:step` (stop inclusive) or `a,b,c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "Vec<f64>")]
pub struct Grid(pub Vec<f64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum GridRepr {
    Text(String),
    List(Vec<f64>),
}

impl TryFrom<GridRepr> for Grid {
    type Error = String;

    fn try_from(r: GridRepr) -> Result<Self, Self::Error> {
        match r {
            GridRepr::Text(s) => s.parse(),
            GridRepr::List(v) => Ok(Grid(v)),
        }
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.0
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{t}` is not a number in grid `{s}`"))
        };
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(format!("range grid `{s}` must look like start:stop:step"));
            }
            let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || !(stop >= start) || !step.is_finite() {
                return Err(format!("range grid `{s}` needs step > 0 and stop ≥ start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                return Err(format!("range grid `{s}` has too many points"));
            }
            return Ok(Grid((0..count).map(|k| start + k as f64 * step).collect()));
        }
        s.split(',').map(num).collect::<Result<Vec<_>, _>>().map(Grid)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// One layer of settings; every field is optional so layers can be merged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    #[serde(rename = "M_grid", skip_serializing_if = "Option::is_none")]
    pub agents_grid: Option<Grid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0_grid: Option<Grid>,
    #[serde(rename = "P1", skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(rename = "P1_grid", skip_serializing_if = "Option::is_none")]
    pub p1_grid: Option<Grid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<SweepAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rules: Option<RuleSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot_data: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fisher_jitter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_centre: Option<PriorCentre>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_prior_strength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture_components: Option<usize>,
}

impl Settings {
    fn has_grid(&self) -> bool {
        self.agents_grid.is_some() || self.q0_grid.is_some() || self.p1_grid.is_some()
    }

    /// Fields set in `upper` win. A grid in `upper` also discards every grid
    /// of `self`, so a layer never sweeps two axes at once by accident.
    pub fn overlay(self, upper: &Settings) -> Settings {
        let mut base = self;
        if upper.has_grid() {
            base.agents_grid = None;
            base.q0_grid = None;
            base.p1_grid = None;
        }
        let u = upper.clone();
        Settings {
            agents: u.agents.or(base.agents),
            agents_grid: u.agents_grid.or(base.agents_grid),
            q0: u.q0.or(base.q0),
            q0_grid: u.q0_grid.or(base.q0_grid),
            p1: u.p1.or(base.p1),
            p1_grid: u.p1_grid.or(base.p1_grid),
            axis: u.axis.or(base.axis),
            model: u.model.or(base.model),
            rounds: u.rounds.or(base.rounds),
            rules: u.rules.or(base.rules),
            repetitions: u.repetitions.or(base.repetitions),
            seed: u.seed.or(base.seed),
            output_dir: u.output_dir.or(base.output_dir),
            plot_data: u.plot_data.or(base.plot_data),
            epochs: u.epochs.or(base.epochs),
            learning_rate: u.learning_rate.or(base.learning_rate),
            fisher_jitter: u.fisher_jitter.or(base.fisher_jitter),
            hidden: u.hidden.or(base.hidden),
            prior_centre: u.prior_centre.or(base.prior_centre),
            mean_prior_strength: u.mean_prior_strength.or(base.mean_prior_strength),
            n_train: u.n_train.or(base.n_train),
            n_test: u.n_test.or(base.n_test),
            noise_std: u.noise_std.or(base.noise_std),
            mixture_components: u.mixture_components.or(base.mixture_components),
        }
    }
}

/// Contents of a configuration file: shared settings plus one optional
/// section per experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub common: Settings,
    pub regression: Option<Settings>,
    pub lda: Option<Settings>,
    pub bnn: Option<Settings>,
    pub federated: Option<Settings>,
    pub kl_sweep: Option<Settings>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(format!("cannot parse configuration: {e}")))
    }

    pub fn section(&self, kind: ExperimentKind) -> Option<&Settings> {
        match kind {
            ExperimentKind::Regression => self.regression.as_ref(),
            ExperimentKind::Lda => self.lda.as_ref(),
            ExperimentKind::Bnn => self.bnn.as_ref(),
            ExperimentKind::Federated => self.federated.as_ref(),
            ExperimentKind::KlSweep => self.kl_sweep.as_ref(),
        }
    }

    /// `common`, then the experiment's own section, then `overrides`.
    pub fn layered(&self, kind: ExperimentKind, overrides: &Settings) -> Settings {
        let mut s = Settings::default().overlay(&self.common);
        if let Some(sec) = self.section(kind) {
            s = s.overlay(sec);
        }
        s.overlay(overrides)
    }
}

/// Fully resolved experiment description. Everything that influences the
/// numbers is here; output locations are not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: Model,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub agents: usize,
    pub q0: f64,
    pub p1: f64,
    pub rounds: usize,
    pub rules: RuleSet,
    pub repetitions: usize,
    pub base_seed: u64,
    pub mean_prior_strength: f64,
    pub prior_centre: PriorCentre,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Template; the seed is replaced per repetition.
    pub generator: GeneratorSpec,
}

/// Where results go.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub plot_data: bool,
}

pub const OUTPUT_DIR_ENV: &str = "BAYES_FUSION_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "results";

/// Default prior-variance grid for KL sweeps.
pub const REGRESSION_Q0_GRID: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 9.0, 16.0, 25.0, 36.0, 64.0, 81.0];
/// Default prior-variance grid for the one-shot MLP experiment.
pub const BNN_Q0_GRID: [f64; 7] = [1.0, 2.0, 4.0, 9.0, 16.0, 25.0, 32.0];

/// Class-prior grid `k/41`, `k = 1..40`.
pub fn class_prior_grid() -> Vec<f64> {
    (1..=40).map(|k| k as f64 / 41.0).collect()
}

fn model_of(kind: ExperimentKind) -> Option<Model> {
    match kind {
        ExperimentKind::Regression => Some(Model::Regression),
        ExperimentKind::Lda => Some(Model::Lda),
        ExperimentKind::Bnn => Some(Model::Bnn),
        ExperimentKind::Federated | ExperimentKind::KlSweep => None,
    }
}

fn default_grid(model: Model, axis: SweepAxis) -> Vec<f64> {
    match (model, axis) {
        (Model::Regression, SweepAxis::Clients) => (2..=50).step_by(4).map(f64::from).collect(),
        (Model::Lda, SweepAxis::Clients) => (2..=30).step_by(2).map(f64::from).collect(),
        (Model::Bnn, SweepAxis::Clients) => (2..=16).step_by(2).map(f64::from).collect(),
        (Model::Regression, SweepAxis::PriorVariance) => REGRESSION_Q0_GRID.to_vec(),
        (_, SweepAxis::PriorVariance) => BNN_Q0_GRID.to_vec(),
        _ => class_prior_grid(),
    }
}

fn cfg_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn grid_axis(s: &Settings) -> Result<Option<(SweepAxis, Vec<f64>)>, ExperimentError> {
    let grids: Vec<(SweepAxis, &Grid)> = [
        (SweepAxis::Clients, s.agents_grid.as_ref()),
        (SweepAxis::PriorVariance, s.q0_grid.as_ref()),
        (SweepAxis::ClassPrior, s.p1_grid.as_ref()),
    ]
    .into_iter()
    .filter_map(|(a, g)| g.map(|g| (a, g)))
    .collect();
    match grids.as_slice() {
        [] => Ok(None),
        [(a, g)] => Ok(Some((*a, g.0.clone()))),
        _ => Err(cfg_err("only one of --M-grid, --q0-grid and --P1-grid may be given")),
    }
}

impl ExperimentConfig {
    /// Fills gaps in `s` with the defaults of `kind` and validates the result.
    pub fn resolve(kind: ExperimentKind, s: &Settings) -> Result<Self, ExperimentError> {
        let from_grid = grid_axis(s)?;
        let model = match kind {
            ExperimentKind::KlSweep => s.model.unwrap_or(match s.axis.or(from_grid.as_ref().map(|g| g.0)) {
                Some(SweepAxis::ClassPrior) => Model::Lda,
                _ => Model::Regression,
            }),
            ExperimentKind::Federated => Model::Bnn,
            k => {
                if s.model.is_some_and(|m| Some(m) != model_of(k)) {
                    return Err(cfg_err(format!("`model` only applies to kl-sweep, not {}", k.name())));
                }
                model_of(k).unwrap()
            }
        };

        let federated = kind == ExperimentKind::Federated;
        let default_axis = match kind {
            ExperimentKind::Lda => SweepAxis::ClassPrior,
            ExperimentKind::Bnn => SweepAxis::PriorVariance,
            ExperimentKind::Federated => SweepAxis::Round,
            ExperimentKind::Regression | ExperimentKind::KlSweep => SweepAxis::Clients,
        };
        let (axis, grid) = match from_grid {
            Some((a, g)) => {
                if let Some(x) = s.axis.filter(|&x| x != a) {
                    return Err(cfg_err(format!("axis {} contradicts the {} grid", x.name(), a.name())));
                }
                (a, g)
            }
            None => {
                let a = s.axis.unwrap_or(default_axis);
                let rounds = s.rounds.unwrap_or(18);
                let g = if a == SweepAxis::Round {
                    (0..=rounds).map(|t| t as f64).collect()
                } else {
                    default_grid(model, a)
                };
                (a, g)
            }
        };
        if federated != (axis == SweepAxis::Round) {
            return Err(cfg_err("the federated experiment sweeps rounds, and only it does"));
        }
        if axis == SweepAxis::ClassPrior && model != Model::Lda {
            return Err(cfg_err("a class-prior sweep needs the lda model"));
        }

        let bnn_like = model == Model::Bnn;
        let agents = s.agents.unwrap_or(if federated { 4 } else { 6 });
        let q0 = s.q0.unwrap_or(match model {
            _ if federated => 100.0,
            Model::Bnn => 4.0,
            _ => 1.0,
        });
        let p1 = s.p1.unwrap_or(0.1);
        let rounds = s.rounds.unwrap_or(18);
        let repetitions = s.repetitions.unwrap_or(match kind {
            ExperimentKind::Bnn => 10,
            ExperimentKind::Lda | ExperimentKind::Federated => 20,
            ExperimentKind::KlSweep if model == Model::Bnn => 10,
            _ => 50,
        });
        let mut generator = match model {
            _ if federated => GeneratorSpec::mixture(0),
            Model::Regression => GeneratorSpec::linear(0),
            Model::Lda => GeneratorSpec::two_class(0),
            Model::Bnn => GeneratorSpec::multiclass(0),
        };
        if let Some(n) = s.n_train {
            generator.n_train = n;
        }
        if let Some(n) = s.n_test {
            generator.n_test = n;
        }
        if let Some(v) = s.noise_std {
            generator.noise_std = v;
        }
        if s.mixture_components.is_some() {
            if !federated {
                return Err(cfg_err("mixture_components only applies to the federated experiment"));
            }
            generator.mixture_components = s.mixture_components;
        }
        let train = TrainConfig {
            epochs: s.epochs.unwrap_or(if federated { 20 } else { 100 }),
            learning_rate: s.learning_rate.unwrap_or(if federated { 0.01 } else { 0.05 }),
            rng_seed: 0,
            fisher_jitter: s.fisher_jitter.unwrap_or(TrainConfig::default().fisher_jitter),
            warm_start: false,
        };
        let cfg = ExperimentConfig {
            experiment: kind,
            model,
            axis,
            grid,
            agents,
            q0,
            p1,
            rounds,
            rules: s.rules.unwrap_or(RuleSet::Both),
            repetitions,
            base_seed: s.seed.unwrap_or(0),
            mean_prior_strength: s
                .mean_prior_strength
                .unwrap_or(crate::local::DEFAULT_MEAN_PRIOR_STRENGTH),
            prior_centre: s.prior_centre.unwrap_or_default(),
            hidden: s
                .hidden
                .clone()
                .unwrap_or_else(|| if federated { vec![32, 8] } else { vec![64] }),
            train,
            generator,
        };
        cfg.validate(bnn_like)?;
        Ok(cfg)
    }

    fn validate(&self, bnn_like: bool) -> Result<(), ExperimentError> {
        let wrap = |e: crate::FusionError| cfg_err(e.to_string());
        check_grid(&self.grid).map_err(wrap)?;
        if self.repetitions == 0 {
            return Err(cfg_err("repetitions must be at least 1"));
        }
        let mut agent_values = vec![self.agents as f64];
        if self.axis == SweepAxis::Clients {
            agent_values.extend(&self.grid);
        }
        for m in agent_values {
            if m < 1.0 || m.fract() != 0.0 {
                return Err(cfg_err(format!("agent counts must be positive integers, got {m}")));
            }
            if m as usize > self.generator.n_train {
                return Err(cfg_err(format!(
                    "{m} agents for {} training points",
                    self.generator.n_train
                )));
            }
        }
        let mut q0_values = vec![self.q0];
        if self.axis == SweepAxis::PriorVariance {
            q0_values.extend(&self.grid);
        }
        if q0_values.iter().any(|q| !(*q > 0.0) || !q.is_finite()) {
            return Err(cfg_err("prior variances must be positive and finite"));
        }
        let mut p1_values = vec![self.p1];
        if self.axis == SweepAxis::ClassPrior {
            p1_values.extend(&self.grid);
        }
        if p1_values.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(cfg_err("class priors must lie strictly between 0 and 1"));
        }
        if self.experiment == ExperimentKind::Federated && self.rounds == 0 {
            return Err(cfg_err("rounds must be at least 1"));
        }
        if !(self.mean_prior_strength > 0.0) {
            return Err(cfg_err("mean_prior_strength must be positive"));
        }
        self.generator.validate().map_err(wrap)?;
        if bnn_like {
            self.train.validate().map_err(wrap)?;
            self.mlp_spec().map_err(wrap)?;
        }
        Ok(())
    }

    pub fn mlp_spec(&self) -> crate::Result<MlpSpec> {
        let mut sizes = vec![self.generator.input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.generator.output_dim);
        MlpSpec::new(sizes, Activation::Tanh)
    }

    /// Stable TOML rendering, also the input of the fingerprint.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configuration is always representable")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_toml`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// File stem shared by all outputs of this configuration.
    pub fn stem(&self) -> String {
        match self.experiment {
            ExperimentKind::KlSweep => format!("kl_sweep_{}_{}", model_name(self.model), self.axis.name()),
            ExperimentKind::Federated => format!("federated_M{}", self.agents),
            k => format!("{}_{}", k.name(), self.axis.name()),
        }
    }
}

fn model_name(m: Model) -> &'static str {
    match m {
        Model::Regression => "regression",
        Model::Lda => "lda",
        Model::Bnn => "bnn",
    }
}

impl OutputOptions {
    /// Output directory from the settings, else the environment, else `results`.
    pub fn resolve(s: &Settings) -> Self {
        let dir = s
            .output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        Self {
            dir,
            plot_data: s.plot_data.unwrap_or(false),
        }
    }
}
