use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use bayes_fusion::divergence::SweepAxis;
use bayes_fusion::experiment::{
    run_experiment, summary, write_outputs, ConfigFile, ExperimentConfig, ExperimentError, ExperimentKind, Grid, Model,
    OutputOptions, RuleSet, Settings,
};
use bayes_fusion::federated::PriorCentre;
use bayes_fusion::selftest::run_selftest;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Fuse posteriors from agents sharing a prior and sweep the CIL/CIP gap.
#[derive(Parser)]
#[command(name = "bayes-fusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bayesian linear regression, test MSE of both rules.
    Regression(RunArgs),
    /// LDA class posteriors, test accuracy of both rules.
    Lda(RunArgs),
    /// Laplace-approximated MLP fused once.
    Bnn(RunArgs),
    /// Recursive rounds where the fused posterior becomes the next prior.
    Federated(RunArgs),
    /// KL divergence between the CIL and CIP posteriors along one axis.
    KlSweep(RunArgs),
    /// Check closed forms, oracles and monotonicity properties.
    Selftest,
}

fn parse_centre(s: &str) -> Result<PriorCentre, String> {
    match s {
        "origin" => Ok(PriorCentre::Origin),
        "shared_init" | "shared-init" => Ok(PriorCentre::SharedInit),
        other => Err(format!(
            "unknown prior centre `{other}` (expected origin or shared_init)"
        )),
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with a [common] section and one section per experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of agents.
    #[arg(long = "M")]
    agents: Option<usize>,
    /// Sweep the number of agents: start:stop:step or a,b,c.
    #[arg(long = "M-grid")]
    agents_grid: Option<Grid>,
    /// Prior variance.
    #[arg(long)]
    q0: Option<f64>,
    #[arg(long = "q0-grid")]
    q0_grid: Option<Grid>,
    /// Class prior of the first class assumed by every agent.
    #[arg(long = "P1")]
    p1: Option<f64>,
    #[arg(long = "P1-grid")]
    p1_grid: Option<Grid>,
    /// Sweep axis: M, q0 or P1 (kl-sweep).
    #[arg(long)]
    axis: Option<SweepAxis>,
    /// Local model behind a kl-sweep: regression, lda or bnn.
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    rounds: Option<usize>,
    /// CIL, CIP or both.
    #[arg(long)]
    rule: Option<RuleSet>,
    /// Monte Carlo repetitions per grid point.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $BAYES_FUSION_OUTPUT_DIR, else ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a wide table with one column per series.
    #[arg(long)]
    plot_data: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    /// Hidden layer sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Centre of the weight prior: origin or shared_init.
    #[arg(long, value_parser = parse_centre)]
    prior_centre: Option<PriorCentre>,
}

impl RunArgs {
    fn settings(&self) -> Settings {
        Settings {
            agents: self.agents,
            agents_grid: self.agents_grid.clone(),
            q0: self.q0,
            q0_grid: self.q0_grid.clone(),
            p1: self.p1,
            p1_grid: self.p1_grid.clone(),
            axis: self.axis,
            model: self.model,
            rounds: self.rounds,
            rules: self.rule,
            repetitions: self.reps,
            seed: self.seed,
            output_dir: self.out.clone(),
            plot_data: self.plot_data.then_some(true),
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            hidden: self.hidden.clone(),
            prior_centre: self.prior_centre,
            ..Settings::default()
        }
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<(), ExperimentError> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
            ConfigFile::parse(&text)?
        }
        None => ConfigFile::default(),
    };
    let settings = file.layered(kind, &args.settings());
    let cfg = ExperimentConfig::resolve(kind, &settings)?;
    let opts = OutputOptions::resolve(&settings);
    let outcome = run_experiment(&cfg)?;
    let written = write_outputs(&outcome, &opts)?;
    // A closed stdout (e.g. piped into `head`) is not an error.
    let mut out = io::stdout().lock();
    let _ = write!(out, "{}", summary(&outcome));
    for path in &written {
        let _ = writeln!(out, "wrote {}", path.display());
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(ExperimentError::Failed(format!(
            "{} of {} evaluations failed",
            outcome.failures.len(),
            cfg.grid.len() * cfg.repetitions
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let (kind, args) = match &cli.command {
        Command::Selftest => {
            let results = run_selftest();
            let mut out = io::stdout().lock();
            for r in &results {
                let _ = writeln!(
                    out,
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            return if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            };
        }
        Command::Regression(a) => (ExperimentKind::Regression, a),
        Command::Lda(a) => (ExperimentKind::Lda, a),
        Command::Bnn(a) => (ExperimentKind::Bnn, a),
        Command::Federated(a) => (ExperimentKind::Federated, a),
        Command::KlSweep(a) => (ExperimentKind::KlSweep, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
