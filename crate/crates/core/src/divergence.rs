//! Divergence between the CIL and CIP fused posteriors.
//!
//! With `p(θ|D)` the exact posterior and `p₀` the shared prior, the CIP
//! result is `p(θ|D) p₀(θ)^{M−1}` renormalized, so
//!
//! ```text
//! KL(CIL ‖ CIP) = log S_{M−1} + (M−1) H(p(θ|D), p₀),   S_k = ∫ p(θ|D) p₀(θ)^k dθ
//! ```
//!
//! `S_k` has a closed form for Gaussians and is log-convex in `k`, which is
//! what makes the divergence grow with the number of agents.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, FusionError, Result};
use crate::fusion::{fuse_cil, fuse_cip};
use crate::gaussian::{kl_divergence, trace_inv_product, GaussianBelief, LN_2PI};
use crate::seed::derive_seed;
use crate::stats::mean_stderr;

/// `KL(fuse_cil ‖ fuse_cip)`.
pub fn kl_cil_cip(prior: &GaussianBelief, locals: &[GaussianBelief]) -> Result<f64> {
    if locals.len() == 1 {
        check_dim(prior.dim(), locals[0].dim())?;
        return Ok(0.0);
    }
    let cil = fuse_cil(prior, locals)?;
    let cip = fuse_cip(locals)?;
    kl_divergence(&cil.fused, &cip.fused)
}

struct ScalingTerms {
    d: f64,
    log_det_c0: f64,
    sigma: DMatrix<f64>,
    c0: DMatrix<f64>,
    delta: nalgebra::DVector<f64>,
}

impl ScalingTerms {
    fn new(agents: f64, prior: &GaussianBelief, posterior: &GaussianBelief) -> Result<Self> {
        check_dim(prior.dim(), posterior.dim())?;
        if !(agents >= 0.0) || !agents.is_finite() {
            return Err(FusionError::InvalidArgument(format!(
                "agent count must be a finite nonnegative real, got {agents}"
            )));
        }
        Ok(Self {
            d: prior.dim() as f64,
            log_det_c0: -prior.log_det_precision(),
            sigma: posterior.covariance(),
            c0: prior.covariance(),
            delta: prior.mean() - posterior.mean(),
        })
    }

    /// Cholesky factor of `C₀ + M Σ`.
    fn b_factor(&self, agents: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let b = &self.c0 + &self.sigma * agents;
        let b = (&b + b.transpose()) * 0.5;
        b.cholesky()
            .ok_or_else(|| FusionError::NotPositiveDefinite("C0 + M * posterior covariance".into()))
    }
}

/// `log S_M = log ∫ p(θ|D) p₀(θ)^M dθ` for real `M ≥ 0`, with `S_0 = 1`.
pub fn log_s(agents: f64, prior: &GaussianBelief, posterior: &GaussianBelief) -> Result<f64> {
    let t = ScalingTerms::new(agents, prior, posterior)?;
    if agents == 0.0 {
        return Ok(0.0);
    }
    let b = t.b_factor(agents)?;
    let log_det_b = 2.0 * b.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = agents * t.delta.dot(&b.solve(&t.delta));
    Ok(-0.5 * agents * t.d * LN_2PI - 0.5 * (agents - 1.0) * t.log_det_c0 - 0.5 * log_det_b - 0.5 * quad)
}

/// First and second derivatives of [`log_s`] with respect to `M`.
///
/// With `B = C₀ + MΣ` and `δ = θ₀ − μ`:
/// `f′ = −(d/2)log 2π − ½log|C₀| − ½tr(B⁻¹Σ) − ½δᵀB⁻¹C₀B⁻¹δ` and
/// `f″ = ½tr((B⁻¹Σ)²) + δᵀB⁻¹ΣB⁻¹C₀B⁻¹δ`.
pub fn log_s_derivatives(agents: f64, prior: &GaussianBelief, posterior: &GaussianBelief) -> Result<(f64, f64)> {
    let t = ScalingTerms::new(agents, prior, posterior)?;
    let b = t.b_factor(agents)?;
    let b_inv_sigma = b.solve(&t.sigma);
    let u = b.solve(&t.delta);
    let c0u = &t.c0 * &u;
    let first = -0.5 * t.d * LN_2PI - 0.5 * t.log_det_c0 - 0.5 * b_inv_sigma.trace() - 0.5 * u.dot(&c0u);
    let second_trace = 0.5 * (&b_inv_sigma * &b_inv_sigma).trace();
    let second_quad = u.dot(&(&t.sigma * b.solve(&c0u)));
    Ok((first, second_trace + second_quad))
}

/// `H = −E_posterior[log prior]`.
pub fn cross_entropy_posterior_prior(posterior: &GaussianBelief, prior: &GaussianBelief) -> Result<f64> {
    check_dim(prior.dim(), posterior.dim())?;
    let d = prior.dim() as f64;
    let diff = posterior.mean() - prior.mean();
    let quad = diff.dot(&prior.precision().mul_vec(&diff));
    let trace = trace_inv_product(&posterior.factor(), &prior.factor());
    Ok(0.5 * (d * LN_2PI - prior.log_det_precision() + trace + quad))
}

/// Splits `KL(CIL ‖ CIP)` into `(log(p_M(D)/p(D)), (M−1)·H)`.
///
/// The first term is `log S_{M−1}` evaluated at the CIL posterior and depends
/// on the partition only through `M`.
pub fn kl_decomposition(prior: &GaussianBelief, locals: &[GaussianBelief]) -> Result<(f64, f64)> {
    let posterior = fuse_cil(prior, locals)?.fused;
    kl_decomposition_from_posterior(locals.len(), prior, &posterior)
}

/// [`kl_decomposition`] given the pooled posterior directly.
pub fn kl_decomposition_from_posterior(
    agents: usize,
    prior: &GaussianBelief,
    posterior: &GaussianBelief,
) -> Result<(f64, f64)> {
    if agents == 0 {
        return Err(FusionError::EmptyInput("at least one agent is required"));
    }
    if agents == 1 {
        check_dim(prior.dim(), posterior.dim())?;
        return Ok((0.0, 0.0));
    }
    let excess = (agents - 1) as f64;
    let log_ratio = log_s(excess, prior, posterior)?;
    let cross = excess * cross_entropy_posterior_prior(posterior, prior)?;
    Ok((log_ratio, cross))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Clients,
    PriorVariance,
    ClassPrior,
    Round,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Clients => "M",
            SweepAxis::PriorVariance => "q0",
            SweepAxis::ClassPrior => "P1",
            SweepAxis::Round => "round",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "M" | "m" | "clients" => Ok(SweepAxis::Clients),
            "q0" | "prior_variance" => Ok(SweepAxis::PriorVariance),
            "P1" | "p1" | "class_prior" => Ok(SweepAxis::ClassPrior),
            "round" | "t" => Ok(SweepAxis::Round),
            other => Err(format!("unknown sweep axis `{other}` (expected M, q0, P1 or round)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub repetition: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlSweep {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    /// Mean KL per grid point over the successful repetitions (NaN if none).
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Raw per-repetition values, `None` where the evaluation failed.
    pub samples: Vec<Vec<Option<f64>>>,
    pub failures: Vec<PointFailure>,
    pub config_fingerprint: String,
}

impl KlSweep {
    pub fn completed(&self, index: usize) -> usize {
        self.samples[index].iter().flatten().count()
    }
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(FusionError::EmptyInput("sweep grid"));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FusionError::InvalidArgument(
            "sweep grid must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Evaluates `eval(axis_value, point_index, repetition_seed)` over the grid.
///
/// Repetition `r` receives the same seed at every grid point, so each
/// repetition traces a curve over one realization of the data. Points and
/// repetitions run in parallel; results do not depend on scheduling.
/// Individual failures are recorded and excluded from the averages.
pub fn sweep<F>(
    axis: SweepAxis,
    grid: &[f64],
    repetitions: usize,
    base_seed: u64,
    config_fingerprint: String,
    eval: F,
) -> Result<KlSweep>
where
    F: Fn(f64, usize, u64) -> Result<f64> + Sync,
{
    check_grid(grid)?;
    if repetitions == 0 {
        return Err(FusionError::InvalidArgument("repetitions must be at least 1".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|i| (0..repetitions).map(move |r| (i, r)))
        .collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let value = eval(grid[i], i, derive_seed(base_seed, &[r as u64]))?;
            if value.is_finite() {
                Ok(value)
            } else {
                Err(FusionError::InvalidArgument(format!("non-finite KL {value}")))
            }
        })
        .collect();

    let mut samples = vec![Vec::with_capacity(repetitions); grid.len()];
    let mut failures = Vec::new();
    for (&(i, r), res) in jobs.iter().zip(results) {
        match res {
            Ok(v) => samples[i].push(Some(v)),
            Err(e) => {
                samples[i].push(None);
                failures.push(PointFailure {
                    index: i,
                    repetition: r,
                    message: e.to_string(),
                });
            }
        }
    }
    let (values, stderr) = samples
        .iter()
        .map(|s| mean_stderr(&s.iter().flatten().copied().collect::<Vec<_>>()))
        .unzip();
    Ok(KlSweep {
        axis,
        grid: grid.to_vec(),
        values,
        stderr,
        samples,
        failures,
        config_fingerprint,
    })
}
