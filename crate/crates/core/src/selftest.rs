//! Built-in consistency checks: closed forms against quadrature and finite
//! differences, CIL against the centralized posterior, and the monotonicity
//! of the CIL/CIP divergence in the number of agents and the prior variance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::LabeledShard;
use crate::datagen::{gen_linear, GeneratorSpec};
use crate::discrete::DiscreteBelief;
use crate::divergence::{cross_entropy_posterior_prior, kl_cil_cip, kl_decomposition, log_s, log_s_derivatives};
use crate::error::Result;
use crate::federated::shard_dataset;
use crate::fusion::{fuse_cil, fuse_cip, fuse_discrete_cil, fuse_discrete_cip};
use crate::gaussian::{divide, kl_divergence, power, product, GaussianBelief};
use crate::local::{linear_posterior, nll_and_gradient, Activation, IdentityMap, MlpSpec, ObservationNoise};
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn density(mean: f64, var: f64) -> impl Fn(f64) -> f64 {
    move |x| (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn scalar(mean: f64, var: f64) -> GaussianBelief {
    GaussianBelief::isotropic(DVector::from_element(1, mean), var).expect("positive variance")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn quadrature_oracles() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (mp, vp, mq, vq) in [(0.0, 1.0, 0.0, 2.0), (1.0, 1.0, 0.0, 1.0), (0.3, 0.5, -1.0, 3.0)] {
        let (p, q) = (density(mp, vp), density(mq, vq));
        let quad = simpson(|x| p(x) * (p(x) / q(x)).ln(), -30.0, 30.0, 20_000);
        worst = worst.max((kl_divergence(&scalar(mp, vp), &scalar(mq, vq))? - quad).abs());
    }
    for (m0, v0, mu, vpost, agents) in [
        (0.0, 1.0, 0.0, 1.0, 1.0),
        (0.5, 2.0, -0.4, 0.3, 3.0),
        (0.0, 1.0, 1.0, 0.5, 2.5),
    ] {
        let (prior, post) = (density(m0, v0), density(mu, vpost));
        let quad = simpson(|x| post(x) * prior(x).powf(agents), -30.0, 30.0, 20_000).ln();
        let closed = log_s(agents, &scalar(m0, v0), &scalar(mu, vpost))?;
        worst = worst.max((closed - quad).abs() / quad.abs().max(1.0));
        let h = simpson(|x| -post(x) * prior(x).ln(), -30.0, 30.0, 20_000);
        worst = worst.max((cross_entropy_posterior_prior(&scalar(mu, vpost), &scalar(m0, v0))? - h).abs());
    }
    Ok((worst <= 1e-6, format!("largest deviation {worst:.2e}")))
}

fn regression_locals(
    agents: usize,
    q0: f64,
    seed: u64,
) -> Result<(GaussianBelief, Vec<GaussianBelief>, GaussianBelief)> {
    let spec = GeneratorSpec::linear(seed);
    let data = gen_linear(&spec)?;
    let prior = GaussianBelief::isotropic(DVector::zeros(spec.input_dim), q0)?;
    let noise = ObservationNoise::from_std(1, spec.noise_std)?;
    let fit = |s: &LabeledShard| linear_posterior(&prior, s, &noise, &IdentityMap);
    let locals = shard_dataset(&data.train, agents, seed)?
        .iter()
        .map(fit)
        .collect::<Result<Vec<_>>>()?;
    let central = fit(&LabeledShard::new(0, data.train))?;
    Ok((prior, locals, central))
}

fn cil_exactness() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for agents in [1, 2, 6, 26, 50] {
        let (prior, locals, central) = regression_locals(agents, 1.0, 11)?;
        let fused = fuse_cil(&prior, &locals)?.fused;
        worst = worst.max((fused.mean() - central.mean()).amax());
        let rel = (fused.precision().to_dense() - central.precision().to_dense()).amax()
            / central.precision().to_dense().amax();
        worst = worst.max(rel);
    }
    Ok((worst <= 1e-8, format!("largest deviation {worst:.2e}")))
}

fn cip_partition_invariance() -> Result<(bool, String)> {
    let (_, a, _) = regression_locals(6, 1.0, 3)?;
    let spec = GeneratorSpec::linear(3);
    let data = gen_linear(&spec)?;
    let prior = GaussianBelief::isotropic(DVector::zeros(spec.input_dim), 1.0)?;
    let noise = ObservationNoise::from_std(1, spec.noise_std)?;
    let b = shard_dataset(&data.train, 6, 99)?
        .iter()
        .map(|s| linear_posterior(&prior, s, &noise, &IdentityMap))
        .collect::<Result<Vec<_>>>()?;
    let (fa, fb) = (fuse_cip(&a)?.fused, fuse_cip(&b)?.fused);
    let dev = (fa.mean() - fb.mean())
        .amax()
        .max((fa.precision().to_dense() - fb.precision().to_dense()).amax() / fa.precision().to_dense().amax());
    Ok((dev <= 1e-10, format!("deviation {dev:.2e}")))
}

fn kl_monotone_in_agents() -> Result<(bool, String)> {
    let mut prev = 0.0;
    for agents in 1..=50 {
        let (prior, locals, _) = regression_locals(agents, 1.0, 5)?;
        let kl = kl_cil_cip(&prior, &locals)?;
        if agents > 1 && kl <= prev {
            return Ok((false, format!("KL drops from {prev:.4} to {kl:.4} at M={agents}")));
        }
        prev = kl;
    }
    Ok((true, format!("KL at M=50: {prev:.2}")))
}

fn kl_vanishes_with_flat_prior() -> Result<(bool, String)> {
    let mut prev = f64::INFINITY;
    for q0 in [1.0, 2.0, 3.0, 4.0, 9.0, 16.0, 25.0, 36.0, 64.0, 81.0, 1e6] {
        let (prior, locals, _) = regression_locals(6, q0, 5)?;
        let kl = kl_cil_cip(&prior, &locals)?;
        if kl >= prev {
            return Ok((false, format!("KL rises to {kl:.3e} at q0={q0}")));
        }
        prev = kl;
    }
    Ok((prev < 1e-6, format!("KL at q0=1e6: {prev:.2e}")))
}

fn random_spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * rng.random_range(0.05..1.0)
}

fn random_belief<R: Rng>(rng: &mut R, d: usize) -> Result<GaussianBelief> {
    let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    GaussianBelief::dense(mean, random_spd(rng, d))
}

fn random_trials() -> Result<(bool, String)> {
    let mut rng = rng_for(0x5e1f, &[]);
    let (mut min_kl, mut min_second, mut worst_decomp, mut worst_round_trip) =
        (f64::INFINITY, f64::INFINITY, 0.0f64, 0.0f64);
    for trial in 0..1000 {
        let d = [1, 2, 6][trial % 3];
        let (p, q) = (random_belief(&mut rng, d)?, random_belief(&mut rng, d)?);
        min_kl = min_kl.min(kl_divergence(&p, &q)?);
        let agents = rng.random_range(0.1..20.0);
        min_second = min_second.min(log_s_derivatives(agents, &p, &q)?.1);

        let locals: Vec<GaussianBelief> = (0..rng.random_range(2..5))
            .map(|_| {
                let extra = random_spd(&mut rng, d);
                GaussianBelief::dense(
                    DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)),
                    p.precision().to_dense() + extra,
                )
            })
            .collect::<Result<_>>()?;
        let direct = kl_cil_cip(&p, &locals)?;
        let (ratio, cross) = kl_decomposition(&p, &locals)?;
        worst_decomp = worst_decomp.max((ratio + cross - direct).abs() / direct.max(1.0));

        let back = divide(&product(&[p.clone(), q.clone()])?.into_belief(), &power(&q, 1.0)?)?;
        worst_round_trip = worst_round_trip.max((back.mean() - p.mean()).amax());
    }
    let ok = min_kl >= 0.0 && min_second >= -1e-12 && worst_decomp <= 1e-8 && worst_round_trip <= 1e-10;
    Ok((
        ok,
        format!(
            "min KL {min_kl:.2e}, min second derivative {min_second:.2e}, decomposition gap {worst_decomp:.2e}, round trip {worst_round_trip:.2e}"
        ),
    ))
}

fn mlp_gradient() -> Result<(bool, String)> {
    let spec = MlpSpec::new(vec![3, 5, 4, 3], Activation::Tanh)?;
    let mut rng = rng_for(0x9d, &[]);
    let n = 12;
    let data = crate::data::Dataset::classification(
        DMatrix::from_fn(n, 3, |_, _| rng.random_range(-2.0..2.0)),
        (0..n).map(|i| i % 3).collect(),
        3,
    )?;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let theta = spec.init_params(&mut rng) * 2.0;
        let (_, grad) = nll_and_gradient(&spec, &theta, &data)?;
        for k in 0..theta.len() {
            let step = 1e-5;
            let mut hi = theta.clone();
            hi[k] += step;
            let mut lo = theta.clone();
            lo[k] -= step;
            let fd = (nll_and_gradient(&spec, &hi, &data)?.0 - nll_and_gradient(&spec, &lo, &data)?.0) / (2.0 * step);
            worst = worst.max((fd - grad[k]).abs() / grad[k].abs().max(1e-3));
        }
    }
    Ok((worst <= 1e-4, format!("largest relative error {worst:.2e}")))
}

fn discrete_examples() -> Result<(bool, String)> {
    let prior = DiscreteBelief::from_probs(&[0.6, 0.4])?;
    let locals = [
        DiscreteBelief::from_probs(&[0.7, 0.3])?,
        DiscreteBelief::from_probs(&[0.8, 0.2])?,
    ];
    let cil = fuse_discrete_cil(&prior, &locals)?.probs();
    let cip = fuse_discrete_cip(&locals)?.probs();
    let ok = close(cil[0], 0.86154, 1e-5) && close(cip[0], 0.90323, 1e-5);
    Ok((ok, format!("CIL {:.5}, CIP {:.5}", cil[0], cip[0])))
}

type Check = fn() -> Result<(bool, String)>;

/// Runs every check; individual errors count as failures.
pub fn run_selftest() -> Vec<CheckResult> {
    let checks: [(&'static str, Check); 8] = [
        ("closed forms agree with quadrature", quadrature_oracles),
        ("CIL equals the centralized posterior", cil_exactness),
        ("CIP ignores how the data is split", cip_partition_invariance),
        ("KL grows with the number of agents", kl_monotone_in_agents),
        ("KL vanishes as the prior flattens", kl_vanishes_with_flat_prior),
        ("randomized Gaussian identities", random_trials),
        ("MLP gradient matches finite differences", mlp_gradient),
        ("class-posterior fusion examples", discrete_examples),
    ];
    checks
        .iter()
        .map(|&(name, check)| match check() {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}
