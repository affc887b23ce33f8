//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! The binary exits 0 even when a criterion fails so that the remaining test
//! targets still run; set `ACCEPTANCE_STRICT=1` to turn failures into a
//! nonzero exit status, and `ACCEPTANCE_ONLY=1,5` to run a subset.

mod common;

use std::time::{Duration, Instant};

use bayes_fusion::data::LabeledShard;
use bayes_fusion::datagen::{gen_linear, GeneratorSpec};
use bayes_fusion::divergence::{
    kl_cil_cip, kl_decomposition, kl_decomposition_from_posterior, log_s, log_s_derivatives, SweepAxis,
};
use bayes_fusion::experiment::{run_experiment, ExperimentConfig, ExperimentKind, Grid, Model, Row, Settings};
use bayes_fusion::federated::shard_dataset;
use bayes_fusion::gaussian::{divide, kl_divergence, power, product};
use bayes_fusion::local::{linear_posterior, nll_and_gradient, Activation, IdentityMap, MlpSpec, ObservationNoise};
use bayes_fusion::seed::rng_for;
use bayes_fusion::{fuse_cil, fuse_cip, GaussianBelief};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

type Criterion = (u32, &'static str, Duration, fn() -> Verdict);

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn run(kind: ExperimentKind, settings: Settings) -> Vec<Row> {
    let cfg = ExperimentConfig::resolve(kind, &settings).expect("valid configuration");
    let out = run_experiment(&cfg).expect("experiment runs");
    assert!(out.failures.is_empty(), "failed evaluations: {:?}", out.failures);
    out.rows
}

fn series<'a>(rows: &'a [Row], rule: &str, metric: &str) -> Vec<&'a Row> {
    rows.iter().filter(|r| r.rule == rule && r.metric == metric).collect()
}

fn linear_setup(seed: u64, q0: f64) -> (GaussianBelief, bayes_fusion::data::Dataset, ObservationNoise) {
    let spec = GeneratorSpec::linear(seed);
    let data = gen_linear(&spec).unwrap();
    let prior = GaussianBelief::isotropic(DVector::zeros(data.train.feature_dim()), q0).unwrap();
    (
        prior,
        data.train,
        ObservationNoise::from_std(1, spec.noise_std).unwrap(),
    )
}

fn locals_for(prior: &GaussianBelief, shards: &[LabeledShard], noise: &ObservationNoise) -> Vec<GaussianBelief> {
    shards
        .iter()
        .map(|s| linear_posterior(prior, s, noise, &IdentityMap).unwrap())
        .collect()
}

fn criterion_1() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let (prior, train, noise) = linear_setup(seed, 1.0);
        let central = linear_posterior(&prior, &LabeledShard::new(0, train.clone()), &noise, &IdentityMap).unwrap();
        for agents in [1, 2, 6, 26, 50] {
            let shards = shard_dataset(&train, agents, seed + 100).unwrap();
            let fused = fuse_cil(&prior, &locals_for(&prior, &shards, &noise)).unwrap().fused;
            worst = worst.max((fused.mean() - central.mean()).amax());
            worst = worst.max((fused.covariance() - central.covariance()).amax());
        }
    }
    verdict(
        worst <= 1e-8,
        format!("max deviation from the pooled posterior {worst:.2e}"),
    )
}

fn criterion_2() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for q0 in [1.0, 3.0] {
        let cfg = ExperimentConfig::resolve(
            ExperimentKind::KlSweep,
            &Settings {
                model: Some(Model::Regression),
                axis: Some(SweepAxis::Clients),
                agents_grid: Some(Grid((2..=50).map(f64::from).collect())),
                q0: Some(q0),
                repetitions: Some(20),
                ..Default::default()
            },
        )
        .unwrap();
        let out = run_experiment(&cfg).unwrap();
        let kl = out.kl_sweep.unwrap();
        let mut bad_seeds = 0;
        for r in 0..20 {
            let path: Vec<f64> = kl.samples.iter().map(|s| s[r].unwrap()).collect();
            if !path.windows(2).all(|w| w[1] > w[0]) {
                bad_seeds += 1;
            }
        }
        ok &= bad_seeds == 0 && kl.failures.is_empty();
        notes.push(format!("q0={q0}: {bad_seeds}/20 seeds non-monotone"));
        if q0 == 1.0 {
            let at_26 = kl.values[24];
            ok &= at_26 > 125.0 / 3.0 && at_26 < 125.0 * 3.0;
            notes.push(format!("KL(M=26, q0=1)={at_26:.1} (reference 125)"));
        }
    }
    verdict(ok, notes.join("; "))
}

fn criterion_3() -> Verdict {
    let q0s = vec![1.0, 2.0, 3.0, 4.0, 9.0, 16.0, 25.0, 36.0, 64.0, 81.0];
    let rows = run(
        ExperimentKind::KlSweep,
        Settings {
            axis: Some(SweepAxis::PriorVariance),
            q0_grid: Some(Grid(q0s.clone())),
            agents: Some(6),
            repetitions: Some(20),
            ..Default::default()
        },
    );
    let kl: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let decreasing = kl.windows(2).all(|w| w[1] < w[0]);
    let ratio = kl[kl.len() - 1] / kl[0];
    let huge = run(
        ExperimentKind::KlSweep,
        Settings {
            axis: Some(SweepAxis::PriorVariance),
            q0_grid: Some(Grid(vec![1e6])),
            agents: Some(6),
            repetitions: Some(20),
            ..Default::default()
        },
    )[0]
    .mean;
    verdict(
        decreasing && ratio < 1e-3 && huge < 1e-6,
        format!("decreasing={decreasing}, KL(81)/KL(1)={ratio:.2e}, KL(1e6)={huge:.2e}"),
    )
}

fn criterion_4() -> Verdict {
    let rows = run(
        ExperimentKind::Regression,
        Settings {
            agents_grid: Some(Grid((0..13).map(|k| (2 + 4 * k) as f64).collect())),
            q0: Some(1.0),
            repetitions: Some(50),
            ..Default::default()
        },
    );
    let cil: Vec<f64> = series(&rows, "CIL", "test_mse").iter().map(|r| r.mean).collect();
    let cip: Vec<f64> = series(&rows, "CIP", "test_mse").iter().map(|r| r.mean).collect();
    let excess = cip[cip.len() - 1] / cil[cil.len() - 1] - 1.0;
    let (lo, hi) = cil.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = hi / lo - 1.0;
    verdict(
        excess >= 0.15 && spread < 0.05,
        format!(
            "M=50: CIP {:.2} vs CIL {:.2} (+{:.1}%), CIL spread {:.2}%",
            cip[cip.len() - 1],
            cil[cil.len() - 1],
            100.0 * excess,
            100.0 * spread
        ),
    )
}

fn criterion_5() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let (prior, train, noise) = linear_setup(seed, 1.0);
        for agents in [2, 6, 26, 50] {
            let a = fuse_cip(&locals_for(&prior, &shard_dataset(&train, agents, 1).unwrap(), &noise))
                .unwrap()
                .fused;
            let b = fuse_cip(&locals_for(&prior, &shard_dataset(&train, agents, 2).unwrap(), &noise))
                .unwrap()
                .fused;
            worst = worst.max((a.mean() - b.mean()).amax());
            let (pa, pb) = (a.precision().to_dense(), b.precision().to_dense());
            worst = worst.max((&pa - &pb).amax() / pb.amax());
        }
    }
    verdict(worst <= 1e-10, format!("max difference between partitions {worst:.2e}"))
}

fn criterion_6() -> Verdict {
    let grid = run(
        ExperimentKind::KlSweep,
        Settings {
            model: Some(Model::Lda),
            axis: Some(SweepAxis::ClassPrior),
            agents: Some(6),
            repetitions: Some(20),
            ..Default::default()
        },
    );
    let best = grid.iter().min_by(|a, b| a.mean.total_cmp(&b.mean)).unwrap().axis_value;
    // 1/2 is not a multiple of 1/41; the two neighbours are equally close.
    let argmin_ok = (best - 20.0 / 41.0).abs() < 1e-12 || (best - 21.0 / 41.0).abs() < 1e-12;
    let by_m = run(
        ExperimentKind::KlSweep,
        Settings {
            model: Some(Model::Lda),
            axis: Some(SweepAxis::Clients),
            agents_grid: Some(Grid((0..13).map(|k| (2 + 4 * k) as f64).collect())),
            p1: Some(0.1),
            repetitions: Some(20),
            ..Default::default()
        },
    );
    let increasing = by_m.windows(2).all(|w| w[1].mean > w[0].mean);
    let acc = run(
        ExperimentKind::Lda,
        Settings {
            agents: Some(24),
            p1_grid: Some(Grid(vec![0.1])),
            repetitions: Some(20),
            ..Default::default()
        },
    );
    let cil = series(&acc, "CIL", "test_accuracy")[0].mean;
    let cip = series(&acc, "CIP", "test_accuracy")[0].mean;
    verdict(
        argmin_ok && increasing && cil - cip >= 0.03,
        format!("argmin P1={best:.4}, increasing in M={increasing}, M=24 P1=0.1 accuracy CIL {cil:.3} vs CIP {cip:.3}"),
    )
}

fn criterion_7() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for agents in [6, 16] {
        let rows = run(
            ExperimentKind::Bnn,
            Settings {
                agents: Some(agents),
                repetitions: Some(10),
                ..Default::default()
            },
        );
        let cil = series(&rows, "CIL", "accuracy_ratio");
        let cip = series(&rows, "CIP", "accuracy_ratio");
        let ordered = cil.iter().zip(&cip).all(|(a, b)| a.mean >= b.mean);
        let close = cil
            .iter()
            .zip(&cip)
            .filter(|(a, _)| a.axis_value >= 25.0)
            .all(|(a, b)| (a.mean - b.mean).abs() <= 0.02);
        ok &= ordered && close;
        let gaps: Vec<String> = cil
            .iter()
            .zip(&cip)
            .map(|(a, b)| format!("{:+.3}", a.mean - b.mean))
            .collect();
        notes.push(format!("M={agents}: CIL-CIP ratio gaps [{}]", gaps.join(" ")));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_8() -> Verdict {
    let runs: Vec<(usize, Vec<Row>)> = [4, 16]
        .into_iter()
        .map(|agents| {
            (
                agents,
                run(
                    ExperimentKind::Federated,
                    Settings {
                        agents: Some(agents),
                        repetitions: Some(20),
                        ..Default::default()
                    },
                ),
            )
        })
        .collect();
    let combined = |a: &Row, b: &Row| 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let mut monotone_ok = true;
    let mut dominance_ok = true;
    let mut variance_ok = true;
    let mut notes = Vec::new();
    for rule in ["CIL", "CIP"] {
        for (agents, rows) in &runs {
            let acc = series(rows, rule, "test_accuracy");
            let drops: Vec<usize> = acc
                .windows(2)
                .filter(|w| w[1].axis_value > 2.0 && w[1].mean < w[0].mean - combined(w[0], w[1]))
                .map(|w| w[1].axis_value as usize)
                .collect();
            monotone_ok &= drops.is_empty();
            let var = series(rows, rule, "mean_param_variance");
            let orders = (var[10].mean / var[0].mean).log10();
            variance_ok &= orders <= -10.0;
            notes.push(format!(
                "{rule} M={agents}: acc {:.3}->{:.3}, drops at {drops:?}, log10 var ratio at t=10 {orders:.1}",
                acc[0].mean,
                acc[acc.len() - 1].mean
            ));
        }
        let (a4, a16) = (
            series(&runs[0].1, rule, "test_accuracy"),
            series(&runs[1].1, rule, "test_accuracy"),
        );
        let behind: Vec<usize> = a4
            .iter()
            .zip(&a16)
            .filter(|(x, y)| x.axis_value >= 1.0 && x.mean < y.mean - combined(x, y))
            .map(|(x, _)| x.axis_value as usize)
            .collect();
        dominance_ok &= behind.is_empty();
        notes.push(format!("{rule}: M=4 below M=16 at rounds {behind:?}"));
    }
    verdict(
        monotone_ok && dominance_ok && variance_ok,
        format!(
            "non-decreasing={monotone_ok}, M=4 dominates={dominance_ok}, variance -10 orders={variance_ok}; {}",
            notes.join("; ")
        ),
    )
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * rng.random_range(0.05..1.0)
}

fn random_belief(rng: &mut ChaCha8Rng, d: usize) -> GaussianBelief {
    GaussianBelief::dense(
        DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0)),
        random_spd(rng, d),
    )
    .unwrap()
}

fn criterion_9() -> Verdict {
    let mut rng = rng_for(99, &[]);
    let mut fails = Vec::new();

    let min_kl = (0..1000)
        .map(|_| {
            let d = rng.random_range(1..7);
            kl_divergence(&random_belief(&mut rng, d), &random_belief(&mut rng, d)).unwrap()
        })
        .fold(f64::MAX, f64::min);
    if min_kl < 0.0 {
        fails.push(format!("negative KL {min_kl:e}"));
    }

    let min_second = (0..1000)
        .map(|_| {
            let d = rng.random_range(1..7);
            let agents = rng.random_range(0.0..60.0);
            log_s_derivatives(agents, &random_belief(&mut rng, d), &random_belief(&mut rng, d))
                .unwrap()
                .1
        })
        .fold(f64::MAX, f64::min);
    if min_second < -1e-12 {
        fails.push(format!("log_s second derivative {min_second:e}"));
    }

    let mut worst_decomp: f64 = 0.0;
    for seed in 0..200 {
        let (prior, train, noise) = linear_setup(seed, rng.random_range(0.5..10.0));
        let agents = rng.random_range(1..30);
        let locals = locals_for(&prior, &shard_dataset(&train, agents, seed).unwrap(), &noise);
        let (a, b) = kl_decomposition(&prior, &locals).unwrap();
        let central = linear_posterior(&prior, &LabeledShard::new(0, train), &noise, &IdentityMap).unwrap();
        let (c, e) = kl_decomposition_from_posterior(agents, &prior, &central).unwrap();
        let direct = kl_cil_cip(&prior, &locals).unwrap();
        let scale = direct.abs().max(1.0);
        worst_decomp = worst_decomp
            .max(((a + b) - (c + e)).abs() / scale)
            .max(((a + b) - direct).abs() / scale);
    }
    if worst_decomp > 1e-8 {
        fails.push(format!("decomposition paths differ by {worst_decomp:e}"));
    }

    let spec = MlpSpec::new(vec![5, 8, 6, 3], Activation::Tanh).unwrap();
    let data = {
        let x = DMatrix::from_fn(12, 5, |_, _| rng.random_range(-1.0..1.0));
        let labels = (0..12).map(|i| i % 3).collect();
        bayes_fusion::data::Dataset::classification(x, labels, 3).unwrap()
    };
    let mut worst_grad: f64 = 0.0;
    for _ in 0..5 {
        let theta = spec.init_params(&mut rng);
        let (_, grad) = nll_and_gradient(&spec, &theta, &data).unwrap();
        for k in 0..theta.len() {
            let h = 1e-5;
            let mut up = theta.clone();
            up[k] += h;
            let mut down = theta.clone();
            down[k] -= h;
            let fd = (nll_and_gradient(&spec, &up, &data).unwrap().0
                - nll_and_gradient(&spec, &down, &data).unwrap().0)
                / (2.0 * h);
            worst_grad = worst_grad.max((grad[k] - fd).abs() / fd.abs().max(1e-2));
        }
    }
    if worst_grad > 1e-4 {
        fails.push(format!("gradient relative error {worst_grad:e}"));
    }

    let mut worst_trip: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(1..6);
        let (a, b) = (random_belief(&mut rng, d), random_belief(&mut rng, d));
        let back = divide(
            product(&[a.clone(), b.clone()]).unwrap().belief(),
            &power(&b, 1.0).unwrap(),
        )
        .unwrap();
        let p = a.precision().to_dense();
        worst_trip = worst_trip
            .max((back.precision().to_dense() - &p).amax() / p.amax())
            .max((back.mean() - a.mean()).amax() / a.mean().amax().max(1.0));
    }
    if worst_trip > 1e-10 {
        fails.push(format!("product/divide round trip {worst_trip:e}"));
    }

    let scalar = |m: f64, v: f64| GaussianBelief::isotropic(DVector::from_element(1, m), v).unwrap();
    let mut worst_quad: f64 = 0.0;
    for _ in 0..50 {
        let (m0, v0, m1, v1) = (
            rng.random_range(-2.0..2.0),
            rng.random_range(0.3..4.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.3..4.0),
        );
        let kl = kl_divergence(&scalar(m0, v0), &scalar(m1, v1)).unwrap();
        worst_quad = worst_quad.max((kl - kl_quadrature(m0, v0, m1, v1)).abs());
        let agents = rng.random_range(0.5..6.0);
        let ls = log_s(agents, &scalar(m0, v0), &scalar(m1, v1)).unwrap();
        let quad = adaptive(
            &|t| normal_pdf(t, m1, v1) * normal_pdf(t, m0, v0).powf(agents),
            -40.0,
            40.0,
            1e-15,
        )
        .ln();
        worst_quad = worst_quad.max((ls - quad).abs() / quad.abs().max(1.0));
    }
    if worst_quad > 1e-6 {
        fails.push(format!("quadrature oracle gap {worst_quad:e}"));
    }

    let detail = format!(
        "min KL {min_kl:.2e}, min log_s'' {min_second:.2e}, decomposition {worst_decomp:.1e}, gradient {worst_grad:.1e}, round trip {worst_trip:.1e}, quadrature {worst_quad:.1e}"
    );
    if fails.is_empty() {
        verdict(true, detail)
    } else {
        verdict(false, format!("{}; {detail}", fails.join("; ")))
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; only listing is handled.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 9] = [
        (
            1,
            "CIL equals the pooled posterior",
            Duration::from_secs(5),
            criterion_1,
        ),
        (
            2,
            "KL increases with the number of agents",
            Duration::from_secs(60),
            criterion_2,
        ),
        (
            3,
            "KL vanishes as the prior flattens",
            Duration::from_secs(60),
            criterion_3,
        ),
        (
            4,
            "regression MSE gap between CIP and CIL",
            Duration::from_secs(180),
            criterion_4,
        ),
        (
            5,
            "CIP ignores how data are partitioned",
            Duration::from_secs(5),
            criterion_5,
        ),
        (
            6,
            "discrete fusion over class priors",
            Duration::from_secs(120),
            criterion_6,
        ),
        (
            7,
            "one-shot MLP accuracy ordering",
            Duration::from_secs(600),
            criterion_7,
        ),
        (8, "federated rounds", Duration::from_secs(600), criterion_8),
        (9, "numerical property suite", Duration::from_secs(120), criterion_9),
    ];
    // `ACCEPTANCE_ONLY=2,9` restricts the run to the listed criteria.
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, budget, check) in criteria {
        if only.as_ref().is_some_and(|ids| !ids.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let passed = v.passed && in_time;
        failed += usize::from(!passed);
        println!(
            "{} criterion {id} ({name}): {} [{:.1}s of {}s]",
            if passed { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
