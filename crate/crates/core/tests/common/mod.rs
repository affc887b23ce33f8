//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        // Rounding in `f` caps the attainable accuracy at a few ulps of ∫|f|.
        let floor = 1e-13 * (b - a) * (fa.abs() + 4.0 * fm.abs() + fb.abs()) / 6.0;
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol.max(floor) {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // Start from fixed panels so a narrow peak cannot slip between the first probes.
    let panels = 256;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            step(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 30)
        })
        .sum()
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt()).unwrap().pdf(x)
}

pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt()).unwrap().ln_pdf(x)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// `∫ p log(p/q)` for two univariate normals.
pub fn kl_quadrature(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
    let lo = mp.min(mq) - 20.0 * vp.max(vq).sqrt();
    let hi = mp.max(mq) + 20.0 * vp.max(vq).sqrt();
    simpson(
        |x| {
            let p = normal_pdf(x, mp, vp);
            if p == 0.0 {
                0.0
            } else {
                p * (normal_ln_pdf(x, mp, vp) - normal_ln_pdf(x, mq, vq))
            }
        },
        lo,
        hi,
        200_000,
    )
}

/// Accuracy of the Bayes classifier for classes `N(e_c, I)` with priors `priors`.
///
/// Class `c` wins when `log π_c + x_c ≥ log π_k + x_k` for every `k`, and only
/// the coordinates matching class indices matter, so the probability reduces
/// to a one-dimensional integral over `x_c`.
pub fn bayes_accuracy_basis(priors: &[f64]) -> f64 {
    priors
        .iter()
        .enumerate()
        .map(|(c, &pc)| {
            let f = |z: f64| {
                std_normal_cdf_density(z)
                    * priors
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != c)
                        .map(|(_, &pk)| std_normal_cdf(1.0 + z + pc.ln() - pk.ln()))
                        .product::<f64>()
            };
            pc * simpson(f, -12.0, 12.0, 20_000)
        })
        .sum()
}

fn std_normal_cdf_density(z: f64) -> f64 {
    normal_pdf(z, 0.0, 1.0)
}

/// Three-standard-error half width for a proportion estimated from `n` draws.
pub fn binomial_3se(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}
