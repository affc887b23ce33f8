//! Fusion of local posteriors that were all computed from one shared prior.
//!
//! * CIL (conditionally independent likelihoods) divides the product of the
//!   local posteriors by the prior raised to `M − 1`, recovering the
//!   centralized posterior exactly when the shards are i.i.d. given θ.
//! * CIP (conditionally independent posteriors) is the plain product of
//!   experts, which counts the shared prior `M` times.
//!
//! Everything is done in precision/information form with a single SPD solve
//! for the fused mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteBelief;
use crate::error::{check_dim, FusionError, Result};
use crate::gaussian::{self, GaussianBelief, Precision, SpdFactor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FusionRule {
    Cil,
    Cip,
}

impl FusionRule {
    pub fn name(self) -> &'static str {
        match self {
            FusionRule::Cil => "CIL",
            FusionRule::Cip => "CIP",
        }
    }
}

impl std::fmt::Display for FusionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FusionRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cil" => Ok(FusionRule::Cil),
            "cip" => Ok(FusionRule::Cip),
            other => Err(format!("unknown fusion rule `{other}` (expected CIL or CIP)")),
        }
    }
}

/// Fusion weight `Ξ_m` expressing the CIL mean as an affine combination
/// `μ = Σ_m Ξ_m θ_m`. Diagonal when every input is diagonal.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightMatrix {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl WeightMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            WeightMatrix::Dense(m) => m.clone(),
            WeightMatrix::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            WeightMatrix::Dense(m) => m * v,
            WeightMatrix::Diagonal(d) => d.component_mul(v),
        }
    }
}

/// Largest absolute deviation of `Σ Ξ_m` from the identity.
pub fn weight_sum_residual(weights: &[WeightMatrix]) -> f64 {
    let Some(first) = weights.first() else {
        return f64::INFINITY;
    };
    let d = match first {
        WeightMatrix::Dense(m) => m.nrows(),
        WeightMatrix::Diagonal(v) => v.len(),
    };
    let mut total = DMatrix::<f64>::zeros(d, d);
    for w in weights {
        match w {
            WeightMatrix::Dense(m) => total += m,
            WeightMatrix::Diagonal(v) => {
                for i in 0..d {
                    total[(i, i)] += v[i];
                }
            }
        }
    }
    (total - DMatrix::<f64>::identity(d, d)).amax()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionReport {
    pub fused: GaussianBelief,
    pub rule: FusionRule,
    /// `Ξ_0` (prior) first, then `Ξ_1..Ξ_M`. Empty for CIP.
    pub weights: Vec<WeightMatrix>,
    /// KL from this result to the other rule's result, when computed.
    pub kl_to_alternative: Option<f64>,
}

fn check_dims(reference: usize, beliefs: &[GaussianBelief]) -> Result<()> {
    for b in beliefs {
        check_dim(reference, b.dim())?;
    }
    Ok(())
}

/// `Λ⁻¹ P` for a factorized `Λ`.
fn weight(lambda: &SpdFactor, p: &Precision, scale: f64) -> WeightMatrix {
    match (lambda, p) {
        (SpdFactor::Diagonal(l), Precision::Diagonal(d)) => WeightMatrix::Diagonal(d.component_div(l) * scale),
        (SpdFactor::Dense(c), p) => WeightMatrix::Dense(c.solve(&p.to_dense()) * scale),
        (SpdFactor::Diagonal(l), Precision::Dense(m)) => {
            let mut out = m.clone();
            for (i, mut row) in out.row_iter_mut().enumerate() {
                row /= l[i];
            }
            WeightMatrix::Dense(out * scale)
        }
    }
}

/// Optimal fusion under conditionally independent likelihoods:
/// `Λ = Σ C_m⁻¹ − (M−1) C₀⁻¹`, `μ = Λ⁻¹(Σ C_m⁻¹ θ_m − (M−1) C₀⁻¹ θ₀)`.
pub fn fuse_cil(prior: &GaussianBelief, locals: &[GaussianBelief]) -> Result<FusionReport> {
    if locals.is_empty() {
        return Err(FusionError::EmptyInput("fusion needs at least one local posterior"));
    }
    let d = prior.dim();
    check_dims(d, locals)?;
    let m = locals.len();
    if m == 1 {
        let identity = WeightMatrix::Diagonal(DVector::from_element(d, 1.0));
        let zero = WeightMatrix::Diagonal(DVector::zeros(d));
        return Ok(FusionReport {
            fused: locals[0].clone(),
            rule: FusionRule::Cil,
            weights: vec![zero, identity],
            kl_to_alternative: None,
        });
    }
    let excess = (m - 1) as f64;
    let mut precision = locals[0].precision().clone();
    let mut info = locals[0].information();
    for b in &locals[1..] {
        precision = precision.add(b.precision())?;
        info += b.information();
    }
    let precision = precision.add_scaled(prior.precision(), -excess)?;
    info -= prior.information() * excess;
    let fused = GaussianBelief::from_information(precision, &info)?;
    let lambda = fused.factor();
    let mut weights = Vec::with_capacity(m + 1);
    weights.push(weight(&lambda, prior.precision(), -excess));
    weights.extend(locals.iter().map(|b| weight(&lambda, b.precision(), 1.0)));
    Ok(FusionReport {
        fused,
        rule: FusionRule::Cil,
        weights,
        kl_to_alternative: None,
    })
}

/// Product of experts: `Λ̃ = Σ C_m⁻¹`, `μ̃ = Λ̃⁻¹ Σ C_m⁻¹ θ_m`.
pub fn fuse_cip(locals: &[GaussianBelief]) -> Result<FusionReport> {
    let fused = gaussian::product(locals)?.into_belief();
    Ok(FusionReport {
        fused,
        rule: FusionRule::Cip,
        weights: Vec::new(),
        kl_to_alternative: None,
    })
}

/// CIL fusion when each agent used its own prior `p_m(θ)`:
/// `p(θ|D) ∝ p(θ) Π_m p(θ|D_m) / p_m(θ)`.
///
/// Weights are ordered as global prior, local posteriors, then the (negative)
/// local prior weights; together they sum to the identity.
pub fn fuse_cil_heterogeneous(
    global_prior: &GaussianBelief,
    local_priors: &[GaussianBelief],
    locals: &[GaussianBelief],
) -> Result<FusionReport> {
    if locals.is_empty() {
        return Err(FusionError::EmptyInput("fusion needs at least one local posterior"));
    }
    if local_priors.len() != locals.len() {
        return Err(FusionError::InvalidArgument(format!(
            "{} local priors for {} local posteriors",
            local_priors.len(),
            locals.len()
        )));
    }
    let d = global_prior.dim();
    check_dims(d, locals)?;
    check_dims(d, local_priors)?;
    let mut precision = global_prior.precision().clone();
    let mut info = global_prior.information();
    for (post, pri) in locals.iter().zip(local_priors) {
        precision = precision.add(post.precision())?.sub(pri.precision())?;
        info += post.information() - pri.information();
    }
    let fused = GaussianBelief::from_information(precision, &info)?;
    let lambda = fused.factor();
    let mut weights = vec![weight(&lambda, global_prior.precision(), 1.0)];
    weights.extend(locals.iter().map(|b| weight(&lambda, b.precision(), 1.0)));
    weights.extend(local_priors.iter().map(|b| weight(&lambda, b.precision(), -1.0)));
    Ok(FusionReport {
        fused,
        rule: FusionRule::Cil,
        weights,
        kl_to_alternative: None,
    })
}

/// Fuses with the requested rule and records `KL(result ‖ other rule)`.
pub fn fuse_both(prior: &GaussianBelief, locals: &[GaussianBelief]) -> Result<(FusionReport, FusionReport)> {
    let mut cil = fuse_cil(prior, locals)?;
    let mut cip = fuse_cip(locals)?;
    cil.kl_to_alternative = Some(gaussian::kl_divergence(&cil.fused, &cip.fused)?);
    cip.kl_to_alternative = Some(gaussian::kl_divergence(&cip.fused, &cil.fused)?);
    Ok((cil, cip))
}

fn check_classes(reference: usize, beliefs: &[DiscreteBelief]) -> Result<()> {
    for b in beliefs {
        check_dim(reference, b.len())?;
    }
    Ok(())
}

/// Class-posterior CIL: `P(c | D, x) ∝ Π_m P(c | D_m, x) / P(c)^{M−1}`.
pub fn fuse_discrete_cil(prior: &DiscreteBelief, locals: &[DiscreteBelief]) -> Result<DiscreteBelief> {
    if locals.is_empty() {
        return Err(FusionError::EmptyInput("fusion needs at least one local posterior"));
    }
    check_classes(prior.len(), locals)?;
    if let Some(class) = prior.log_probs().iter().position(|l| !l.is_finite()) {
        return Err(FusionError::ZeroPriorProbability { class });
    }
    if locals.len() == 1 {
        return Ok(locals[0].clone());
    }
    let excess = (locals.len() - 1) as f64;
    let weights = (0..prior.len())
        .map(|c| locals.iter().map(|b| b.log_probs()[c]).sum::<f64>() - excess * prior.log_probs()[c])
        .collect();
    DiscreteBelief::from_log_weights(weights)
}

/// Class-posterior product of experts.
pub fn fuse_discrete_cip(locals: &[DiscreteBelief]) -> Result<DiscreteBelief> {
    let first = locals
        .first()
        .ok_or(FusionError::EmptyInput("fusion needs at least one local posterior"))?;
    check_classes(first.len(), locals)?;
    if locals.len() == 1 {
        return Ok(first.clone());
    }
    let weights = (0..first.len())
        .map(|c| locals.iter().map(|b| b.log_probs()[c]).sum::<f64>())
        .collect();
    DiscreteBelief::from_log_weights(weights)
}

pub fn fuse_discrete(rule: FusionRule, prior: &DiscreteBelief, locals: &[DiscreteBelief]) -> Result<DiscreteBelief> {
    match rule {
        FusionRule::Cil => fuse_discrete_cil(prior, locals),
        FusionRule::Cip => fuse_discrete_cip(locals),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar(mean: f64, precision: f64) -> GaussianBelief {
        GaussianBelief::diagonal(dvector![mean], dvector![precision]).unwrap()
    }

    #[test]
    fn cil_scalar_example() {
        let r = fuse_cil(&scalar(0.0, 1.0), &[scalar(1.0, 3.0), scalar(2.0, 2.0)]).unwrap();
        assert_eq!(r.fused.precision().diagonal()[0], 4.0);
        assert!((r.fused.mean()[0] - 1.75).abs() < 1e-14);
        assert!(weight_sum_residual(&r.weights) < 1e-14);
    }

    #[test]
    fn cip_scalar_example() {
        let r = fuse_cip(&[scalar(1.0, 3.0), scalar(2.0, 2.0)]).unwrap();
        assert_eq!(r.fused.precision().diagonal()[0], 5.0);
        assert!((r.fused.mean()[0] - 1.4).abs() < 1e-14);
        assert!(r.weights.is_empty());
    }

    #[test]
    fn single_agent_is_identity_for_both_rules() {
        let prior = scalar(0.0, 1.0);
        let local = GaussianBelief::dense(dvector![0.1, 0.2], dmatrix![3.0, 0.2; 0.2, 1.0]).unwrap();
        let prior2 = GaussianBelief::isotropic(dvector![0.0, 0.0], 1.0).unwrap();
        assert_eq!(fuse_cil(&prior2, std::slice::from_ref(&local)).unwrap().fused, local);
        assert_eq!(fuse_cip(std::slice::from_ref(&local)).unwrap().fused, local);
        assert!(fuse_cil(&prior, &[local]).is_err());
    }

    #[test]
    fn cip_duplication_overconfidence() {
        let a = GaussianBelief::dense(dvector![1.0, -1.0], dmatrix![2.0, 0.5; 0.5, 1.0]).unwrap();
        let r = fuse_cip(&vec![a.clone(); 4]).unwrap();
        assert!((r.fused.mean() - a.mean()).amax() < 1e-13);
        assert!((r.fused.precision().to_dense() - a.precision().to_dense() * 4.0).amax() < 1e-13);
    }

    #[test]
    fn cil_reports_indefinite_precision() {
        // Locals less certain than the prior: Λ = 0.5 + 0.5 − 2 < 0.
        let err = fuse_cil(&scalar(0.0, 2.0), &[scalar(0.0, 0.5), scalar(0.0, 0.5)]).unwrap_err();
        match err {
            FusionError::IndefinitePrecision { min_eigenvalue } => assert!(min_eigenvalue < 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn heterogeneous_reductions() {
        let prior = scalar(0.5, 1.0);
        let locals = [scalar(1.0, 3.0), scalar(2.0, 2.0), scalar(0.0, 1.5)];
        let a = fuse_cil(&prior, &locals).unwrap().fused;
        let b = fuse_cil_heterogeneous(&prior, &vec![prior.clone(); 3], &locals).unwrap();
        assert!((a.mean()[0] - b.fused.mean()[0]).abs() < 1e-13);
        assert!((a.precision().diagonal()[0] - b.fused.precision().diagonal()[0]).abs() < 1e-13);
        assert!(weight_sum_residual(&b.weights) < 1e-13);

        let local_prior = [scalar(3.0, 0.25)];
        let r = fuse_cil_heterogeneous(&prior, &local_prior, &local_prior).unwrap();
        assert_eq!(r.fused.precision(), prior.precision());
        assert!((r.fused.mean()[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn discrete_examples() {
        let prior = DiscreteBelief::from_probs(&[0.6, 0.4]).unwrap();
        let a = DiscreteBelief::from_probs(&[0.7, 0.3]).unwrap();
        let b = DiscreteBelief::from_probs(&[0.8, 0.2]).unwrap();
        // (0.56/0.6, 0.06/0.4) normalized
        let cil = fuse_discrete_cil(&prior, &[a.clone(), b.clone()]).unwrap().probs();
        let (u, v) = (0.56 / 0.6, 0.06 / 0.4);
        assert!((cil[0] - u / (u + v)).abs() < 1e-12);
        assert!((cil[0] - 0.86154).abs() < 1e-5);
        let cip = fuse_discrete_cip(&[a.clone(), b]).unwrap().probs();
        assert!((cip[0] - 0.90323).abs() < 1e-5 && (cip[1] - 0.09677).abs() < 1e-5);
        assert_eq!(fuse_discrete_cil(&prior, std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(fuse_discrete_cip(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn discrete_uniform_prior_matches_cip() {
        let u = DiscreteBelief::uniform(3).unwrap();
        let locals = vec![
            DiscreteBelief::from_probs(&[0.2, 0.5, 0.3]).unwrap(),
            DiscreteBelief::from_probs(&[0.6, 0.1, 0.3]).unwrap(),
            DiscreteBelief::from_probs(&[0.3, 0.3, 0.4]).unwrap(),
        ];
        let a = fuse_discrete_cil(&u, &locals).unwrap();
        let b = fuse_discrete_cip(&locals).unwrap();
        for (x, y) in a.log_probs().iter().zip(b.log_probs()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("cil".parse::<FusionRule>().unwrap(), FusionRule::Cil);
        assert_eq!("CIP".parse::<FusionRule>().unwrap(), FusionRule::Cip);
        assert!("avg".parse::<FusionRule>().is_err());
    }
}
