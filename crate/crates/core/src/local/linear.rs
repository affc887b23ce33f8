use nalgebra::{DMatrix, DVector};

use crate::data::LabeledShard;
use crate::error::{check_dim, FusionError, Result};
use crate::gaussian::{GaussianBelief, Precision};

/// Maps an input row to the `d_y × p` design block `F_n` of a model that is
/// linear in its `p` parameters.
pub trait FeatureMap {
    fn design(&self, x: &[f64]) -> DMatrix<f64>;
}

/// `φ(x) = x` for scalar responses.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityMap;

impl FeatureMap for IdentityMap {
    fn design(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, x.len(), x)
    }
}

impl<F> FeatureMap for F
where
    F: Fn(&[f64]) -> DMatrix<f64>,
{
    fn design(&self, x: &[f64]) -> DMatrix<f64> {
        self(x)
    }
}

/// Observation covariance `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationNoise {
    covariance: DMatrix<f64>,
}

impl ObservationNoise {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() || covariance.nrows() == 0 {
            return Err(FusionError::NotPositiveDefinite(
                "noise covariance must be square".into(),
            ));
        }
        if covariance.clone().cholesky().is_none() {
            return Err(FusionError::NotPositiveDefinite("noise covariance".into()));
        }
        Ok(Self { covariance })
    }

    /// `R = σ² I` from a standard deviation.
    pub fn from_std(outputs: usize, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() {
            return Err(FusionError::NotPositiveDefinite(format!("noise std {std}")));
        }
        Self::new(DMatrix::identity(outputs, outputs) * (std * std))
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn outputs(&self) -> usize {
        self.covariance.nrows()
    }
}

/// Conjugate update of a Gaussian prior with a linear-Gaussian likelihood:
/// `P = P₀ + Σ Fᵀ R⁻¹ F`, `θ = P⁻¹(P₀θ₀ + Σ Fᵀ R⁻¹ y)`.
pub fn linear_posterior(
    prior: &GaussianBelief,
    shard: &LabeledShard,
    noise: &ObservationNoise,
    feature_map: &dyn FeatureMap,
) -> Result<GaussianBelief> {
    let y = shard.data.real_targets()?;
    check_dim(noise.outputs(), y.ncols())?;
    if shard.is_empty() {
        return Ok(prior.clone());
    }
    let r_inv = noise
        .covariance
        .clone()
        .cholesky()
        .ok_or_else(|| FusionError::NotPositiveDefinite("noise covariance".into()))?
        .inverse();
    let p = prior.dim();
    let mut precision = prior.precision().to_dense();
    let mut info = prior.information();
    let x = shard.data.features();
    let mut row = vec![0.0; x.ncols()];
    for n in 0..shard.len() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(n, j)];
        }
        let f = feature_map.design(&row);
        check_dim(noise.outputs(), f.nrows())?;
        check_dim(p, f.ncols())?;
        let ft_rinv = f.transpose() * &r_inv;
        precision += &ft_rinv * &f;
        info += &ft_rinv * y.row(n).transpose();
    }
    GaussianBelief::from_information(Precision::Dense(precision), &info)
}

/// Batched form for the identity map with isotropic noise, used by the
/// experiment runners where shards are large.
pub(crate) fn linear_posterior_isotropic(
    prior: &GaussianBelief,
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
    noise_variance: f64,
) -> Result<GaussianBelief> {
    if features.nrows() == 0 {
        return Ok(prior.clone());
    }
    let precision = prior.precision().to_dense() + features.tr_mul(features) / noise_variance;
    let info = prior.information() + features.tr_mul(targets) / noise_variance;
    GaussianBelief::from_information(Precision::Dense(precision), &info)
}
