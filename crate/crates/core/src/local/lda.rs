use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::LabeledShard;
use crate::discrete::DiscreteBelief;
use crate::error::{check_dim, FusionError, Result};

/// Pseudo-count given to the prior class mean when estimating class means.
pub const DEFAULT_MEAN_PRIOR_STRENGTH: f64 = 1.0;

/// Gaussian class-conditional model with a known shared covariance.
#[derive(Clone, Debug)]
pub struct LdaModel {
    means: DMatrix<f64>,
    cov: Cholesky<f64, Dyn>,
    class_prior: DiscreteBelief,
}

impl LdaModel {
    /// Estimates class means as `(κ m₀_c + Σ_{n: y_n = c} x_n) / (κ + N_c)`.
    /// A class absent from the shard keeps its prior mean.
    pub fn fit(
        prior_means: &DMatrix<f64>,
        shared_cov: &DMatrix<f64>,
        class_prior: &DiscreteBelief,
        shard: &LabeledShard,
        prior_strength: f64,
    ) -> Result<Self> {
        let classes = prior_means.nrows();
        let d = prior_means.ncols();
        check_dim(classes, class_prior.len())?;
        check_dim(d, shared_cov.nrows())?;
        check_dim(d, shared_cov.ncols())?;
        if !(prior_strength >= 0.0) {
            return Err(FusionError::InvalidArgument(
                "prior strength must be nonnegative".into(),
            ));
        }
        let cov = shared_cov
            .clone()
            .cholesky()
            .ok_or_else(|| FusionError::NotPositiveDefinite("shared covariance".into()))?;
        let mut sums = prior_means * prior_strength;
        let mut counts = vec![prior_strength; classes];
        if !shard.is_empty() {
            check_dim(d, shard.data.feature_dim())?;
            let (labels, shard_classes) = shard.data.labels()?;
            check_dim(classes, shard_classes)?;
            let x = shard.data.features();
            for (n, &c) in labels.iter().enumerate() {
                let mut row = sums.row_mut(c);
                row += x.row(n);
                counts[c] += 1.0;
            }
        }
        let mut means = sums;
        for (c, &n) in counts.iter().enumerate() {
            if n > 0.0 {
                let mut row = means.row_mut(c);
                row /= n;
            } else {
                means.set_row(c, &prior_means.row(c));
            }
        }
        Ok(Self {
            means,
            cov,
            class_prior: class_prior.clone(),
        })
    }

    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    /// `P(c | x) ∝ P(c) N(x; m_c, Σ)`.
    pub fn posterior(&self, query: &DVector<f64>) -> Result<DiscreteBelief> {
        check_dim(self.means.ncols(), query.len())?;
        let l = self.cov.l_dirty();
        let weights = (0..self.means.nrows())
            .map(|c| {
                let diff = query - self.means.row(c).transpose();
                let z = l
                    .solve_lower_triangular(&diff)
                    .expect("Cholesky factor has a positive diagonal");
                self.class_prior.log_probs()[c] - 0.5 * z.norm_squared()
            })
            .collect();
        DiscreteBelief::from_log_weights(weights)
    }
}

/// One-off class posterior for a single query; see [`LdaModel`].
pub fn lda_class_posterior(
    class_means: &DMatrix<f64>,
    shared_cov: &DMatrix<f64>,
    prior_probs: &DiscreteBelief,
    shard: &LabeledShard,
    query: &DVector<f64>,
) -> Result<DiscreteBelief> {
    LdaModel::fit(class_means, shared_cov, prior_probs, shard, DEFAULT_MEAN_PRIOR_STRENGTH)?.posterior(query)
}
