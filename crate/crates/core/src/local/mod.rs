//! Per-agent posterior computation from the shared prior and a local shard.

mod laplace;
mod lda;
pub(crate) mod linear;
mod mlp;

pub use laplace::{empirical_fisher, laplace_fit, TrainConfig};
pub use lda::{lda_class_posterior, LdaModel, DEFAULT_MEAN_PRIOR_STRENGTH};
pub use linear::{linear_posterior, FeatureMap, IdentityMap, ObservationNoise};
pub use mlp::{accuracy, log_probs_batch, mlp_predict, nll_and_gradient, Activation, MlpSpec};
