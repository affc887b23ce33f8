//! Fusion of Gaussian and discrete posteriors computed by independent agents
//! that share a common prior.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod datagen;
pub mod discrete;
pub mod divergence;
pub mod error;
pub mod experiment;
pub mod federated;
pub mod fusion;
pub mod gaussian;
pub mod local;
pub mod seed;
pub mod selftest;
pub mod stats;

pub use discrete::DiscreteBelief;
pub use error::{FusionError, Result};
pub use fusion::{
    fuse_cil, fuse_cil_heterogeneous, fuse_cip, fuse_discrete_cil, fuse_discrete_cip, FusionReport, FusionRule,
};
pub use gaussian::{GaussianBelief, Precision, StorageKind};
