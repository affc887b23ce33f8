//! Seeded synthetic datasets.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{FusionError, Result};
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Linear,
    TwoClass,
    Multiclass,
    Mixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n_train: usize,
    pub n_test: usize,
    /// Feature dimension `d_x`.
    pub input_dim: usize,
    /// Response dimension for regression, class count otherwise.
    pub output_dim: usize,
    /// Observation noise std (regression) or within-class std (classification).
    pub noise_std: f64,
    #[serde(default)]
    pub class_priors: Option<Vec<f64>>,
    /// Gaussian components per class for the mixture generator.
    #[serde(default)]
    pub mixture_components: Option<usize>,
    pub seed: u64,
}

pub const MAX_MIXTURE_COMPONENTS: usize = 4;

/// Range of the integer entries of the true regression coefficients.
pub const THETA_RANGE: (i64, i64) = (-10, 20);
/// Half-width of the uniform regression feature distribution.
pub const FEATURE_HALF_WIDTH: f64 = 10.0;
/// Half-width of the cube holding mixture component means.
pub const MIXTURE_MEAN_HALF_WIDTH: f64 = 2.0;

impl GeneratorSpec {
    pub fn linear(seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Linear,
            n_train: 700,
            n_test: 300,
            input_dim: 6,
            output_dim: 1,
            noise_std: 4.0,
            class_priors: None,
            mixture_components: None,
            seed,
        }
    }

    pub fn two_class(seed: u64) -> Self {
        Self {
            kind: GeneratorKind::TwoClass,
            n_train: 1000,
            n_test: 1000,
            input_dim: 10,
            output_dim: 2,
            noise_std: 1.0,
            class_priors: Some(vec![0.6, 0.4]),
            mixture_components: None,
            seed,
        }
    }

    pub fn multiclass(seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Multiclass,
            n_train: 1000,
            n_test: 1000,
            input_dim: 10,
            output_dim: 10,
            noise_std: 1.0,
            class_priors: None,
            mixture_components: None,
            seed,
        }
    }

    pub fn mixture(seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Mixture,
            n_train: 600,
            n_test: 300,
            input_dim: 10,
            output_dim: 3,
            noise_std: 1.0,
            class_priors: None,
            mixture_components: Some(MAX_MIXTURE_COMPONENTS),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FusionError::InvalidArgument(m.into()));
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be at least 1");
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("dimensions must be positive");
        }
        if !(self.noise_std > 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be positive");
        }
        if self.kind != GeneratorKind::Linear && self.output_dim < 2 {
            return bad("classification needs at least two classes");
        }
        if let Some(p) = &self.class_priors {
            if p.len() != self.output_dim {
                return bad("class_priors length must equal the class count");
            }
            if p.iter().any(|v| !(*v > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("class_priors must be positive and sum to 1");
            }
        }
        if let Some(k) = self.mixture_components {
            if k == 0 || k > MAX_MIXTURE_COMPONENTS {
                return bad("mixture_components must be between 1 and 4");
            }
        }
        Ok(())
    }

    fn expect(&self, kinds: &[GeneratorKind]) -> Result<()> {
        self.validate()?;
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            Err(FusionError::InvalidArgument(format!(
                "generator kind {:?} not accepted here",
                self.kind
            )))
        }
    }

    /// Class priors, uniform when unset.
    pub fn priors(&self) -> Vec<f64> {
        self.class_priors
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.output_dim as f64; self.output_dim])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearData {
    pub train: Dataset,
    pub test: Dataset,
    pub true_theta: DVector<f64>,
}

/// `y = θᵀx + ε` with integer `θ`, uniform features and Gaussian noise.
pub fn gen_linear(spec: &GeneratorSpec) -> Result<LinearData> {
    spec.expect(&[GeneratorKind::Linear])?;
    if spec.output_dim != 1 {
        return Err(FusionError::InvalidArgument(
            "linear generator has scalar responses".into(),
        ));
    }
    let mut rng = rng_for(spec.seed, &[0]);
    let d = spec.input_dim;
    let theta = DVector::from_fn(d, |_, _| rng.random_range(THETA_RANGE.0..=THETA_RANGE.1) as f64);
    let features = Uniform::new(-FEATURE_HALF_WIDTH, FEATURE_HALF_WIDTH).expect("valid range");
    let mut draw = |n: usize| {
        let x = DMatrix::from_fn(n, d, |_, _| features.sample(&mut rng));
        let noise = DVector::from_fn(n, |_, _| spec.noise_std * rng.sample::<f64, _>(StandardNormal));
        let y = &x * &theta + noise;
        Dataset::regression(x, DMatrix::from_column_slice(n, 1, y.as_slice()))
    };
    let train = draw(spec.n_train)?;
    let test = draw(spec.n_test)?;
    Ok(LinearData {
        train,
        test,
        true_theta: theta,
    })
}

/// Class `c` centred at the `c`-th standard basis vector.
pub fn basis_class_means(classes: usize, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(classes, dim, |c, j| if c == j { 1.0 } else { 0.0 })
}

fn sample_classes<R: Rng>(
    rng: &mut R,
    n: usize,
    priors: &[f64],
    mut draw_point: impl FnMut(&mut R, usize) -> DVector<f64>,
    dim: usize,
) -> Result<Dataset> {
    let picker = WeightedIndex::new(priors).map_err(|e| FusionError::InvalidArgument(e.to_string()))?;
    let mut x = DMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = picker.sample(rng);
        x.set_row(i, &draw_point(rng, c).transpose());
        labels.push(c);
    }
    Dataset::classification(x, labels, priors.len())
}

fn gaussian_classes(spec: &GeneratorSpec) -> Result<(Dataset, Dataset)> {
    if spec.output_dim > spec.input_dim {
        return Err(FusionError::InvalidArgument(
            "basis-vector class means need input_dim >= class count".into(),
        ));
    }
    let means = basis_class_means(spec.output_dim, spec.input_dim);
    let priors = spec.priors();
    let mut rng = rng_for(spec.seed, &[1]);
    let point = |rng: &mut rand_chacha::ChaCha8Rng, c: usize| {
        DVector::from_fn(spec.input_dim, |j, _| {
            means[(c, j)] + spec.noise_std * rng.sample::<f64, _>(StandardNormal)
        })
    };
    let train = sample_classes(&mut rng, spec.n_train, &priors, point, spec.input_dim)?;
    let test = sample_classes(&mut rng, spec.n_test, &priors, point, spec.input_dim)?;
    Ok((train, test))
}

/// Two Gaussian classes `N(e_c, σ²I)` with the configured priors.
pub fn gen_two_class(spec: &GeneratorSpec) -> Result<(Dataset, Dataset)> {
    spec.expect(&[GeneratorKind::TwoClass])?;
    if spec.output_dim != 2 {
        return Err(FusionError::InvalidArgument(
            "two_class generator needs output_dim = 2".into(),
        ));
    }
    gaussian_classes(spec)
}

/// `L` Gaussian classes `N(e_c, σ²I)`, uniform priors unless overridden.
pub fn gen_multiclass(spec: &GeneratorSpec) -> Result<(Dataset, Dataset)> {
    spec.expect(&[GeneratorKind::Multiclass, GeneratorKind::TwoClass])?;
    gaussian_classes(spec)
}

/// Component means of the mixture generator, `classes × components` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureLayout {
    pub components_per_class: usize,
    /// Row `c * components_per_class + k` is component `k` of class `c`.
    pub means: DMatrix<f64>,
}

pub fn mixture_layout(spec: &GeneratorSpec) -> Result<MixtureLayout> {
    spec.expect(&[GeneratorKind::Mixture])?;
    let k = spec.mixture_components.unwrap_or(MAX_MIXTURE_COMPONENTS);
    let mut rng = rng_for(spec.seed, &[2]);
    let u = Uniform::new(-MIXTURE_MEAN_HALF_WIDTH, MIXTURE_MEAN_HALF_WIDTH).expect("valid range");
    let means = DMatrix::from_fn(spec.output_dim * k, spec.input_dim, |_, _| u.sample(&mut rng));
    Ok(MixtureLayout {
        components_per_class: k,
        means,
    })
}

/// Each class is an equal-weight mixture of unit-variance Gaussians with
/// means uniform in a cube.
pub fn gen_mixture(spec: &GeneratorSpec) -> Result<(Dataset, Dataset)> {
    let layout = mixture_layout(spec)?;
    let k = layout.components_per_class;
    let priors = spec.priors();
    let mut rng = rng_for(spec.seed, &[3]);
    let point = |rng: &mut rand_chacha::ChaCha8Rng, c: usize| {
        let row = c * k + rng.random_range(0..k);
        DVector::from_fn(spec.input_dim, |j, _| {
            layout.means[(row, j)] + spec.noise_std * rng.sample::<f64, _>(StandardNormal)
        })
    };
    let train = sample_classes(&mut rng, spec.n_train, &priors, point, spec.input_dim)?;
    let test = sample_classes(&mut rng, spec.n_test, &priors, point, spec.input_dim)?;
    Ok((train, test))
}

/// Generates the classification train/test pair for any labelled kind.
pub fn gen_classification(spec: &GeneratorSpec) -> Result<(Dataset, Dataset)> {
    match spec.kind {
        GeneratorKind::TwoClass => gen_two_class(spec),
        GeneratorKind::Multiclass => gen_multiclass(spec),
        GeneratorKind::Mixture => gen_mixture(spec),
        GeneratorKind::Linear => Err(FusionError::InvalidArgument(
            "linear generator has real-valued targets".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_seeded_and_noiseless_limit_is_exact() {
        let a = gen_linear(&GeneratorSpec::linear(4)).unwrap();
        let b = gen_linear(&GeneratorSpec::linear(4)).unwrap();
        assert_eq!(a, b);
        assert!(a
            .true_theta
            .iter()
            .all(|t| t.fract() == 0.0 && (-10.0..=20.0).contains(t)));
        assert_eq!(a.train.len(), 700);
        assert_eq!(a.test.len(), 300);

        let mut spec = GeneratorSpec::linear(9);
        spec.noise_std = 1e-300;
        let data = gen_linear(&spec).unwrap();
        let x = data.train.features();
        let y = data.train.real_targets().unwrap().column(0).into_owned();
        let ols = (x.tr_mul(x)).cholesky().unwrap().solve(&x.tr_mul(&y));
        assert!((ols - &data.true_theta).amax() < 1e-8);
    }

    #[test]
    fn two_class_priors() {
        let (train, test) = gen_two_class(&GeneratorSpec::two_class(1)).unwrap();
        let (labels, classes) = train.labels().unwrap();
        assert_eq!(classes, 2);
        let frac = labels.iter().filter(|&&l| l == 0).count() as f64 / labels.len() as f64;
        assert!((frac - 0.6).abs() < 3.0 * (0.24f64 / 1000.0).sqrt());
        assert_ne!(train, test);
    }

    #[test]
    fn mixture_shapes() {
        let spec = GeneratorSpec::mixture(2);
        let (train, test) = gen_mixture(&spec).unwrap();
        assert_eq!((train.len(), test.len()), (600, 300));
        let layout = mixture_layout(&spec).unwrap();
        assert_eq!(layout.means.nrows(), 12);
        assert!(layout.means.iter().all(|v| v.abs() <= 2.0));
        let mut bad = spec.clone();
        bad.mixture_components = Some(5);
        assert!(gen_mixture(&bad).is_err());
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        assert!(gen_linear(&GeneratorSpec::two_class(0)).is_err());
        assert!(gen_two_class(&GeneratorSpec::multiclass(0)).is_err());
    }
}
