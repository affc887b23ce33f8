//! Multivariate normal beliefs in precision form.
//!
//! Every belief stores a mean and a precision (inverse covariance) with either
//! dense or diagonal storage. The fusion rules are additive in precision, so
//! products, powers and quotients of Gaussians never invert a covariance; the
//! only factorization needed per operation is one Cholesky of the result.
//! Operations that mix storage kinds promote to dense.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, FusionError, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;
const SYMMETRY_RTOL: f64 = 1e-12;

/// Storage layout of a precision matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StorageKind {
    Dense,
    Diagonal,
}

/// A symmetric precision matrix, either full or diagonal.
#[derive(Clone, Debug, PartialEq)]
pub enum Precision {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl Precision {
    pub fn identity(dim: usize) -> Self {
        Precision::Diagonal(DVector::from_element(dim, 1.0))
    }

    pub fn isotropic(dim: usize, precision: f64) -> Self {
        Precision::Diagonal(DVector::from_element(dim, precision))
    }

    pub fn dim(&self) -> usize {
        match self {
            Precision::Dense(m) => m.nrows(),
            Precision::Diagonal(d) => d.len(),
        }
    }

    pub fn kind(&self) -> StorageKind {
        match self {
            Precision::Dense(_) => StorageKind::Dense,
            Precision::Diagonal(_) => StorageKind::Diagonal,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Precision::Dense(m) => m.clone(),
            Precision::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            Precision::Dense(m) => m.diagonal(),
            Precision::Diagonal(d) => d.clone(),
        }
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Precision::Dense(m) => m * v,
            Precision::Diagonal(d) => d.component_mul(v),
        }
    }

    pub fn scaled(&self, k: f64) -> Precision {
        match self {
            Precision::Dense(m) => Precision::Dense(m * k),
            Precision::Diagonal(d) => Precision::Diagonal(d * k),
        }
    }

    /// `self + k * other`, promoting to dense when the kinds differ.
    pub fn add_scaled(&self, other: &Precision, k: f64) -> Result<Precision> {
        check_dim(self.dim(), other.dim())?;
        Ok(match (self, other) {
            (Precision::Diagonal(a), Precision::Diagonal(b)) => Precision::Diagonal(a + b * k),
            (Precision::Dense(a), Precision::Dense(b)) => Precision::Dense(a + b * k),
            (Precision::Dense(a), Precision::Diagonal(b)) => {
                let mut out = a.clone();
                for i in 0..b.len() {
                    out[(i, i)] += k * b[i];
                }
                Precision::Dense(out)
            }
            (Precision::Diagonal(a), Precision::Dense(b)) => {
                let mut out = b * k;
                for i in 0..a.len() {
                    out[(i, i)] += a[i];
                }
                Precision::Dense(out)
            }
        })
    }

    pub fn add(&self, other: &Precision) -> Result<Precision> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Precision) -> Result<Precision> {
        self.add_scaled(other, -1.0)
    }

    /// Symmetric positive-definite factorization; `None` when it fails.
    pub fn factor(&self) -> Option<SpdFactor> {
        match self {
            Precision::Dense(m) => Cholesky::new(m.clone()).map(SpdFactor::Dense),
            Precision::Diagonal(d) => {
                if d.iter().all(|&v| v > 0.0 && v.is_finite()) {
                    Some(SpdFactor::Diagonal(d.clone()))
                } else {
                    None
                }
            }
        }
    }

    /// Smallest eigenvalue, used to report indefinite results.
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Precision::Dense(m) => {
                if m.iter().any(|v| !v.is_finite()) {
                    return f64::NAN;
                }
                SymmetricEigen::new(m.clone())
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            }
            Precision::Diagonal(d) => d.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub(crate) fn factor_or_indefinite(&self) -> Result<SpdFactor> {
        self.factor().ok_or_else(|| FusionError::IndefinitePrecision {
            min_eigenvalue: self.min_eigenvalue(),
        })
    }
}

/// Cholesky factor `P = L Lᵀ` (or the diagonal itself).
#[derive(Clone, Debug)]
pub enum SpdFactor {
    Dense(Cholesky<f64, Dyn>),
    Diagonal(DVector<f64>),
}

impl SpdFactor {
    pub fn log_det(&self) -> f64 {
        match self {
            SpdFactor::Dense(c) => 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
            SpdFactor::Diagonal(d) => d.iter().map(|v| v.ln()).sum(),
        }
    }

    /// Solves `P x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            SpdFactor::Dense(c) => c.solve(b),
            SpdFactor::Diagonal(d) => b.component_div(d),
        }
    }

    /// `P⁻¹` as a dense matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        match self {
            SpdFactor::Dense(c) => c.inverse(),
            SpdFactor::Diagonal(d) => DMatrix::from_diagonal(&d.map(|v| 1.0 / v)),
        }
    }

    /// Diagonal of `P⁻¹`.
    pub fn inverse_diagonal(&self) -> DVector<f64> {
        match self {
            SpdFactor::Dense(c) => c.inverse().diagonal(),
            SpdFactor::Diagonal(d) => d.map(|v| 1.0 / v),
        }
    }

    /// Lower-triangular factor as a dense matrix.
    pub fn lower(&self) -> DMatrix<f64> {
        match self {
            SpdFactor::Dense(c) => c.l(),
            SpdFactor::Diagonal(d) => DMatrix::from_diagonal(&d.map(f64::sqrt)),
        }
    }

    /// Maps standard normal draws `z` to `L⁻ᵀ z`, whose covariance is `P⁻¹`.
    fn whiten_inverse(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            SpdFactor::Dense(c) => {
                let lt = c.l().transpose();
                lt.solve_upper_triangular(z)
                    .expect("Cholesky factor has a positive diagonal")
            }
            SpdFactor::Diagonal(d) => z.zip_map(d, |zi, di| zi / di.sqrt()),
        }
    }
}

/// `tr(P_a⁻¹ P_b)` computed as `‖L_a⁻¹ L_b‖²_F`, nonnegative by construction.
pub(crate) fn trace_inv_product(a: &SpdFactor, b: &SpdFactor) -> f64 {
    match (a, b) {
        (SpdFactor::Diagonal(da), SpdFactor::Diagonal(db)) => db.component_div(da).sum(),
        _ => {
            let la = a.lower();
            let lb = b.lower();
            let x = la
                .solve_lower_triangular(&lb)
                .expect("Cholesky factor has a positive diagonal");
            x.norm_squared()
        }
    }
}

/// A multivariate normal belief `N(mean, precision⁻¹)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    precision: Precision,
}

impl GaussianBelief {
    /// Validates and builds a belief. Dense precisions are symmetrized exactly
    /// (`(P + Pᵀ)/2`) after the symmetry check, so the stored matrix is
    /// bit-for-bit symmetric.
    pub fn new(mean: DVector<f64>, precision: Precision) -> Result<Self> {
        check_dim(mean.len(), precision.dim())?;
        if mean.is_empty() {
            return Err(FusionError::EmptyInput("belief dimension must be positive"));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::InvalidArgument("mean has non-finite entries".into()));
        }
        let precision = match precision {
            Precision::Dense(m) => {
                if !m.is_square() {
                    return Err(FusionError::NotPositiveDefinite("matrix is not square".into()));
                }
                let scale = m.amax();
                if !scale.is_finite() {
                    return Err(FusionError::NotPositiveDefinite("non-finite entries".into()));
                }
                let asym = (&m - m.transpose()).amax();
                if asym > SYMMETRY_RTOL * scale {
                    return Err(FusionError::NotPositiveDefinite(format!(
                        "asymmetry {asym:.3e} exceeds tolerance"
                    )));
                }
                Precision::Dense((&m + m.transpose()) * 0.5)
            }
            diag => diag,
        };
        if precision.factor().is_none() {
            return Err(FusionError::NotPositiveDefinite("Cholesky factorization failed".into()));
        }
        Ok(Self { mean, precision })
    }

    pub fn dense(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        Self::new(mean, Precision::Dense(precision))
    }

    pub fn diagonal(mean: DVector<f64>, precision: DVector<f64>) -> Result<Self> {
        Self::new(mean, Precision::Diagonal(precision))
    }

    /// `N(mean, variance · I)` with diagonal storage.
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(FusionError::InvalidArgument(format!(
                "variance must be positive and finite, got {variance}"
            )));
        }
        let d = mean.len();
        Self::new(mean, Precision::isotropic(d, 1.0 / variance))
    }

    pub fn from_covariance(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(covariance)
            .ok_or_else(|| FusionError::NotPositiveDefinite("covariance is not SPD".into()))?;
        Self::dense(mean, chol.inverse())
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &Precision {
        &self.precision
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn kind(&self) -> StorageKind {
        self.precision.kind()
    }

    pub(crate) fn factor(&self) -> SpdFactor {
        self.precision.factor().expect("belief precision was validated as SPD")
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.factor().inverse()
    }

    /// Marginal variances (diagonal of the covariance).
    pub fn variances(&self) -> DVector<f64> {
        self.factor().inverse_diagonal()
    }

    pub fn log_det_precision(&self) -> f64 {
        self.factor().log_det()
    }

    /// Precision-weighted mean, `P μ` (the information vector).
    pub fn information(&self) -> DVector<f64> {
        self.precision.mul_vec(&self.mean)
    }

    /// Copy with dense storage.
    pub fn to_dense(&self) -> GaussianBelief {
        GaussianBelief {
            mean: self.mean.clone(),
            precision: Precision::Dense(self.precision.to_dense()),
        }
    }

    /// Builds a belief from a precision and information vector `h = P μ`,
    /// reporting an indefinite precision as [`FusionError::IndefinitePrecision`].
    pub(crate) fn from_information(precision: Precision, information: &DVector<f64>) -> Result<Self> {
        let precision = match precision {
            Precision::Dense(m) => Precision::Dense((&m + m.transpose()) * 0.5),
            diag => diag,
        };
        let factor = precision.factor_or_indefinite()?;
        let mean = factor.solve(information);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::IndefinitePrecision {
                min_eigenvalue: precision.min_eigenvalue(),
            });
        }
        Ok(GaussianBelief { mean, precision })
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        log_density(self, x)
    }
}

/// A Gaussian density times a positive constant: `exp(log_scale) · N(·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnnormalizedGaussian {
    belief: GaussianBelief,
    log_scale: f64,
}

impl UnnormalizedGaussian {
    pub fn normalized(belief: GaussianBelief) -> Self {
        Self { belief, log_scale: 0.0 }
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn into_belief(self) -> GaussianBelief {
        self.belief
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }
}

fn same_dim(beliefs: &[&GaussianBelief]) -> Result<usize> {
    let first = beliefs.first().ok_or(FusionError::EmptyInput("belief list is empty"))?;
    let d = first.dim();
    for b in beliefs.iter().skip(1) {
        check_dim(d, b.dim())?;
    }
    Ok(d)
}

/// Closed-form `KL(p ‖ q)` between two multivariate normals.
pub fn kl_divergence(p: &GaussianBelief, q: &GaussianBelief) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    if p == q {
        return Ok(0.0);
    }
    let fp = p.factor();
    let fq = q.factor();
    let d = p.dim() as f64;
    let diff = &p.mean - &q.mean;
    let quad = diff.dot(&q.precision.mul_vec(&diff));
    let trace = trace_inv_product(&fp, &fq);
    let kl = 0.5 * (fp.log_det() - fq.log_det() - d + quad + trace);
    Ok(kl.max(0.0))
}

/// Product of Gaussian densities. The result carries the log of the
/// constant `∫ Π N_i`, so that `Π N_i(x) = exp(log_scale) · N(x)`.
pub fn product(beliefs: &[GaussianBelief]) -> Result<UnnormalizedGaussian> {
    let refs: Vec<&GaussianBelief> = beliefs.iter().collect();
    let d = same_dim(&refs)?;
    if beliefs.len() == 1 {
        return Ok(UnnormalizedGaussian::normalized(beliefs[0].clone()));
    }
    let mut precision = beliefs[0].precision.clone();
    let mut info = beliefs[0].information();
    let mut sum_log_det = 0.0;
    let mut sum_quad = 0.0;
    for (i, b) in beliefs.iter().enumerate() {
        if i > 0 {
            precision = precision.add(&b.precision)?;
            info += b.information();
        }
        sum_log_det += b.log_det_precision();
        sum_quad += b.mean.dot(&b.information());
    }
    let fused = GaussianBelief::from_information(precision, &info)?;
    let m = beliefs.len() as f64;
    let d = d as f64;
    let log_scale = -0.5 * d * LN_2PI * (m - 1.0) + 0.5 * sum_log_det
        - 0.5 * fused.log_det_precision()
        - 0.5 * (sum_quad - fused.mean.dot(&info));
    Ok(UnnormalizedGaussian {
        belief: fused,
        log_scale,
    })
}

/// `N(x; μ, P⁻¹)^k = exp(log_scale) · N(x; μ, (kP)⁻¹)` for real `k > 0`.
pub fn power(belief: &GaussianBelief, k: f64) -> Result<UnnormalizedGaussian> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(FusionError::InvalidArgument(format!(
            "power exponent must be positive, got {k}"
        )));
    }
    if k == 1.0 {
        return Ok(UnnormalizedGaussian::normalized(belief.clone()));
    }
    let d = belief.dim() as f64;
    let log_det = belief.log_det_precision();
    let scaled = GaussianBelief::new(belief.mean.clone(), belief.precision.scaled(k))?;
    let log_scale = 0.5 * (1.0 - k) * d * LN_2PI + 0.5 * (k - 1.0) * log_det - 0.5 * d * k.ln();
    Ok(UnnormalizedGaussian {
        belief: scaled,
        log_scale,
    })
}

/// Quotient of a Gaussian by an (unnormalized) Gaussian, renormalized.
/// Fails with [`FusionError::IndefinitePrecision`] when the precision
/// difference is not SPD.
pub fn divide(numerator: &GaussianBelief, denominator: &UnnormalizedGaussian) -> Result<GaussianBelief> {
    let den = &denominator.belief;
    check_dim(numerator.dim(), den.dim())?;
    let precision = numerator.precision.sub(&den.precision)?;
    let info = numerator.information() - den.information();
    GaussianBelief::from_information(precision, &info)
}

pub fn log_density(belief: &GaussianBelief, x: &DVector<f64>) -> Result<f64> {
    check_dim(belief.dim(), x.len())?;
    let diff = x - &belief.mean;
    let quad = diff.dot(&belief.precision.mul_vec(&diff));
    let d = belief.dim() as f64;
    Ok(-0.5 * d * LN_2PI + 0.5 * belief.log_det_precision() - 0.5 * quad)
}

/// Draws `n` samples (rows) from the belief with a seeded ChaCha stream.
pub fn sample(belief: &GaussianBelief, rng_seed: u64, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(FusionError::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let factor = belief.factor();
    let d = belief.dim();
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
        let x = factor.whiten_inverse(&z) + &belief.mean;
        out.row_mut(i).copy_from(&x.transpose());
    }
    Ok(out)
}

/// Differential entropy of a belief, `½(d log 2πe − log|P|)`.
pub fn entropy(belief: &GaussianBelief) -> f64 {
    let d = belief.dim() as f64;
    0.5 * (d * (LN_2PI + 1.0) - belief.log_det_precision())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use std::f64::consts::PI;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
            assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
        }};
    }

    fn scalar(mean: f64, precision: f64) -> GaussianBelief {
        GaussianBelief::diagonal(dvector![mean], dvector![precision]).unwrap()
    }

    #[test]
    fn rejects_non_spd_and_asymmetric() {
        let bad = GaussianBelief::dense(dvector![0.0, 0.0], dmatrix![1.0, 2.0; 2.0, 1.0]);
        assert!(matches!(bad, Err(FusionError::NotPositiveDefinite(_))));
        let asym = GaussianBelief::dense(dvector![0.0, 0.0], dmatrix![2.0, 0.1; 0.0, 2.0]);
        assert!(matches!(asym, Err(FusionError::NotPositiveDefinite(_))));
        assert!(GaussianBelief::diagonal(dvector![0.0], dvector![0.0]).is_err());
        assert!(matches!(
            GaussianBelief::diagonal(dvector![0.0, 1.0], dvector![1.0]),
            Err(FusionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kl_identity_and_scalar_cases() {
        let p = scalar(0.3, 2.0);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        // 1-d closed form: ½(σp²/σq² − 1 + ln σq²/σp²) = ½(0.5 − 1 + ln 2)
        let kl = kl_divergence(&scalar(0.0, 1.0), &scalar(0.0, 0.5)).unwrap();
        assert_close!(kl, 0.5 * (0.5 - 1.0 + 2f64.ln()), 1e-14);
        let kl = kl_divergence(&scalar(1.0, 1.0), &scalar(0.0, 1.0)).unwrap();
        assert_close!(kl, 0.5, 1e-14);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let a = scalar(0.0, 1.0);
        let b = GaussianBelief::isotropic(dvector![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            kl_divergence(&a, &b),
            Err(FusionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn product_examples() {
        let single = product(&[scalar(0.4, 3.0)]).unwrap();
        assert_eq!(single.belief(), &scalar(0.4, 3.0));
        assert_eq!(single.log_scale(), 0.0);

        let p = product(&[scalar(1.0, 3.0), scalar(2.0, 2.0)]).unwrap();
        assert_close!(p.belief().mean()[0], 1.4, 1e-14);
        assert_close!(p.belief().precision().diagonal()[0], 5.0, 0.0);
        // ∫ N(x;1,1/3) N(x;2,1/2) dx = N(1; 2, 1/3 + 1/2)
        let var = 1.0 / 3.0 + 0.5;
        let expected = -0.5 * (2.0 * PI * var).ln() - 0.5 / var;
        assert_close!(p.log_scale(), expected, 1e-13);

        let twin = product(&[scalar(0.0, 1.0), scalar(0.0, 1.0)]).unwrap();
        assert_eq!(twin.belief().mean()[0], 0.0);
        assert_eq!(twin.belief().precision().diagonal()[0], 2.0);
    }

    #[test]
    fn power_examples() {
        let b = GaussianBelief::isotropic(dvector![1.0, -2.0, 0.5], 4.0).unwrap();
        assert_eq!(power(&b, 1.0).unwrap().belief(), &b);
        let p5 = power(&b, 5.0).unwrap();
        assert_eq!(p5.belief().mean(), b.mean());
        let cov = p5.belief().covariance();
        for i in 0..3 {
            assert_close!(cov[(i, i)], 4.0 / 5.0, 1e-14);
        }
        let half = power(&scalar(0.0, 2.0), 0.5).unwrap();
        assert_eq!(half.belief().precision().diagonal()[0], 1.0);
        assert!(power(&b, 0.0).is_err());
        assert!(power(&b, -1.0).is_err());
    }

    #[test]
    fn power_log_scale_matches_squared_density_integral() {
        // ∫ N(x; 0, 1)² dx = 1 / (2√π)
        let p = power(&scalar(0.0, 1.0), 2.0).unwrap();
        assert_close!(p.log_scale(), -(2.0 * PI.sqrt()).ln(), 1e-14);
    }

    #[test]
    fn divide_examples() {
        let q = divide(&scalar(1.4, 5.0), &UnnormalizedGaussian::normalized(scalar(0.0, 1.0))).unwrap();
        assert_close!(q.mean()[0], 1.75, 1e-14);
        assert_eq!(q.precision().diagonal()[0], 4.0);

        let err = divide(&scalar(0.0, 1.0), &UnnormalizedGaussian::normalized(scalar(0.0, 2.0)));
        match err {
            Err(FusionError::IndefinitePrecision { min_eigenvalue }) => {
                assert_close!(min_eigenvalue, -1.0, 1e-14)
            }
            other => panic!("expected IndefinitePrecision, got {other:?}"),
        }

        let b = GaussianBelief::dense(dvector![0.3, -0.7], dmatrix![2.0, 0.4; 0.4, 1.5]).unwrap();
        let prior = GaussianBelief::isotropic(dvector![5.0, 5.0], 1.0).unwrap();
        let near_identity = power(&prior, 1e-300).unwrap();
        let back = divide(&b, &near_identity).unwrap();
        assert!((back.mean() - b.mean()).amax() < 1e-12);
    }

    #[test]
    fn log_density_standard_normal() {
        let b = scalar(0.0, 1.0);
        assert_close!(
            log_density(&b, &dvector![0.0]).unwrap(),
            -0.918_938_533_204_672_7,
            1e-12
        );
        assert_close!(
            log_density(&b, &dvector![1.0]).unwrap(),
            -1.418_938_533_204_672_7,
            1e-12
        );
        assert!(log_density(&b, &dvector![0.0, 1.0]).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let b = GaussianBelief::dense(dvector![1.0, 2.0], dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
        assert_eq!(sample(&b, 9, 50).unwrap(), sample(&b, 9, 50).unwrap());
        assert_ne!(sample(&b, 9, 50).unwrap(), sample(&b, 10, 50).unwrap());
        assert!(sample(&b, 9, 0).is_err());
    }

    #[test]
    fn mixed_kinds_promote_to_dense() {
        let a = GaussianBelief::dense(dvector![0.0, 1.0], dmatrix![2.0, 0.5; 0.5, 2.0]).unwrap();
        let b = GaussianBelief::isotropic(dvector![1.0, 0.0], 0.5).unwrap();
        let p = product(&[a, b]).unwrap();
        assert_eq!(p.belief().kind(), StorageKind::Dense);
        assert_eq!(p.belief().precision().to_dense(), dmatrix![4.0, 0.5; 0.5, 4.0]);
    }

    #[test]
    fn entropy_standard_normal() {
        assert_close!(entropy(&scalar(0.0, 1.0)), 1.418_938_533_204_672_7, 1e-12);
    }
}
