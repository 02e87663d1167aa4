//! Dense Gaussian densities and sampling.
//!
//! Every density here carries its full normalizing constant. All solves go
//! through a Cholesky factor; nothing is inverted explicitly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::StateVec;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Lower Cholesky factor of a positive definite matrix, with its log
/// determinant cached.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl CholeskyFactor {
    pub fn new(m: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim(context, m.nrows(), m.ncols()));
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or(Error::CholeskyFailure { context })?;
        let lower = chol.l();
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::CholeskyFailure { context });
        }
        Ok(Self { lower, log_det })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solves `M z = b` via two triangular solves.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let z = self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.lower
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Solves `M X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.lower
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `rᵀ M⁻¹ r` for a residual `r`.
    pub fn mahalanobis_sq(&self, residual: &DVector<f64>) -> f64 {
        let z = self
            .lower
            .solve_lower_triangular(residual)
            .expect("cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    /// Log density of `N(residual; 0, M)`.
    pub fn log_density(&self, residual: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        -0.5 * (d * LN_2PI + self.log_det + self.mahalanobis_sq(residual))
    }
}

/// Mean and covariance of a Gaussian law. The covariance is symmetrized on
/// construction and checked to be positive semi-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::dim("belief mean", 1, 0));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::dim("belief covariance", d, cov.nrows()));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gaussian belief"));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL * scale.max(1.0) {
            return Err(Error::InvalidModel(format!(
                "covariance not symmetric (max asymmetry {asym:e})"
            )));
        }
        let cov = symmetrize(&cov);
        let eig = cov.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -PSD_TOL * max.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::CholeskyFailure {
                context: "belief covariance is indefinite",
            });
        }
        Ok(Self { mean, cov })
    }

    /// Skips the eigenvalue check; used inside filter recursions where the
    /// covariance comes out of a congruence or Schur complement of PSD terms.
    pub(crate) fn from_parts_unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            mean,
            cov: symmetrize(&cov),
        }
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            cov: DMatrix::identity(d, d),
        }
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.cov.clone().symmetric_eigen().eigenvalues.min()
    }

    /// A square root `S` with `S Sᵀ = cov`. Cholesky when the covariance is
    /// definite, otherwise the symmetric eigen square root with round-off
    /// negatives clamped to zero.
    pub fn sqrt_factor(&self) -> DMatrix<f64> {
        if let Some(chol) = self.cov.clone().cholesky() {
            return chol.l();
        }
        let eig = self.cov.clone().symmetric_eigen();
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
    }
}

/// `log N(x; mean, cov)` including the `(2π)^{-d/2}` constant.
pub fn gaussian_logpdf(x: &DVector<f64>, belief: &GaussianBelief) -> Result<f64> {
    if x.len() != belief.dim() {
        return Err(Error::dim("gaussian_logpdf", belief.dim(), x.len()));
    }
    let factor = CholeskyFactor::new(belief.cov(), "gaussian_logpdf covariance")?;
    Ok(factor.log_density(&(x - belief.mean())))
}

/// Draws `mean + S z` with `z` standard normal from the given stream.
pub fn sample_gaussian(belief: &GaussianBelief, stream: RngStream) -> Result<StateVec> {
    let mut rng = stream.rng();
    sample_gaussian_with(belief, &mut rng)
}

pub(crate) fn sample_gaussian_with<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    rng: &mut R,
) -> Result<StateVec> {
    let s = belief.sqrt_factor();
    let z = DVector::from_iterator(belief.dim(), (0..belief.dim()).map(|_| rng.sample(StandardNormal)));
    StateVec::new(belief.mean() + s * z)
}

/// `log N(x; mean, variance)` for scalars.
pub fn normal_logpdf(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * ((2.0 * PI * variance).ln() + r * r / variance)
}
