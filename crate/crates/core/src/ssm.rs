//! The model triple: prior, transition kernel and observation likelihood.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CholeskyFactor, GaussianBelief};
use crate::models::lorenz;
use crate::types::{ObsVec, StateVec};

/// Lorenz 63 parameters `(S, R, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub s: f64,
    pub r: f64,
    pub b: f64,
}

impl LorenzParams {
    pub const STANDARD: LorenzParams = LorenzParams {
        s: 10.0,
        r: 28.0,
        b: 8.0 / 3.0,
    };

    pub fn scaled(self, k: f64) -> Self {
        Self {
            s: self.s * k,
            r: self.r * k,
            b: self.b * k,
        }
    }

    pub fn with_b_offset(self, eps: f64) -> Self {
        Self {
            b: self.b + eps,
            ..self
        }
    }

    pub fn is_standard(&self) -> bool {
        *self == Self::STANDARD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionKind {
    /// `x_t ~ N(A x_{t-1}, Q)`
    LinearGaussian { a: DMatrix<f64>, q: DMatrix<f64> },
    /// `x_t ~ N(A x_{t-1} + B L (x_{t-1} - x_star), Q)`
    ControlledLinearGaussian {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        l: DMatrix<f64>,
        x_star: DVector<f64>,
        q: DMatrix<f64>,
    },
    /// `n0` Euler–Maruyama substeps of the stochastic Lorenz 63 system.
    /// `noise_scale` multiplies the `√h` diffusion; 1 is the physical model.
    Lorenz63 {
        theta: LorenzParams,
        h: f64,
        n0: usize,
        noise_scale: f64,
    },
}

/// An affine Gaussian kernel `N(F x + c, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineKernel {
    pub f: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub q: DMatrix<f64>,
}

impl TransitionKind {
    pub fn state_dim(&self) -> usize {
        match self {
            TransitionKind::LinearGaussian { a, .. }
            | TransitionKind::ControlledLinearGaussian { a, .. } => a.nrows(),
            TransitionKind::Lorenz63 { .. } => 3,
        }
    }

    /// The kernel as `N(F x + c, Q)`, if it is linear-Gaussian.
    pub fn affine(&self) -> Option<AffineKernel> {
        match self {
            TransitionKind::LinearGaussian { a, q } => Some(AffineKernel {
                f: a.clone(),
                offset: DVector::zeros(a.nrows()),
                q: q.clone(),
            }),
            TransitionKind::ControlledLinearGaussian { a, b, l, x_star, q } => {
                let bl = b * l;
                Some(AffineKernel {
                    f: a + &bl,
                    offset: -(&bl * x_star),
                    q: q.clone(),
                })
            }
            TransitionKind::Lorenz63 { .. } => None,
        }
    }

    /// Deterministic part of one kernel application for linear kernels.
    pub fn mean(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.affine().map(|k| &k.f * x + &k.offset)
    }
}

/// Gaussian observation model `y = C x + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    c: DMatrix<f64>,
    rm: DMatrix<f64>,
    factor: CholeskyFactor,
}

impl PartialEq for ObservationModel {
    fn eq(&self, other: &Self) -> bool {
        self.c == other.c && self.rm == other.rm
    }
}

impl ObservationModel {
    pub fn new(c: DMatrix<f64>, rm: DMatrix<f64>) -> Result<Self> {
        if rm.nrows() != c.nrows() || !rm.is_square() {
            return Err(Error::dim("observation covariance", c.nrows(), rm.nrows()));
        }
        let factor = CholeskyFactor::new(&rm, "observation covariance")?;
        Ok(Self { c, rm, factor })
    }

    /// Observes the coordinates listed in `dims` (0-based) with noise
    /// variance `sigma2`.
    pub fn selection(state_dim: usize, dims: &[usize], sigma2: f64) -> Result<Self> {
        let mut c = DMatrix::zeros(dims.len(), state_dim);
        for (row, &col) in dims.iter().enumerate() {
            if col >= state_dim {
                return Err(Error::dim("observed coordinate", state_dim, col + 1));
            }
            c[(row, col)] = 1.0;
        }
        Self::new(c, DMatrix::identity(dims.len(), dims.len()) * sigma2)
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn rm(&self) -> &DMatrix<f64> {
        &self.rm
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    /// `log g(x) = log N(y; C x, R)` with the full normalizing constant.
    pub fn log_likelihood(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.factor.log_density(&(y - &self.c * x))
    }

    /// The constant `½(d_y log 2π + log det R)` dropped when the likelihood is
    /// taken up to proportionality.
    pub fn log_normalizer(&self) -> f64 {
        0.5 * (self.obs_dim() as f64 * crate::gaussian::LN_2PI + self.factor.log_det())
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R) -> Result<ObsVec> {
        let z = DVector::from_iterator(self.obs_dim(), (0..self.obs_dim()).map(|_| rng.sample(StandardNormal)));
        ObsVec::new(&self.c * x + self.factor.lower() * z)
    }
}

/// The triple `(π₀, K, g)`.
#[derive(Debug, Clone)]
pub struct SsmSpec {
    pub prior: GaussianBelief,
    pub transition: TransitionKind,
    pub observation: ObservationModel,
    noise_sqrt: Option<DMatrix<f64>>,
}

impl SsmSpec {
    pub fn new(
        prior: GaussianBelief,
        transition: TransitionKind,
        observation: ObservationModel,
    ) -> Result<Self> {
        let d = transition.state_dim();
        if prior.dim() != d {
            return Err(Error::dim("prior", d, prior.dim()));
        }
        if observation.state_dim() != d {
            return Err(Error::dim("observation matrix columns", d, observation.state_dim()));
        }
        let noise_sqrt = match &transition {
            TransitionKind::LinearGaussian { a, q } => {
                check_square(a, d, "A")?;
                check_square(q, d, "Q")?;
                Some(CholeskyFactor::new(q, "transition covariance Q")?.lower().clone())
            }
            TransitionKind::ControlledLinearGaussian { a, b, l, x_star, q } => {
                check_square(a, d, "A")?;
                check_square(q, d, "Q")?;
                if b.nrows() != d || l.ncols() != d || b.ncols() != l.nrows() {
                    return Err(Error::InvalidModel("control matrices B, L have inconsistent shapes".into()));
                }
                if x_star.len() != d {
                    return Err(Error::dim("control target", d, x_star.len()));
                }
                Some(CholeskyFactor::new(q, "transition covariance Q")?.lower().clone())
            }
            TransitionKind::Lorenz63 { h, n0, noise_scale, .. } => {
                if !(*h > 0.0) || *n0 == 0 || !(*noise_scale >= 0.0) {
                    return Err(Error::InvalidModel("Lorenz step needs h > 0, n0 ≥ 1, noise ≥ 0".into()));
                }
                None
            }
        };
        Ok(Self {
            prior,
            transition,
            observation,
            noise_sqrt,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.state_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.obs_dim()
    }

    /// Same prior and kernel, different observation model.
    pub fn with_observation(&self, observation: ObservationModel) -> Result<Self> {
        Self::new(self.prior.clone(), self.transition.clone(), observation)
    }

    /// Draws `x_t ~ K(x_{t-1}, ·)` in place.
    pub fn propagate<R: Rng + ?Sized>(&self, x: &mut DVector<f64>, rng: &mut R) -> Result<()> {
        match &self.transition {
            TransitionKind::Lorenz63 {
                theta,
                h,
                n0,
                noise_scale,
            } => {
                let mut s = [x[0], x[1], x[2]];
                lorenz::euler_maruyama(&mut s, theta, *h, *n0, *noise_scale, rng)?;
                x.copy_from_slice(&s);
                Ok(())
            }
            kind => {
                let mean = kind.mean(x).expect("linear kernel");
                let sqrt = self.noise_sqrt.as_ref().expect("linear kernel has a noise factor");
                let d = x.len();
                let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample(StandardNormal)));
                *x = mean + sqrt * z;
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("propagated state"));
                }
                Ok(())
            }
        }
    }

    pub fn log_likelihood(&self, x: &DVector<f64>, y: &ObsVec) -> f64 {
        self.observation.log_likelihood(x, y)
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StateVec> {
        crate::gaussian::sample_gaussian_with(&self.prior, rng)
    }
}

fn check_square(m: &DMatrix<f64>, d: usize, _name: &'static str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::dim("transition matrix", d, m.nrows()));
    }
    Ok(())
}
