//! Four-dimensional controlled linear-Gaussian system: planar position and
//! velocity, driven towards a target by a fixed linear feedback law.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianBelief;
use crate::rng::RngStream;
use crate::ssm::{ObservationModel, SsmSpec, TransitionKind};
use crate::types::ObsVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lgssm4Config {
    pub kappa: f64,
    pub x_star: [f64; 4],
    /// 2×4 feedback gain, row-major.
    pub gain: [[f64; 4]; 2],
    /// `R = sigma_obs · I₄`.
    pub sigma_obs: f64,
    pub t_len: usize,
    pub mu0: [f64; 4],
    /// `P₀ = p0 · I₄`.
    pub p0: f64,
    /// Multiplies `Q`; 1 is the physical model.
    pub q_scale: f64,
}

impl Default for Lgssm4Config {
    fn default() -> Self {
        Self {
            kappa: 0.04,
            x_star: [140.0, 140.0, 0.0, 0.0],
            gain: [
                [-0.0134, 0.0, -0.0381, 0.0],
                [0.0, -0.0134, 0.0, -0.0381],
            ],
            sigma_obs: 0.1,
            t_len: 100,
            mu0: [0.0; 4],
            p0: 1.0,
            q_scale: 1.0,
        }
    }
}

fn block2(tl: f64, tr: f64, bl: f64, br: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    for i in 0..2 {
        m[(i, i)] = tl;
        m[(i, i + 2)] = tr;
        m[(i + 2, i)] = bl;
        m[(i + 2, i + 2)] = br;
    }
    m
}

impl Lgssm4Config {
    /// `[[I, κI], [0, I]]`
    pub fn a(&self) -> DMatrix<f64> {
        block2(1.0, self.kappa, 0.0, 1.0)
    }

    /// `[0 I]ᵀ`
    pub fn b(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(4, 2);
        b[(2, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        b
    }

    /// `[[κ³/3 I, κ²/2 I], [κ²/2 I, κ I]]`
    pub fn q(&self) -> DMatrix<f64> {
        let k = self.kappa;
        block2(k.powi(3) / 3.0, k * k / 2.0, k * k / 2.0, k) * self.q_scale
    }

    pub fn l(&self) -> DMatrix<f64> {
        DMatrix::from_fn(2, 4, |i, j| self.gain[i][j])
    }

    pub fn c(&self) -> DMatrix<f64> {
        DMatrix::identity(4, 4)
    }

    pub fn r(&self) -> DMatrix<f64> {
        DMatrix::identity(4, 4) * self.sigma_obs
    }

    pub fn x_star(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_star)
    }

    pub fn prior(&self) -> Result<GaussianBelief> {
        GaussianBelief::isotropic(DVector::from_column_slice(&self.mu0), self.p0)
    }

    /// Spectral radius of the closed-loop matrix `A + B L`.
    pub fn closed_loop_spectral_radius(&self) -> f64 {
        let m = self.a() + self.b() * self.l();
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// The true (controlled) model, or the misspecified one that drops the
/// control term and keeps `N(A x, Q)`.
pub fn lgssm4_spec(cfg: &Lgssm4Config, misspecified: bool) -> Result<SsmSpec> {
    let rho = cfg.closed_loop_spectral_radius();
    if !(rho < 1.0) {
        return Err(Error::InvalidModel(format!(
            "closed-loop spectral radius {rho} is not below 1"
        )));
    }
    let transition = if misspecified {
        TransitionKind::LinearGaussian { a: cfg.a(), q: cfg.q() }
    } else {
        TransitionKind::ControlledLinearGaussian {
            a: cfg.a(),
            b: cfg.b(),
            l: cfg.l(),
            x_star: cfg.x_star(),
            q: cfg.q(),
        }
    };
    SsmSpec::new(cfg.prior()?, transition, ObservationModel::new(cfg.c(), cfg.r())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgssmData {
    /// `x_0, …, x_T`
    pub truth: Vec<DVector<f64>>,
    /// `y_1, …, y_T`
    pub observations: Vec<ObsVec>,
}

/// Simulates the controlled system. Degenerate (zero) `Q`, `R` or `P₀` are
/// allowed here.
pub fn simulate_lgssm4(cfg: &Lgssm4Config, stream: RngStream) -> Result<LgssmData> {
    let mut rng = stream.rng();
    let (a, b, l, x_star, c) = (cfg.a(), cfg.b(), cfg.l(), cfg.x_star(), cfg.c());
    let closed = &a + &b * &l;
    let q_sqrt = GaussianBelief::new(DVector::zeros(4), cfg.q())?.sqrt_factor();
    let r_sqrt = GaussianBelief::new(DVector::zeros(4), cfg.r())?.sqrt_factor();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_iterator(4, (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)))
    };
    let mut x = crate::gaussian::sample_gaussian_with(&cfg.prior()?, &mut rng)?.into_inner();
    let mut truth = Vec::with_capacity(cfg.t_len + 1);
    let mut observations = Vec::with_capacity(cfg.t_len);
    truth.push(x.clone());
    for _ in 0..cfg.t_len {
        x = &closed * &x - &b * (&l * &x_star) + &q_sqrt * draw(&mut rng);
        observations.push(ObsVec::new(&c * &x + &r_sqrt * draw(&mut rng))?);
        truth.push(x.clone());
    }
    Ok(LgssmData {
        truth,
        observations,
    })
}
