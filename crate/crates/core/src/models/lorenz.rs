//! Stochastic Lorenz 63 with Euler–Maruyama discretization and subsampled,
//! partial Gaussian observations.
//!
//! The drift is the standard chaotic Lorenz field
//! `(S(x₂ − x₁), x₁(R − x₃) − x₂, x₁x₂ − B x₃)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianBelief;
use crate::rng::RngStream;
use crate::ssm::{LorenzParams, ObservationModel, SsmSpec, TransitionKind};
use crate::types::{ObsVec, StateVec};

/// States beyond this magnitude are treated as a blown-up trajectory.
const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lorenz63Config {
    pub theta: LorenzParams,
    /// Euler step.
    pub h: f64,
    /// Euler steps between observations.
    pub n0: usize,
    /// Number of observations.
    pub t_len: usize,
    /// Observation noise variance.
    pub sigma2: f64,
    /// Observed coordinates, 0-based.
    pub obs_dims: Vec<usize>,
    pub prior_mean: [f64; 3],
    pub prior_var: f64,
    /// Scale on the `√h` diffusion; 1 for the physical model, 0 for the
    /// deterministic skeleton.
    pub noise_scale: f64,
}

impl Default for Lorenz63Config {
    fn default() -> Self {
        Self {
            theta: LorenzParams::STANDARD,
            h: 1e-3,
            n0: 40,
            t_len: 500,
            sigma2: 1.0,
            obs_dims: vec![0],
            prior_mean: [1.0, 1.0, 1.0],
            prior_var: 20.0,
            noise_scale: 1.0,
        }
    }
}

impl Lorenz63Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || self.n0 == 0 {
            return Err(Error::InvalidModel("Lorenz config needs h > 0 and n0 ≥ 1".into()));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::InvalidModel("observation variance must be non-negative".into()));
        }
        if !(self.obs_dims == [0] || self.obs_dims == [0, 1]) {
            return Err(Error::InvalidModel(format!(
                "observed coordinates must be {{1}} or {{1,2}}, got {:?}",
                self.obs_dims.iter().map(|d| d + 1).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn is_chaotic_regime(&self) -> bool {
        self.theta.is_standard()
    }

    pub fn prior(&self) -> Result<GaussianBelief> {
        GaussianBelief::isotropic(DVector::from_column_slice(&self.prior_mean), self.prior_var)
    }

    pub fn observation(&self) -> Result<ObservationModel> {
        ObservationModel::selection(3, &self.obs_dims, self.sigma2)
    }

    /// Filtering model with kernel parameters `theta` (which may differ from
    /// the generating `self.theta`).
    pub fn spec_with(&self, theta: LorenzParams) -> Result<SsmSpec> {
        self.validate()?;
        SsmSpec::new(
            self.prior()?,
            TransitionKind::Lorenz63 {
                theta,
                h: self.h,
                n0: self.n0,
                noise_scale: self.noise_scale,
            },
            self.observation()?,
        )
    }

    pub fn spec(&self) -> Result<SsmSpec> {
        self.spec_with(self.theta)
    }
}

/// Lorenz 63 drift.
#[inline]
pub fn lorenz_drift(x: &[f64; 3], theta: &LorenzParams) -> [f64; 3] {
    [
        theta.s * (x[1] - x[0]),
        x[0] * (theta.r - x[2]) - x[1],
        x[0] * x[1] - theta.b * x[2],
    ]
}

/// `n0` steps of `x ← x + h f(x) + noise_scale·√h u`, `u ~ N(0, I₃)`.
pub fn euler_maruyama<R: Rng + ?Sized>(
    x: &mut [f64; 3],
    theta: &LorenzParams,
    h: f64,
    n0: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<()> {
    let sd = noise_scale * h.sqrt();
    for iteration in 1..=n0 {
        let f = lorenz_drift(x, theta);
        for i in 0..3 {
            x[i] += h * f[i];
        }
        if sd != 0.0 {
            for xi in x.iter_mut() {
                let u: f64 = rng.sample(StandardNormal);
                *xi += sd * u;
            }
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::DivergedState { iteration });
        }
    }
    Ok(())
}

/// One kernel draw: `n0` Euler–Maruyama substeps from `x`.
pub fn lorenz_transition(x: &StateVec, cfg: &Lorenz63Config, stream: RngStream) -> Result<StateVec> {
    if x.dim() != 3 {
        return Err(Error::dim("lorenz state", 3, x.dim()));
    }
    let mut s = [x[0], x[1], x[2]];
    euler_maruyama(&mut s, &cfg.theta, cfg.h, cfg.n0, cfg.noise_scale, &mut stream.rng())?;
    StateVec::from_slice(&s)
}

fn selection_matrix(dims: &[usize]) -> nalgebra::DMatrix<f64> {
    let mut c = nalgebra::DMatrix::zeros(dims.len(), 3);
    for (row, &col) in dims.iter().enumerate() {
        c[(row, col)] = 1.0;
    }
    c
}

/// Simulated Lorenz data.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzData {
    pub x0: DVector<f64>,
    /// States at observation times `t·n0`, `t = 1..=T`.
    pub truth: Vec<DVector<f64>>,
    pub observations: Vec<ObsVec>,
}

/// Draws `x₀` from the prior, runs the SDE and observes every `n0` steps.
pub fn simulate_lorenz(cfg: &Lorenz63Config, stream: RngStream) -> Result<LorenzData> {
    cfg.validate()?;
    let mut rng = stream.rng();
    let prior = cfg.prior()?;
    let c = selection_matrix(&cfg.obs_dims);
    let x0 = crate::gaussian::sample_gaussian_with(&prior, &mut rng)?.into_inner();
    let mut s = [x0[0], x0[1], x0[2]];
    let mut truth = Vec::with_capacity(cfg.t_len);
    let mut observations = Vec::with_capacity(cfg.t_len);
    let sd = cfg.sigma2.sqrt();
    for t in 0..cfg.t_len {
        euler_maruyama(&mut s, &cfg.theta, cfg.h, cfg.n0, cfg.noise_scale, &mut rng).map_err(
            |e| match e {
                Error::DivergedState { iteration } => Error::DivergedState {
                    iteration: t * cfg.n0 + iteration,
                },
                other => other,
            },
        )?;
        let x = DVector::from_column_slice(&s);
        let noise = DVector::from_iterator(
            c.nrows(),
            (0..c.nrows()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)),
        );
        observations.push(ObsVec::new(&c * &x + noise)?);
        truth.push(x);
    }
    Ok(LorenzData {
        x0,
        truth,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const STD: LorenzParams = LorenzParams::STANDARD;

    #[test]
    fn drift_examples() {
        assert_eq!(lorenz_drift(&[0.0; 3], &STD), [0.0; 3]);
        let f = lorenz_drift(&[1.0, 1.0, 1.0], &STD);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 26.0);
        assert!((f[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
        let c = (STD.b * (STD.r - 1.0)).sqrt();
        let f = lorenz_drift(&[c, c, STD.r - 1.0], &STD);
        assert!(f.iter().all(|v| v.abs() < 1e-12), "{f:?}");
        let f = lorenz_drift(&[-c, -c, STD.r - 1.0], &STD);
        assert!(f.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn one_noiseless_substep() {
        let cfg = Lorenz63Config { n0: 1, noise_scale: 0.0, ..Default::default() };
        let x = lorenz_transition(&StateVec::from_slice(&[1.0; 3]).unwrap(), &cfg, RngStream::new(0, 0)).unwrap();
        assert_eq!(x[0], 1.0);
        assert!((x[1] - 1.026).abs() < 1e-15);
        assert!((x[2] - 0.998_333_333_333_333_3).abs() < 1e-15);
    }

    #[test]
    fn small_step_is_continuous() {
        let x = StateVec::from_slice(&[3.0, -2.0, 20.0]).unwrap();
        let mut prev = f64::INFINITY;
        for h in [1e-2, 1e-4, 1e-6, 1e-8] {
            let cfg = Lorenz63Config { h, n0: 5, noise_scale: 0.0, ..Default::default() };
            let y = lorenz_transition(&x, &cfg, RngStream::new(0, 0)).unwrap();
            let d = (y.as_vector() - x.as_vector()).norm();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn substep_covariance_is_h_identity() {
        let cfg = Lorenz63Config { n0: 1, ..Default::default() };
        let x = [2.0, -1.0, 15.0];
        let mean_step: Vec<f64> = {
            let f = lorenz_drift(&x, &STD);
            (0..3).map(|i| x[i] + cfg.h * f[i]).collect()
        };
        let mut rng = RngStream::new(3, 1).rng();
        let n = 100_000;
        let mut cov = [[0.0f64; 3]; 3];
        for _ in 0..n {
            let mut s = x;
            euler_maruyama(&mut s, &STD, cfg.h, 1, 1.0, &mut rng).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (s[i] - mean_step[i]) * (s[j] - mean_step[j]);
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let v = cov[i][j] / n as f64;
                if i == j {
                    assert!((v / cfg.h - 1.0).abs() < 0.03, "var {v}");
                } else {
                    assert!(v.abs() < 0.03 * cfg.h, "cov {v}");
                }
            }
        }
    }

    #[test]
    fn divergence_reported() {
        let wild = LorenzParams { s: 1e6, r: 1e6, b: 1.0 };
        let mut s = [1.0, 2.0, 3.0];
        let r = euler_maruyama(&mut s, &wild, 1.0, 100, 0.0, &mut RngStream::new(0, 0).rng());
        assert!(matches!(r, Err(Error::DivergedState { .. })));
    }

    #[test]
    fn noiseless_observations_equal_truth() {
        let cfg = Lorenz63Config { t_len: 20, sigma2: 0.0, obs_dims: vec![0, 1], ..Default::default() };
        let d = simulate_lorenz(&cfg, RngStream::new(1, 0)).unwrap();
        for (x, y) in d.truth.iter().zip(&d.observations) {
            assert_eq!((x[0], x[1]), (y[0], y[1]));
        }
    }

    #[test]
    fn two_dim_observation_operator() {
        let cfg = Lorenz63Config { obs_dims: vec![0, 1], ..Default::default() };
        let spec = cfg.spec().unwrap();
        assert_eq!(spec.obs_dim(), 2);
        assert_eq!(
            spec.observation.c(),
            &nalgebra::dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0]
        );
        assert!(Lorenz63Config { obs_dims: vec![2], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn attractor_stays_bounded() {
        let cfg = Lorenz63Config::default();
        assert!(cfg.is_chaotic_regime());
        for seed in 0..20 {
            let d = simulate_lorenz(&cfg, RngStream::new(seed, 0)).unwrap();
            let m = d.truth.iter().map(|x| x.amax()).fold(0.0, f64::max);
            assert!(m < 100.0, "seed {seed}: {m}");
        }
    }

    #[test]
    fn deterministic_skeleton_bounded() {
        let cfg = Lorenz63Config { noise_scale: 0.0, ..Default::default() };
        let prior = cfg.prior().unwrap();
        let mut rng = RngStream::new(99, 0).rng();
        for _ in 0..20 {
            let x0 = crate::gaussian::sample_gaussian_with(&prior, &mut rng).unwrap();
            let mut s = [x0[0], x0[1], x0[2]];
            for _ in 0..20 {
                euler_maruyama(&mut s, &STD, cfg.h, 1000, 0.0, &mut rng).unwrap();
                assert!(s[0].abs() < 50.0 && s[1].abs() < 50.0 && s[2].abs() < 80.0, "{s:?}");
            }
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let cfg = Lorenz63Config { t_len: 30, ..Default::default() };
        let a = simulate_lorenz(&cfg, RngStream::new(4, 2)).unwrap();
        let b = simulate_lorenz(&cfg, RngStream::new(4, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatch_constructors() {
        let tilde = STD.with_b_offset(11.0 / 5.0);
        assert_eq!((tilde.s, tilde.r), (10.0, 28.0));
        assert!((tilde.b - (8.0 / 3.0 + 2.2)).abs() < 1e-15);
        let hat = STD.scaled(2.0);
        assert_eq!((hat.s, hat.r, hat.b), (20.0, 56.0, 16.0 / 3.0));
    }
}
