//! Nudging transformations `α_t(x, γ)`.
//!
//! The gradient-ascent family moves a state along `∇ log g_t`:
//! `α_t(x, γ) = x + γ ∇ log g_t(x)`. For a Gaussian likelihood with gradient
//! Lipschitz constant `L`, any `γ ∈ [0, 2/L)` does not decrease `g_t`, and for
//! a linear observation model the map is affine, `α(x) = M x + b` with
//! `M = I − γ CᵀR⁻¹C` and `b = γ CᵀR⁻¹ y`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::CholeskyFactor;
use crate::ssm::ObservationModel;
use crate::types::{ObsVec, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NudgeFamily {
    GradientAscent,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSchedule {
    Constant(f64),
    /// `γ_t` for `t = 1..=T`; steps past the end reuse the last value.
    PerStep(Vec<f64>),
}

impl StepSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            StepSchedule::Constant(g) => *g,
            StepSchedule::PerStep(gs) => {
                let i = t.saturating_sub(1).min(gs.len().saturating_sub(1));
                gs.get(i).copied().unwrap_or(0.0)
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            StepSchedule::Constant(g) => vec![*g],
            StepSchedule::PerStep(gs) => gs.clone(),
        }
    }
}

/// Which nudging family to use, its step sizes and the Lipschitz constant of
/// `∇ log g_t` that bounds them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NudgeConfig {
    pub family: NudgeFamily,
    pub gamma: StepSchedule,
    pub lipschitz: f64,
}

impl NudgeConfig {
    pub fn identity() -> Self {
        Self {
            family: NudgeFamily::Identity,
            gamma: StepSchedule::Constant(0.0),
            lipschitz: 1.0,
        }
    }

    /// Gradient ascent with constant `γ`, validated against `[0, 2/L)`.
    pub fn gradient_ascent(gamma: f64, lipschitz: f64) -> Result<Self> {
        let cfg = Self {
            family: NudgeFamily::GradientAscent,
            gamma: StepSchedule::Constant(gamma),
            lipschitz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Gradient ascent with `L` taken from the observation model.
    pub fn for_observation(gamma: f64, obs: &ObservationModel) -> Result<Self> {
        Self::gradient_ascent(gamma, lipschitz_constant(obs.c(), obs.rm())?)
    }

    pub fn upper_bound(&self) -> f64 {
        2.0 / self.lipschitz
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == NudgeFamily::Identity {
            return Ok(());
        }
        if !(self.lipschitz > 0.0) || !self.lipschitz.is_finite() {
            return Err(Error::InvalidModel(format!(
                "Lipschitz constant must be positive, got {}",
                self.lipschitz
            )));
        }
        let upper = self.upper_bound();
        for g in self.gamma.values() {
            if !(0.0..upper).contains(&g) {
                return Err(Error::InvalidStepSize { gamma: g, upper });
            }
            if (g * self.lipschitz - 1.0).abs() < 1e-12 {
                log::warn!(
                    "step size {g} equals 1/L: for isotropic observations every particle is mapped to the likelihood maximiser"
                );
            }
        }
        Ok(())
    }

    /// Effective step at time `t` (zero for the identity family).
    pub fn gamma_at(&self, t: usize) -> f64 {
        match self.family {
            NudgeFamily::Identity => 0.0,
            NudgeFamily::GradientAscent => self.gamma.at(t),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.family == NudgeFamily::Identity
            || matches!(self.gamma, StepSchedule::Constant(g) if g == 0.0)
    }
}

/// `∇ log N(y; C x, R) = CᵀR⁻¹(y − C x)`.
pub fn grad_log_likelihood(
    x: &StateVec,
    y: &ObsVec,
    c: &DMatrix<f64>,
    rm: &DMatrix<f64>,
) -> Result<StateVec> {
    if c.ncols() != x.dim() {
        return Err(Error::dim("grad_log_likelihood state", c.ncols(), x.dim()));
    }
    if c.nrows() != y.dim() {
        return Err(Error::dim("grad_log_likelihood observation", c.nrows(), y.dim()));
    }
    let factor = CholeskyFactor::new(rm, "observation covariance")?;
    let residual = y.as_vector() - c * x.as_vector();
    StateVec::new(c.transpose() * factor.solve(&residual))
}

/// `‖CᵀR⁻¹C‖₂`, the Lipschitz constant of `∇ log g`.
pub fn lipschitz_constant(c: &DMatrix<f64>, rm: &DMatrix<f64>) -> Result<f64> {
    let info = information_matrix(c, rm)?;
    Ok(info.symmetric_eigen().eigenvalues.max().max(0.0))
}

/// `CᵀR⁻¹C`, symmetrized.
fn information_matrix(c: &DMatrix<f64>, rm: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rm.nrows() != c.nrows() {
        return Err(Error::dim("observation covariance", c.nrows(), rm.nrows()));
    }
    let factor = CholeskyFactor::new(rm, "observation covariance")?;
    let info = c.transpose() * factor.solve_matrix(c);
    Ok((&info + info.transpose()) * 0.5)
}

/// `x + γ ∇ log g(x)`. Returns `x` unchanged when `γ = 0`.
pub fn apply_nudge(x: &StateVec, cfg: &NudgeConfig, grad: &StateVec) -> Result<StateVec> {
    apply_nudge_at(x, cfg, grad, 1)
}

/// [`apply_nudge`] with the step taken from the schedule at time `t`.
pub fn apply_nudge_at(x: &StateVec, cfg: &NudgeConfig, grad: &StateVec, t: usize) -> Result<StateVec> {
    let gamma = cfg.gamma_at(t);
    if gamma == 0.0 {
        return Ok(x.clone());
    }
    if grad.dim() != x.dim() {
        return Err(Error::dim("apply_nudge gradient", x.dim(), grad.dim()));
    }
    StateVec::new(x.as_vector() + grad.as_vector() * gamma)
        .map_err(|_| Error::NonFinite("nudged state"))
}

/// The affine map `α(x) = M x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineNudge {
    pub m: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineNudge {
    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
            b: DVector::zeros(d),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x + &self.b
    }
}

/// Affine form of gradient-ascent nudging for `y = C x + v`, `v ~ N(0, R)`.
pub fn affine_nudge_gaussian(
    c: &DMatrix<f64>,
    rm: &DMatrix<f64>,
    y: &ObsVec,
    gamma: f64,
) -> Result<AffineNudge> {
    if c.nrows() != y.dim() {
        return Err(Error::dim("affine nudge observation", c.nrows(), y.dim()));
    }
    let d = c.ncols();
    if gamma == 0.0 {
        return Ok(AffineNudge::identity(d));
    }
    let factor = CholeskyFactor::new(rm, "observation covariance")?;
    let info = c.transpose() * factor.solve_matrix(c);
    let info = (&info + info.transpose()) * 0.5;
    let upper = 2.0 / info.clone().symmetric_eigen().eigenvalues.max();
    if !(0.0..upper).contains(&gamma) {
        return Err(Error::InvalidStepSize { gamma, upper });
    }
    Ok(AffineNudge {
        m: DMatrix::identity(d, d) - info * gamma,
        b: c.transpose() * factor.solve(y.as_vector()) * gamma,
    })
}

/// `α⁻¹(x) = M⁻¹(x − b)`.
pub fn invert_affine_nudge(n: &AffineNudge, x: &StateVec) -> Result<StateVec> {
    if x.dim() != n.b.len() {
        return Err(Error::dim("invert_affine_nudge", n.b.len(), x.dim()));
    }
    let svd = n.m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax.max(1.0)) {
        return Err(Error::NotInvertible);
    }
    let lu = n.m.clone().lu();
    let sol = lu.solve(&(x.as_vector() - &n.b)).ok_or(Error::NotInvertible)?;
    StateVec::new(sol)
}

/// `∇ log g` for a fixed observation model, with `CᵀR⁻¹` precomputed.
#[derive(Debug, Clone)]
pub struct LikelihoodGradient {
    c: DMatrix<f64>,
    gain: DMatrix<f64>,
}

impl LikelihoodGradient {
    pub fn new(obs: &ObservationModel) -> Self {
        let gain = obs.factor().solve_matrix(obs.c()).transpose();
        Self {
            c: obs.c().clone(),
            gain,
        }
    }

    pub fn at(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.gain * (y - &self.c * x)
    }

    /// `x ← x + γ ∇ log g(x)`, in place. No-op for `γ = 0`.
    pub fn nudge_in_place(&self, x: &mut DVector<f64>, y: &DVector<f64>, gamma: f64) {
        if gamma != 0.0 {
            let g = self.at(x, y);
            x.axpy(gamma, &g, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{gaussian_logpdf, GaussianBelief};
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sv(v: &[f64]) -> StateVec {
        StateVec::from_slice(v).unwrap()
    }

    fn ov(v: &[f64]) -> ObsVec {
        ObsVec::from_slice(v).unwrap()
    }

    fn loglik(x: &DVector<f64>, y: &ObsVec, c: &DMatrix<f64>, rm: &DMatrix<f64>) -> f64 {
        let b = GaussianBelief::new(c * x, rm.clone()).unwrap();
        gaussian_logpdf(y.as_vector(), &b).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.5
    }

    #[test]
    fn gradient_scalar() {
        let g = grad_log_likelihood(&sv(&[0.0]), &ov(&[2.0]), &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert_eq!(g[0], 2.0);
    }

    #[test]
    fn gradient_zero_matrix() {
        let g = grad_log_likelihood(&sv(&[1.0, -3.0]), &ov(&[2.0]), &dmatrix![0.0, 0.0], &dmatrix![2.0]).unwrap();
        assert_eq!(g.as_vector(), &dvector![0.0, 0.0]);
    }

    #[test]
    fn gradient_singular_covariance() {
        let r = grad_log_likelihood(&sv(&[0.0]), &ov(&[1.0]), &dmatrix![1.0], &dmatrix![0.0]);
        assert!(matches!(r, Err(Error::CholeskyFailure { .. })));
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(lipschitz_constant(&dmatrix![1.0], &dmatrix![1.0]).unwrap(), 1.0);
        let l = lipschitz_constant(&DMatrix::identity(2, 2), &(DMatrix::identity(2, 2) * 4.0)).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        let l = lipschitz_constant(&dmatrix![1.0, 0.0], &dmatrix![1.0]).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        assert!(lipschitz_constant(&dmatrix![1.0], &dmatrix![-1.0]).is_err());
    }

    #[test]
    fn apply_nudge_examples() {
        let cfg = NudgeConfig::gradient_ascent(0.5, 1.0).unwrap();
        assert_eq!(apply_nudge(&sv(&[0.0]), &cfg, &sv(&[2.0])).unwrap()[0], 1.0);
        let zero = NudgeConfig::gradient_ascent(0.0, 1.0).unwrap();
        let x = sv(&[0.1 + 0.2, -7.3]);
        assert_eq!(apply_nudge(&x, &zero, &sv(&[1e300, 4.0])).unwrap(), x);
        assert_eq!(apply_nudge(&x, &NudgeConfig::identity(), &sv(&[1.0, 1.0])).unwrap(), x);
    }

    #[test]
    fn config_validity_interval() {
        assert!(NudgeConfig::gradient_ascent(1.99, 1.0).is_ok());
        assert!(matches!(
            NudgeConfig::gradient_ascent(2.0, 1.0),
            Err(Error::InvalidStepSize { .. })
        ));
        assert!(NudgeConfig::gradient_ascent(-0.1, 1.0).is_err());
        // γ = 1/L is allowed (maximiser map), only warned about
        assert!(NudgeConfig::gradient_ascent(1.0, 1.0).is_ok());
        let sched = NudgeConfig {
            family: NudgeFamily::GradientAscent,
            gamma: StepSchedule::PerStep(vec![0.1, 0.2, 3.0]),
            lipschitz: 1.0,
        };
        assert!(sched.validate().is_err());
        assert_eq!(NudgeConfig::identity().gamma_at(4), 0.0);
    }

    #[test]
    fn schedule_lookup() {
        let s = StepSchedule::PerStep(vec![0.1, 0.2]);
        assert_eq!(s.at(1), 0.1);
        assert_eq!(s.at(2), 0.2);
        assert_eq!(s.at(9), 0.2);
    }

    #[test]
    fn affine_examples() {
        let n = affine_nudge_gaussian(&dmatrix![1.0], &dmatrix![1.0], &ov(&[1.0]), 0.0).unwrap();
        assert_eq!(n, AffineNudge::identity(1));
        let n = affine_nudge_gaussian(&dmatrix![1.0], &dmatrix![1.0], &ov(&[1.0]), 0.5).unwrap();
        assert_eq!(n.m, dmatrix![0.5]);
        assert_eq!(n.b, dvector![0.5]);
    }

    #[test]
    fn maximiser_step_collapses_to_y_over_a() {
        let (a, s2) = (2.0, 0.5);
        let c = DMatrix::identity(3, 3) * a;
        let rm = DMatrix::identity(3, 3) * s2;
        let y = ov(&[1.0, -2.0, 4.0]);
        let n = affine_nudge_gaussian(&c, &rm, &y, s2 / (a * a)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-10.0..10.0));
            let out = n.apply(&x);
            assert!((out - y.as_vector() / a).amax() < 1e-12);
        }
    }

    #[test]
    fn invert_examples() {
        let n = AffineNudge { m: dmatrix![0.5], b: dvector![0.5] };
        assert!((invert_affine_nudge(&n, &sv(&[1.0])).unwrap()[0] - 1.0).abs() < 1e-15);
        let id = AffineNudge::identity(2);
        let x = sv(&[3.0, -1.0]);
        assert_eq!(invert_affine_nudge(&id, &x).unwrap(), x);
        let singular = AffineNudge { m: dmatrix![0.0], b: dvector![1.0] };
        assert_eq!(invert_affine_nudge(&singular, &sv(&[1.0])), Err(Error::NotInvertible));
    }

    #[test]
    fn invert_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let rm = random_spd(&mut rng, 2);
        let l = lipschitz_constant(&c, &rm).unwrap();
        let y = ov(&[0.3, -0.8]);
        let n = affine_nudge_gaussian(&c, &rm, &y, 0.7 / l).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
            let back = invert_affine_nudge(&n, &StateVec::new(n.apply(&x)).unwrap()).unwrap();
            worst = worst.max((back.as_vector() - &x).amax());
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn affine_matches_generic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let c = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let rm = random_spd(&mut rng, 3);
            let l = lipschitz_constant(&c, &rm).unwrap();
            let y = ObsVec::new(DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0))).unwrap();
            let gamma = rng.random_range(0.0..1.9) / l;
            let cfg = NudgeConfig::gradient_ascent(gamma, l).unwrap();
            let n = affine_nudge_gaussian(&c, &rm, &y, gamma).unwrap();
            for _ in 0..100 {
                let x = StateVec::new(DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0))).unwrap();
                let g = grad_log_likelihood(&x, &y, &c, &rm).unwrap();
                let generic = apply_nudge(&x, &cfg, &g).unwrap();
                assert!((n.apply(&x) - generic.as_vector()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let rm = random_spd(&mut rng, 3);
        let y = ObsVec::new(DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let g = grad_log_likelihood(&StateVec::new(x.clone()).unwrap(), &y, &c, &rm).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loglik(&xp, &y, &c, &rm) - loglik(&xm, &y, &c, &rm)) / (2.0 * h);
            assert!(((fd - g[i]) / g[i].abs().max(1e-300)).abs() <= 1e-6, "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn precomputed_gradient_agrees() {
        let obs = ObservationModel::selection(3, &[0, 2], 0.7).unwrap();
        let lg = LikelihoodGradient::new(&obs);
        let x = dvector![1.0, 2.0, -3.0];
        let y = ov(&[0.5, 0.1]);
        let g1 = lg.at(&x, y.as_vector());
        let g2 = grad_log_likelihood(&StateVec::new(x).unwrap(), &y, obs.c(), obs.rm()).unwrap();
        assert!((g1 - g2.as_vector()).amax() < 1e-14);
    }
}
