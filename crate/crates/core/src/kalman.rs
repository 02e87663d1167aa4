//! Exact filtering for linear-Gaussian models, with and without nudging.
//!
//! The nudged kernel of an affine Gaussian model under the affine map
//! `α(x) = M x + b` is `N(M F x + M c + b, M Q Mᵀ)`, so the nudged filter is a
//! Kalman filter whose prediction step is pushed through `α`. The evidence of
//! the nudged model accumulates `log N(y_t; C μ̃_t, C P̃_t Cᵀ + R)` with the
//! nudged predictive moments.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{CholeskyFactor, GaussianBelief};
use crate::nudging::{affine_nudge_gaussian, AffineNudge, NudgeConfig};
use crate::ssm::{AffineKernel, SsmSpec};
use crate::trace::FilterTrace;
use crate::types::ObsVec;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// `N(μ_t, P_t)`
    pub posterior: GaussianBelief,
    /// `N(μ̃_t, P̃_t)`
    pub predictive: GaussianBelief,
    /// `Σ_s log ξ_s(g_s)` so far.
    pub log_evidence: f64,
    pub t: usize,
}

impl KalmanState {
    pub fn initial(prior: GaussianBelief) -> Self {
        Self {
            predictive: prior.clone(),
            posterior: prior,
            log_evidence: 0.0,
            t: 0,
        }
    }
}

fn check_square(m: &DMatrix<f64>, d: usize, context: &'static str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::dim(context, d, m.nrows()));
    }
    Ok(())
}

fn predict_affine(
    state: &KalmanState,
    kernel: &AffineKernel,
    nudge: Option<&AffineNudge>,
) -> Result<KalmanState> {
    let d = state.posterior.dim();
    check_square(&kernel.f, d, "transition matrix")?;
    check_square(&kernel.q, d, "transition covariance")?;
    let f = &kernel.f;
    let mut mean = f * state.posterior.mean() + &kernel.offset;
    let mut cov = f * state.posterior.cov() * f.transpose() + &kernel.q;
    if let Some(n) = nudge {
        check_square(&n.m, d, "nudge matrix")?;
        mean = n.apply(&mean);
        cov = &n.m * cov * n.m.transpose();
    }
    Ok(KalmanState {
        posterior: state.posterior.clone(),
        predictive: GaussianBelief::from_parts_unchecked(mean, cov),
        log_evidence: state.log_evidence,
        t: state.t + 1,
    })
}

/// `μ̃ = A μ`, `P̃ = A P Aᵀ + Q`.
pub fn kf_predict(state: &KalmanState, a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<KalmanState> {
    let kernel = AffineKernel {
        f: a.clone(),
        offset: DVector::zeros(a.nrows()),
        q: q.clone(),
    };
    predict_affine(state, &kernel, None)
}

/// `μ̃ = M A μ + b`, `P̃ = M (A P Aᵀ + Q) Mᵀ`.
pub fn nudged_kf_predict(
    state: &KalmanState,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    n: &AffineNudge,
) -> Result<KalmanState> {
    let kernel = AffineKernel {
        f: a.clone(),
        offset: DVector::zeros(a.nrows()),
        q: q.clone(),
    };
    predict_affine(state, &kernel, Some(n))
}

/// Conditions the predictive on `y` and adds `log N(y; C μ̃, S)` to the
/// evidence.
pub fn kf_update(
    state: &KalmanState,
    c: &DMatrix<f64>,
    rm: &DMatrix<f64>,
    y: &ObsVec,
) -> Result<KalmanState> {
    let pred = &state.predictive;
    if c.ncols() != pred.dim() {
        return Err(Error::dim("observation matrix columns", pred.dim(), c.ncols()));
    }
    if c.nrows() != y.dim() || rm.nrows() != y.dim() {
        return Err(Error::dim("observation", c.nrows(), y.dim()));
    }
    let p = pred.cov();
    let s = c * p * c.transpose() + rm;
    let s = (&s + s.transpose()) * 0.5;
    let s_factor = CholeskyFactor::new(&s, "innovation covariance")?;
    let innovation = y.as_vector() - c * pred.mean();
    let increment = s_factor.log_density(&innovation);

    // K = P̃ Cᵀ S⁻¹ = (S⁻¹ C P̃)ᵀ
    let cp = c * p;
    let gain_t = s_factor.solve_matrix(&cp);
    let mean = pred.mean() + gain_t.transpose() * innovation;
    let cov = p - gain_t.transpose() * cp;

    Ok(KalmanState {
        posterior: GaussianBelief::from_parts_unchecked(mean, cov),
        predictive: pred.clone(),
        log_evidence: state.log_evidence + increment,
        t: state.t,
    })
}

/// Full (nudged) Kalman filter. The identity nudge gives the classical filter.
pub fn run_kf(spec: &SsmSpec, observations: &[ObsVec], nudge: &NudgeConfig) -> Result<FilterTrace> {
    let mut trace = FilterTrace::empty(spec.observation.log_normalizer());
    let mut previous = 0.0;
    for state in run_kf_states(spec, observations, nudge)? {
        trace.push(state.posterior.mean().clone(), state.log_evidence - previous);
        previous = state.log_evidence;
    }
    Ok(trace)
}

/// Every filter state `t = 1..=T` of a (nudged) Kalman filter run.
pub fn run_kf_states(
    spec: &SsmSpec,
    observations: &[ObsVec],
    nudge: &NudgeConfig,
) -> Result<Vec<KalmanState>> {
    nudge.validate()?;
    let kernel = spec.transition.affine().ok_or_else(|| {
        Error::InvalidModel("Kalman filter needs a linear-Gaussian transition".into())
    })?;
    let obs = &spec.observation;
    let mut out = Vec::with_capacity(observations.len());
    let mut state = KalmanState::initial(spec.prior.clone());
    for (i, y) in observations.iter().enumerate() {
        let gamma = nudge.gamma_at(i + 1);
        let nudge_map = if gamma == 0.0 {
            None
        } else {
            Some(affine_nudge_gaussian(obs.c(), obs.rm(), y, gamma)?)
        };
        state = predict_affine(&state, &kernel, nudge_map.as_ref())?;
        state = kf_update(&state, obs.c(), obs.rm(), y)?;
        out.push(state.clone());
    }
    Ok(out)
}
