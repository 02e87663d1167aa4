//! Bootstrap particle filter with optional nudged-kernel sampling.
//!
//! A nudged kernel is sampled in two steps: draw `x̂_t ~ K_t(x_{t-1}, ·)`, then
//! set `x_t = α_t(x̂_t, γ_t)`. Particles are weighted by `g_t`, the evidence
//! increment `log (1/N) Σ g_t(x_t^i)` is accumulated, and the ensemble is
//! resampled at every step.
//!
//! Every particle draws from its own stream keyed by `(step, slot key)`, so a
//! run is a pure function of its inputs regardless of evaluation order.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nudging::{LikelihoodGradient, NudgeConfig};
use crate::rng::RngStream;
use crate::ssm::SsmSpec;
use crate::trace::FilterTrace;
use crate::types::ObsVec;

pub use crate::trace::nmse;

/// Substream index reserved for the resampling uniforms of a step.
const RESAMPLE_KEY: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    #[default]
    Systematic,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<DVector<f64>>,
    pub log_weights: Vec<f64>,
    /// Key of the random substream used by each slot. `0..N` after every
    /// resampling.
    pub slot_keys: Vec<u64>,
    pub rng: RngStream,
    /// Number of completed filter steps.
    pub step: usize,
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl ParticleEnsemble {
    /// Equally weighted ensemble.
    pub fn uniform(particles: Vec<DVector<f64>>, rng: RngStream) -> Self {
        let n = particles.len();
        Self {
            log_weights: vec![-(n as f64).ln(); n],
            slot_keys: (0..n as u64).collect(),
            particles,
            rng,
            step: 0,
        }
    }

    /// `N` draws from the prior, slot `i` using substream `(0, i)`.
    pub fn from_prior(spec: &SsmSpec, n: usize, rng: RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("particle count must be at least 1".into()));
        }
        let particles = (0..n as u64)
            .map(|i| {
                let mut r = rng.substream2(0, i).rng();
                spec.sample_prior(&mut r).map(|x| x.into_inner())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::uniform(particles, rng))
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Normalized weights `exp(log w_i − logsumexp(log w))`.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        let lse = log_sum_exp(&self.log_weights);
        if !lse.is_finite() {
            return Err(Error::DegenerateEnsemble { step: self.step });
        }
        Ok(self.log_weights.iter().map(|w| (w - lse).exp()).collect())
    }

    /// Weighted mean of the particles.
    pub fn mean(&self) -> Result<DVector<f64>> {
        let w = self.normalized_weights()?;
        let d = self.particles[0].len();
        Ok(self
            .particles
            .iter()
            .zip(&w)
            .fold(DVector::zeros(d), |acc, (x, wi)| acc + x * *wi))
    }

    fn resampled(&self, indices: &[usize]) -> Self {
        let particles = indices.iter().map(|&i| self.particles[i].clone()).collect();
        Self {
            step: self.step,
            ..Self::uniform(particles, self.rng)
        }
    }
}

/// Systematic resampling indices for normalized `weights` and offset `u ∈ [0,1)`.
/// Particle `i` receives `⌊N w_i⌋` or `⌈N w_i⌉` copies.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    for k in 0..n {
        let pos = (k as f64 + u) / n as f64;
        while i + 1 < n && cum + weights[i] <= pos {
            cum += weights[i];
            i += 1;
        }
        out.push(i);
    }
    out
}

/// Multinomial resampling indices via inverse-CDF lookups of sorted uniforms.
pub fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let mut us: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    us.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for u in us {
        while i + 1 < n && u >= cum {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

fn resample_with(ens: &ParticleEnsemble, scheme: ResamplingScheme) -> Result<ParticleEnsemble> {
    let w = ens.normalized_weights()?;
    let mut rng = ens.rng.substream2(ens.step as u64, RESAMPLE_KEY).rng();
    let idx = match scheme {
        ResamplingScheme::Systematic => systematic_indices(&w, rng.random::<f64>()),
        ResamplingScheme::Multinomial => multinomial_indices(&w, &mut rng),
    };
    Ok(ens.resampled(&idx))
}

/// Systematic resampling to an equally weighted ensemble.
pub fn resample_systematic(ens: &ParticleEnsemble) -> Result<ParticleEnsemble> {
    resample_with(ens, ResamplingScheme::Systematic)
}

/// Multinomial resampling to an equally weighted ensemble.
pub fn resample_multinomial(ens: &ParticleEnsemble) -> Result<ParticleEnsemble> {
    resample_with(ens, ResamplingScheme::Multinomial)
}

/// Result of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct PfStep {
    /// Resampled, equally weighted ensemble.
    pub ensemble: ParticleEnsemble,
    /// `log (1/N) Σ_i g_t(x_t^i)`
    pub increment: f64,
    /// Weighted posterior mean before resampling.
    pub estimate: DVector<f64>,
}

/// Propagate, nudge, weight and resample.
pub fn pf_step(
    ens: &ParticleEnsemble,
    spec: &SsmSpec,
    nudge: &NudgeConfig,
    y: &ObsVec,
) -> Result<PfStep> {
    let gradient = LikelihoodGradient::new(&spec.observation);
    pf_step_with(ens, spec, nudge, &gradient, y, ResamplingScheme::Systematic)
}

fn pf_step_with(
    ens: &ParticleEnsemble,
    spec: &SsmSpec,
    nudge: &NudgeConfig,
    gradient: &LikelihoodGradient,
    y: &ObsVec,
    scheme: ResamplingScheme,
) -> Result<PfStep> {
    if ens.is_empty() {
        return Err(Error::InvalidModel("empty particle ensemble".into()));
    }
    if y.dim() != spec.obs_dim() {
        return Err(Error::dim("observation", spec.obs_dim(), y.dim()));
    }
    let t = ens.step + 1;
    let gamma = nudge.gamma_at(t);
    let n = ens.len();

    let mut particles = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    for (x_prev, &key) in ens.particles.iter().zip(&ens.slot_keys) {
        let mut rng = ens.rng.substream2(t as u64, key).rng();
        let mut x = x_prev.clone();
        match spec.propagate(&mut x, &mut rng) {
            Ok(()) => {
                gradient.nudge_in_place(&mut x, y, gamma);
                let lw = spec.log_likelihood(&x, y);
                if x.iter().all(|v| v.is_finite()) && !lw.is_nan() {
                    particles.push(x);
                    log_w.push(lw);
                    continue;
                }
                particles.push(x_prev.clone());
                log_w.push(f64::NEG_INFINITY);
            }
            Err(Error::DivergedState { .. }) | Err(Error::NonFinite(_)) => {
                // a blown-up particle carries no weight and is dropped on resampling
                particles.push(x_prev.clone());
                log_w.push(f64::NEG_INFINITY);
            }
            Err(e) => return Err(e),
        }
    }

    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::DegenerateEnsemble { step: t });
    }
    let increment = lse - (n as f64).ln();
    let weighted = ParticleEnsemble {
        particles,
        log_weights: log_w,
        slot_keys: ens.slot_keys.clone(),
        rng: ens.rng,
        step: t,
    };
    let estimate = weighted.mean()?;
    let ensemble = resample_with(&weighted, scheme)?;
    Ok(PfStep {
        ensemble,
        increment,
        estimate,
    })
}

/// Runs the filter over all observations. On failure returns the trace up
/// to the last completed step together with the error.
pub fn run_pf_partial(
    spec: &SsmSpec,
    observations: &[ObsVec],
    nudge: &NudgeConfig,
    n: usize,
    rng: RngStream,
    scheme: ResamplingScheme,
) -> (FilterTrace, Option<Error>) {
    let mut trace = FilterTrace::empty(spec.observation.log_normalizer());
    if let Err(e) = nudge.validate() {
        return (trace, Some(e));
    }
    let mut ens = match ParticleEnsemble::from_prior(spec, n, rng) {
        Ok(e) => e,
        Err(e) => return (trace, Some(e)),
    };
    let gradient = LikelihoodGradient::new(&spec.observation);
    for y in observations {
        match pf_step_with(&ens, spec, nudge, &gradient, y, scheme) {
            Ok(step) => {
                trace.push(step.estimate, step.increment);
                ens = step.ensemble;
            }
            Err(e) => return (trace, Some(e)),
        }
    }
    (trace, None)
}

/// Bootstrap (optionally nudged) particle filter with systematic resampling.
/// When `truth` is given, the NMSE series is attached to the trace.
pub fn run_pf(
    spec: &SsmSpec,
    observations: &[ObsVec],
    nudge: &NudgeConfig,
    n: usize,
    rng: RngStream,
    truth: Option<&[DVector<f64>]>,
) -> Result<FilterTrace> {
    let (mut trace, err) = run_pf_partial(spec, observations, nudge, n, rng, ResamplingScheme::Systematic);
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(truth) = truth {
        trace.attach_truth(truth)?;
    }
    Ok(trace)
}
