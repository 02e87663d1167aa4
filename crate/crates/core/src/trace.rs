use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output of one filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTrace {
    /// Posterior mean at each step `t = 1..=T`.
    pub estimates: Vec<DVector<f64>>,
    /// `log p(y_t | y_{1:t-1})` with normalized likelihoods.
    pub inc_loglik: Vec<f64>,
    pub total_loglik: f64,
    pub nmse_series: Option<Vec<f64>>,
    /// `½(d_y log 2π + log det R)`; adding it back to every increment gives
    /// the evidence of the likelihood taken up to proportionality.
    pub obs_log_normalizer: f64,
}

impl FilterTrace {
    pub fn empty(obs_log_normalizer: f64) -> Self {
        Self {
            estimates: Vec::new(),
            inc_loglik: Vec::new(),
            total_loglik: 0.0,
            nmse_series: None,
            obs_log_normalizer,
        }
    }

    pub fn len(&self) -> usize {
        self.inc_loglik.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inc_loglik.is_empty()
    }

    pub(crate) fn push(&mut self, estimate: DVector<f64>, increment: f64) {
        self.estimates.push(estimate);
        self.inc_loglik.push(increment);
        self.total_loglik += increment;
    }

    /// Log-evidence with `g_t ∝ exp{−½ (y − Cx)ᵀR⁻¹(y − Cx)}`, i.e. without the
    /// Gaussian normalizing constant.
    pub fn total_loglik_unnormalized(&self) -> f64 {
        self.total_loglik + self.len() as f64 * self.obs_log_normalizer
    }

    /// Running log-evidence `log p(y_{1:t})` for every `t`.
    pub fn cumulative_loglik(&self) -> Vec<f64> {
        self.inc_loglik
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }

    pub fn attach_truth(&mut self, truth: &[DVector<f64>]) -> Result<()> {
        self.nmse_series = Some(nmse(truth, &self.estimates)?);
        Ok(())
    }

    pub fn final_nmse(&self) -> Option<f64> {
        self.nmse_series.as_ref().and_then(|s| s.last().copied())
    }

    pub fn mean_nmse(&self) -> Option<f64> {
        self.nmse_series
            .as_ref()
            .filter(|s| !s.is_empty())
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
    }
}

/// `NMSE_t = ‖x_t − x̂_t‖² / ((1/T) Σ_s ‖x_s‖²)`, with the denominator taken
/// over the whole trajectory.
pub fn nmse(truth: &[DVector<f64>], estimates: &[DVector<f64>]) -> Result<Vec<f64>> {
    if truth.len() != estimates.len() {
        return Err(Error::dim("nmse rows", truth.len(), estimates.len()));
    }
    if truth.is_empty() {
        return Ok(Vec::new());
    }
    let energy = truth.iter().map(|x| x.norm_squared()).sum::<f64>() / truth.len() as f64;
    if energy == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    truth
        .iter()
        .zip(estimates)
        .map(|(x, e)| {
            if x.len() != e.len() {
                return Err(Error::dim("nmse columns", x.len(), e.len()));
            }
            Ok((x - e).norm_squared() / energy)
        })
        .collect()
}
