//! Nudged state-space models.
//!
//! A nudged model replaces each transition kernel `K_t` by its push-forward
//! through an observation-informed map `α_t` that never decreases the
//! likelihood `g_t`. Base and nudged models can be filtered exactly with the
//! Kalman recursion or approximately with a bootstrap particle filter.
//! [`models`] holds the two benchmark systems and [`oracle`] checks the
//! theory by brute force on finite-state models.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gaussian;
pub mod kalman;
pub mod models;
pub mod nudging;
pub mod oracle;
pub mod particle;
pub mod rng;
pub mod ssm;
pub mod trace;
pub mod types;

pub use error::{Error, Result};
pub use gaussian::{gaussian_logpdf, sample_gaussian, CholeskyFactor, GaussianBelief};
pub use kalman::{kf_predict, kf_update, nudged_kf_predict, run_kf, run_kf_states, KalmanState};
pub use nudging::{
    affine_nudge_gaussian, apply_nudge, grad_log_likelihood, invert_affine_nudge, lipschitz_constant,
    AffineNudge, NudgeConfig, NudgeFamily, StepSchedule,
};
pub use particle::{pf_step, resample_multinomial, resample_systematic, run_pf, ParticleEnsemble};
pub use rng::RngStream;
pub use ssm::{LorenzParams, ObservationModel, SsmSpec, TransitionKind};
pub use trace::{nmse, FilterTrace};
pub use types::{ObsVec, StateVec};
