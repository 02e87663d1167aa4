#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nudge_core::{GaussianBelief, ObservationModel, SsmSpec, TransitionKind};
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// `B Bᵀ + floor·I`
pub fn random_spd<R: Rng>(rng: &mut R, d: usize, floor: f64) -> DMatrix<f64> {
    let b = random_matrix(rng, d, d, 1.0);
    &b * b.transpose() + DMatrix::identity(d, d) * floor
}

pub fn random_vector<R: Rng>(rng: &mut R, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(-scale..scale))
}

/// Random stable linear-Gaussian model with `d_x ∈ 1..=4`, `d_y ∈ 1..=3`.
pub fn random_linear_spec<R: Rng>(rng: &mut R) -> SsmSpec {
    let dx = rng.random_range(1..=4);
    let dy = rng.random_range(1..=3);
    let a = random_matrix(rng, dx, dx, 1.0);
    let rho = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let a = if rho > 0.95 { a * (0.95 / rho) } else { a };
    SsmSpec::new(
        GaussianBelief::new(random_vector(rng, dx, 1.0), random_spd(rng, dx, 0.2)).unwrap(),
        TransitionKind::LinearGaussian { a, q: random_spd(rng, dx, 0.1) * 0.5 },
        ObservationModel::new(random_matrix(rng, dy, dx, 1.0), random_spd(rng, dy, 0.2)).unwrap(),
    )
    .unwrap()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
