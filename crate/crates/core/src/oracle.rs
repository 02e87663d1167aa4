//! Brute-force checks on tiny finite-state hidden Markov models and on
//! scalar Gaussians.
//!
//! Everything here is exact enumeration or fine quadrature and never touches
//! the Kalman or particle filters.
//!
//! States are `0..n`, ordered on a line. A deterministic nudge map sends every
//! state to another state and may not decrease the likelihood. The nudged
//! kernel pushes each row of `K_t` through `α_t`:
//! `K^α[i][j] = Σ_{k: α(k)=j} K[i][k]`. The alternative model uses
//! `K̄_t(x, ·) = K_t(α_{t-1}(x), ·)` with `α_0 = id` and likelihood `g_t ∘ α_t`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of paths `n^T` enumerated.
pub const MAX_PATHS: u128 = 1_000_000;
pub const MAX_STATES: usize = 6;

const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    Nudged,
    Alternative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteHmm {
    prior: Vec<f64>,
    kernels: Vec<Vec<Vec<f64>>>,
    likelihoods: Vec<Vec<f64>>,
    nudge_maps: Vec<Vec<usize>>,
}

fn check_distribution(p: &[f64], n: usize, what: &str) -> Result<()> {
    if p.len() != n {
        return Err(Error::InvalidModel(format!("{what}: expected {n} entries, got {}", p.len())));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidModel(format!("{what}: entries must be finite and non-negative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidModel(format!("{what}: sums to {s}")));
    }
    Ok(())
}

impl FiniteHmm {
    pub fn new(
        prior: Vec<f64>,
        kernels: Vec<Vec<Vec<f64>>>,
        likelihoods: Vec<Vec<f64>>,
        nudge_maps: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = prior.len();
        if n == 0 || n > MAX_STATES {
            return Err(Error::InvalidModel(format!("state count {n} outside 1..={MAX_STATES}")));
        }
        check_distribution(&prior, n, "prior")?;
        let t_len = kernels.len();
        if likelihoods.len() != t_len || nudge_maps.len() != t_len {
            return Err(Error::InvalidModel("kernels, likelihoods and nudge maps need equal lengths".into()));
        }
        for k in &kernels {
            if k.len() != n {
                return Err(Error::dim("kernel rows", n, k.len()));
            }
            for row in k {
                check_distribution(row, n, "kernel row")?;
            }
        }
        for g in &likelihoods {
            if g.len() != n || g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidModel("likelihoods must be positive with one entry per state".into()));
            }
        }
        for (t, (a, g)) in nudge_maps.iter().zip(&likelihoods).enumerate() {
            if a.len() != n {
                return Err(Error::dim("nudge map", n, a.len()));
            }
            for (x, &ax) in a.iter().enumerate() {
                if ax >= n || g[ax] < g[x] {
                    return Err(Error::InvalidNudgeMap { time: t + 1, state: x });
                }
            }
        }
        Ok(Self {
            prior,
            kernels,
            likelihoods,
            nudge_maps,
        })
    }

    pub fn n_states(&self) -> usize {
        self.prior.len()
    }

    pub fn horizon(&self) -> usize {
        self.kernels.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn kernel(&self, t: usize) -> &[Vec<f64>] {
        &self.kernels[t - 1]
    }

    pub fn likelihood(&self, t: usize) -> &[f64] {
        &self.likelihoods[t - 1]
    }

    pub fn nudge_map(&self, t: usize) -> &[usize] {
        &self.nudge_maps[t - 1]
    }

    /// Same model with different nudge maps.
    pub fn with_nudge_maps(&self, maps: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(self.prior.clone(), self.kernels.clone(), self.likelihoods.clone(), maps)
    }

    /// Same model with `α_t = id` for every `t`.
    pub fn with_identity_maps(&self) -> Self {
        let id: Vec<usize> = (0..self.n_states()).collect();
        Self {
            nudge_maps: vec![id; self.horizon()],
            ..self.clone()
        }
    }

    /// Every state mapped to the (first) maximiser of `g_t`.
    pub fn with_maximiser_maps(&self) -> Self {
        let maps = self
            .likelihoods
            .iter()
            .map(|g| vec![argmax(g); self.n_states()])
            .collect();
        Self {
            nudge_maps: maps,
            ..self.clone()
        }
    }

    /// Kernel used at time `t` by the given variant.
    pub fn effective_kernel(&self, t: usize, variant: Variant) -> Vec<Vec<f64>> {
        let k = self.kernel(t);
        match variant {
            Variant::Base => k.to_vec(),
            Variant::Nudged => k.iter().map(|row| push_forward(row, self.nudge_map(t))).collect(),
            Variant::Alternative => {
                if t == 1 {
                    k.to_vec()
                } else {
                    let prev = self.nudge_map(t - 1);
                    (0..self.n_states()).map(|i| k[prev[i]].clone()).collect()
                }
            }
        }
    }

    /// Likelihood used at time `t` by the given variant.
    pub fn effective_likelihood(&self, t: usize, variant: Variant) -> Vec<f64> {
        let g = self.likelihood(t);
        match variant {
            Variant::Alternative => self.nudge_map(t).iter().map(|&a| g[a]).collect(),
            _ => g.to_vec(),
        }
    }
}

fn argmax(g: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in g.iter().enumerate() {
        if v > g[best] {
            best = i;
        }
    }
    best
}

fn push_forward(p: &[f64], map: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (k, &v) in p.iter().enumerate() {
        out[map[k]] += v;
    }
    out
}

fn propagate(p: &[f64], k: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    (0..n).map(|j| (0..n).map(|i| p[i] * k[i][j]).sum()).collect()
}

/// Forward recursion with explicit kernels and likelihoods. Returns the
/// incremental likelihoods `ξ_t(g_t)`.
fn forward_increments(prior: &[f64], kernels: &[Vec<Vec<f64>>], likelihoods: &[Vec<f64>]) -> Vec<f64> {
    let mut filt = prior.to_vec();
    let mut out = Vec::with_capacity(kernels.len());
    for (k, g) in kernels.iter().zip(likelihoods) {
        let pred = propagate(&filt, k);
        let z: f64 = pred.iter().zip(g).map(|(p, g)| p * g).sum();
        filt = pred.iter().zip(g).map(|(p, g)| p * g / z).collect();
        out.push(z);
    }
    out
}

fn variant_parts(hmm: &FiniteHmm, variant: Variant) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    (1..=hmm.horizon())
        .map(|t| (hmm.effective_kernel(t, variant), hmm.effective_likelihood(t, variant)))
        .unzip()
}

/// `p(y_{1:T})` by the forward algorithm.
pub fn exact_evidence(hmm: &FiniteHmm, variant: Variant) -> f64 {
    let (k, g) = variant_parts(hmm, variant);
    forward_increments(hmm.prior(), &k, &g).iter().product()
}

/// Posterior probability of every path `x_{1:T}`, indexed in base `n` with
/// `x_1` as the most significant digit.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    pub n_states: usize,
    pub horizon: usize,
    pub probs: Vec<f64>,
    /// Normalizing constant, equal to the evidence.
    pub evidence: f64,
}

impl PathMeasure {
    pub fn path(&self, index: usize) -> Vec<usize> {
        let mut x = vec![0; self.horizon];
        let mut r = index;
        for slot in x.iter_mut().rev() {
            *slot = r % self.n_states;
            r /= self.n_states;
        }
        x
    }

    /// `Π(φ) = Σ_paths Π(x) φ(x)`
    pub fn expect<F: Fn(&[usize]) -> f64>(&self, phi: F) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * phi(&self.path(i)))
            .sum()
    }
}

pub fn path_count(n: usize, t: usize) -> u128 {
    (n as u128).saturating_pow(t as u32)
}

/// Exact path posterior by enumeration of all `n^T` paths.
pub fn exact_path_measure(hmm: &FiniteHmm, variant: Variant) -> Result<PathMeasure> {
    let (n, t_len) = (hmm.n_states(), hmm.horizon());
    let count = path_count(n, t_len);
    if count > MAX_PATHS {
        return Err(Error::EnumerationBound {
            paths: count,
            limit: MAX_PATHS,
        });
    }
    let (kernels, gs) = variant_parts(hmm, variant);
    let mut pm = PathMeasure {
        n_states: n,
        horizon: t_len,
        probs: Vec::with_capacity(count as usize),
        evidence: 0.0,
    };
    for idx in 0..count as usize {
        let path = pm.path(idx);
        let mut w = if t_len == 0 {
            1.0
        } else {
            (0..n).map(|x0| hmm.prior()[x0] * kernels[0][x0][path[0]]).sum::<f64>() * gs[0][path[0]]
        };
        for t in 1..t_len {
            w *= kernels[t][path[t - 1]][path[t]] * gs[t][path[t]];
        }
        pm.probs.push(w);
    }
    pm.evidence = pm.probs.iter().sum();
    let z = pm.evidence;
    pm.probs.iter_mut().for_each(|p| *p /= z);
    Ok(pm)
}

/// Smoothing marginals by forward-backward: `singles[t][x]` is the posterior of
/// `X_{t+1} = x` and `pairs[t][i][j]` the posterior of
/// `(X_{t}, X_{t+1}) = (i, j)` for `t ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingMarginals {
    pub singles: Vec<Vec<f64>>,
    pub pairs: Vec<Vec<Vec<f64>>>,
}

pub fn forward_backward(hmm: &FiniteHmm, variant: Variant) -> SmoothingMarginals {
    let (n, t_len) = (hmm.n_states(), hmm.horizon());
    let (kernels, gs) = variant_parts(hmm, variant);
    let mut alphas = Vec::with_capacity(t_len);
    let mut filt = hmm.prior().to_vec();
    for t in 0..t_len {
        let pred = propagate(&filt, &kernels[t]);
        let a: Vec<f64> = pred.iter().zip(&gs[t]).map(|(p, g)| p * g).collect();
        let z: f64 = a.iter().sum();
        filt = a.iter().map(|v| v / z).collect();
        alphas.push(filt.clone());
    }
    let mut betas = vec![vec![1.0; n]; t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        let b: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| kernels[t + 1][i][j] * gs[t + 1][j] * betas[t + 1][j]).sum())
            .collect();
        let z: f64 = b.iter().sum();
        betas[t] = b.iter().map(|v| v / z).collect();
    }
    let singles = (0..t_len)
        .map(|t| {
            let s: Vec<f64> = (0..n).map(|x| alphas[t][x] * betas[t][x]).collect();
            let z: f64 = s.iter().sum();
            s.iter().map(|v| v / z).collect()
        })
        .collect();
    let pairs = (1..t_len)
        .map(|t| {
            let mut m = vec![vec![0.0; n]; n];
            for (i, row) in m.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = alphas[t - 1][i] * kernels[t][i][j] * gs[t][j] * betas[t][j];
                }
            }
            let z: f64 = m.iter().flatten().sum();
            m.iter_mut().flatten().for_each(|v| *v /= z);
            m
        })
        .collect();
    SmoothingMarginals { singles, pairs }
}

/// Path function `φ(x) = Σ_t f_t(x_t) + Σ_{t≥2} h_t(x_{t-1}, x_t)`, which
/// both enumeration and forward-backward can integrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivePathFn {
    pub unary: Vec<Vec<f64>>,
    pub pairwise: Vec<Vec<Vec<f64>>>,
}

impl AdditivePathFn {
    pub fn eval(&self, path: &[usize]) -> f64 {
        let u: f64 = path.iter().zip(&self.unary).map(|(&x, f)| f[x]).sum();
        let p: f64 = path
            .windows(2)
            .zip(&self.pairwise)
            .map(|(w, h)| h[w[0]][w[1]])
            .sum();
        u + p
    }

    pub fn expect_marginals(&self, m: &SmoothingMarginals) -> f64 {
        let u: f64 = m
            .singles
            .iter()
            .zip(&self.unary)
            .map(|(p, f)| p.iter().zip(f).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let p: f64 = m
            .pairs
            .iter()
            .zip(&self.pairwise)
            .map(|(p, h)| {
                p.iter()
                    .flatten()
                    .zip(h.iter().flatten())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        u + p
    }

    pub fn random<R: Rng + ?Sized>(n: usize, t_len: usize, rng: &mut R) -> Self {
        Self {
            unary: (0..t_len)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            pairwise: (1..t_len)
                .map(|_| {
                    (0..n)
                        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl PathBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-12
    }
}

/// Compares the path posteriors of the base model and its nudge under a
/// bounded path function:
/// `|Π(φ) − Π^α(φ)| ≤ 2 ‖φ‖_∞ |p − p^α| / p`.
pub fn check_path_error_bound<F: Fn(&[usize]) -> f64>(hmm: &FiniteHmm, phi: F) -> Result<PathBound> {
    let base = exact_path_measure(hmm, Variant::Base)?;
    let nudged = exact_path_measure(hmm, Variant::Nudged)?;
    let sup = (0..base.probs.len())
        .map(|i| phi(&base.path(i)).abs())
        .fold(0.0, f64::max);
    let lhs = (base.expect(&phi) - nudged.expect(&phi)).abs();
    let rhs = 2.0 * sup * (base.evidence - nudged.evidence).abs() / base.evidence;
    Ok(PathBound { lhs, rhs })
}

/// One-step move of `x` towards `target` on the ordered state set.
fn step_towards(x: usize, target: usize) -> usize {
    match x.cmp(&target) {
        std::cmp::Ordering::Less => x + 1,
        std::cmp::Ordering::Greater => x - 1,
        std::cmp::Ordering::Equal => x,
    }
}

/// Deterministic grid-step family: move `⌊γ (n − 1)⌋` steps towards the
/// maximiser of `g`, stopping there. `γ = 0` is the identity.
pub fn grid_step_map(g: &[f64], gamma: f64) -> Vec<usize> {
    let n = g.len();
    let target = argmax(g);
    let steps = (gamma.clamp(0.0, 1.0) * (n - 1) as f64).floor() as usize;
    (0..n)
        .map(|x| (0..steps).fold(x, |y, _| step_towards(y, target)))
        .collect()
}

/// Stochastic family used for the existence check: with probability `γ` a
/// state moves one step towards the maximiser of `g`, otherwise it stays.
/// Row-stochastic `n × n` matrix.
pub fn stochastic_step_matrix(g: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    let n = g.len();
    let target = argmax(g);
    let mut s = vec![vec![0.0; n]; n];
    for (x, row) in s.iter_mut().enumerate() {
        let y = step_towards(x, target);
        row[x] += 1.0 - gamma;
        row[y] += gamma;
    }
    s
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Evidence of the stochastically nudged model with per-step `γ_t`.
pub fn stochastic_nudged_evidence(hmm: &FiniteHmm, gammas: &[f64]) -> f64 {
    let kernels: Vec<_> = (1..=hmm.horizon())
        .map(|t| mat_mul(hmm.kernel(t), &stochastic_step_matrix(hmm.likelihood(t), gammas[t - 1])))
        .collect();
    forward_increments(hmm.prior(), &kernels, &hmm.likelihoods)
        .iter()
        .product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepExistenceReport {
    pub base_evidence: f64,
    /// `(γ, evidence)` with the same `γ` at every step.
    pub constant_curve: Vec<(f64, f64)>,
    /// Best sequence found among those with at least one positive `γ_t`.
    pub best_gammas: Vec<f64>,
    pub best_evidence: f64,
    pub exists: bool,
}

/// Largest number of per-step sequences searched exhaustively.
const MAX_SEQUENCES: usize = 50_000;

/// Searches `γ_{1:T}` over the grid for a nudged model whose evidence is at
/// least that of the base model with some `γ_t > 0`. Exhaustive when
/// `|grid|^T` is small, otherwise constant and single-step sequences.
pub fn check_step_existence_grid(hmm: &FiniteHmm, grid: &[f64]) -> StepExistenceReport {
    let t_len = hmm.horizon();
    let base = exact_evidence(hmm, Variant::Base);
    let constant_curve: Vec<(f64, f64)> = grid
        .iter()
        .map(|&g| (g, stochastic_nudged_evidence(hmm, &vec![g; t_len])))
        .collect();

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let total = grid.len().checked_pow(t_len as u32).filter(|&c| c <= MAX_SEQUENCES);
    match total {
        Some(total) if !grid.is_empty() => {
            for mut idx in 0..total {
                let mut seq = vec![0.0; t_len];
                for s in seq.iter_mut() {
                    *s = grid[idx % grid.len()];
                    idx /= grid.len();
                }
                candidates.push(seq);
            }
        }
        _ => {
            for &g in grid {
                candidates.push(vec![g; t_len]);
                for t in 0..t_len {
                    let mut seq = vec![0.0; t_len];
                    seq[t] = g;
                    candidates.push(seq);
                }
            }
        }
    }
    let mut best_gammas = Vec::new();
    let mut best_evidence = f64::NEG_INFINITY;
    for seq in candidates.into_iter().filter(|s| s.iter().any(|&g| g > 0.0)) {
        let ev = stochastic_nudged_evidence(hmm, &seq);
        if ev > best_evidence {
            best_evidence = ev;
            best_gammas = seq;
        }
    }
    let exists = t_len == 0 || best_evidence >= base * (1.0 - 1e-12);
    StepExistenceReport {
        base_evidence: base,
        constant_curve,
        best_gammas,
        best_evidence,
        exists,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximiserReport {
    pub base_evidence: f64,
    pub nudged_evidence: f64,
    /// `Π_t max_x g_t(x)`
    pub product_of_maxima: f64,
    /// Whether some base predictive puts mass on a state with `g_t < max g_t`.
    pub mass_off_argmax: bool,
}

impl MaximiserReport {
    pub fn holds(&self) -> bool {
        let eq = (self.nudged_evidence - self.product_of_maxima).abs() <= 1e-12 * self.product_of_maxima;
        eq && (!self.mass_off_argmax || self.nudged_evidence > self.base_evidence)
    }
}

/// Evidence under the degenerate nudge that sends every state to the
/// maximiser of the likelihood.
pub fn check_maximiser_map(hmm: &FiniteHmm) -> MaximiserReport {
    let maxed = hmm.with_maximiser_maps();
    let mut filt = hmm.prior().to_vec();
    let mut off = false;
    for t in 1..=hmm.horizon() {
        let g = hmm.likelihood(t);
        let gmax = g[argmax(g)];
        let pred = propagate(&filt, hmm.kernel(t));
        off |= pred.iter().zip(g).any(|(p, gx)| *p > 0.0 && *gx < gmax);
        let z: f64 = pred.iter().zip(g).map(|(p, g)| p * g).sum();
        filt = pred.iter().zip(g).map(|(p, g)| p * g / z).collect();
    }
    MaximiserReport {
        base_evidence: exact_evidence(hmm, Variant::Base),
        nudged_evidence: exact_evidence(&maxed, Variant::Nudged),
        product_of_maxima: hmm.likelihoods.iter().map(|g| g[argmax(g)]).product(),
        mass_off_argmax: off,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTvCheck {
    pub tv_estimate: f64,
    pub bound: f64,
}

impl GaussianTvCheck {
    pub fn holds(&self) -> bool {
        self.tv_estimate <= self.bound + 1e-6
    }
}

/// `½ ‖Λ^{-½} U‖ ‖μ₁ − μ₂‖` with `Q = Uᵀ Λ U`, for any dimension.
pub fn gaussian_tv_bound(mu1: &[f64], mu2: &[f64], q: &nalgebra::DMatrix<f64>) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || q.nrows() != d || q.ncols() != d {
        return Err(Error::dim("tv bound", d, q.nrows()));
    }
    let eig = q.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::CholeskyFailure { context: "tv bound covariance" });
    }
    // rows of Uᵀ in the eigen decomposition Q = V Λ Vᵀ are the rows of U
    let u = eig.eigenvectors.transpose();
    let scaled = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(-0.5))) * u;
    let dist = mu1.iter().zip(mu2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(0.5 * scaled.singular_values().max() * dist)
}

fn scalar_density(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `½ ∫ |N(x; μ₁, q) − N(x; μ₂, q)| dx` by composite Simpson quadrature over
/// ±12 standard deviations around both means.
pub fn scalar_tv_quadrature(mu1: f64, mu2: f64, q: f64) -> f64 {
    let sd = q.sqrt();
    let (lo, hi) = (mu1.min(mu2) - 12.0 * sd, mu1.max(mu2) + 12.0 * sd);
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| (scalar_density(x, mu1, q) - scalar_density(x, mu2, q)).abs();
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    0.5 * s * h / 3.0
}

/// Scalar Gaussian total-variation check: quadrature against the bound.
pub fn check_gaussian_tv_bound(mu1: &[f64], mu2: &[f64], q: &nalgebra::DMatrix<f64>) -> Result<GaussianTvCheck> {
    if mu1.len() != 1 {
        return Err(Error::dim("tv quadrature dimension", 1, mu1.len()));
    }
    let bound = gaussian_tv_bound(mu1, mu2, q)?;
    Ok(GaussianTvCheck {
        tv_estimate: scalar_tv_quadrature(mu1[0], mu2[0], q[(0, 0)]),
        bound,
    })
}

/// Random positive probability vector.
fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// Unimodal likelihood in `(0, 1]` with its maximum 1 at a random state.
pub fn random_unimodal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mode = rng.random_range(0..n);
    let mut g = vec![1.0; n];
    for x in (0..mode).rev() {
        g[x] = g[x + 1] * rng.random_range(0.1..0.95);
    }
    for x in mode + 1..n {
        g[x] = g[x - 1] * rng.random_range(0.1..0.95);
    }
    g
}

/// Random instance with `2..=max_states` states, horizon `1..=max_t`,
/// unimodal likelihoods and grid-step nudge maps of random strength.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_t: usize) -> FiniteHmm {
    let n = rng.random_range(2..=max_states.clamp(2, MAX_STATES));
    let t_len = rng.random_range(1..=max_t.max(1));
    let prior = random_simplex(n, rng);
    let kernels = (0..t_len)
        .map(|_| (0..n).map(|_| random_simplex(n, rng)).collect())
        .collect();
    let likelihoods: Vec<Vec<f64>> = (0..t_len).map(|_| random_unimodal(n, rng)).collect();
    let nudge_maps = likelihoods
        .iter()
        .map(|g| grid_step_map(g, rng.random_range(0.0..=1.0)))
        .collect();
    FiniteHmm::new(prior, kernels, likelihoods, nudge_maps).expect("generator builds valid instances")
}
