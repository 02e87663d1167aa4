//! The four experiments. Each is a pure function of the configuration and
//! returns an in-memory report; writing files is left to [`crate::output`].

use nalgebra::{DMatrix, DVector};
use nudge_core::models::{lgssm4_spec, simulate_lgssm4, simulate_lorenz, LorenzData};
use nudge_core::oracle::{
    check_gaussian_tv_bound, check_maximiser_map, check_path_error_bound, check_step_existence_grid,
    exact_evidence, random_instance, AdditivePathFn, FiniteHmm, Variant,
};
use nudge_core::{lipschitz_constant, run_kf, Error, FilterTrace, NudgeConfig, RngStream};
use nudge_core::particle::{run_pf_partial, ResamplingScheme};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LorenzSection, Scenario};
use crate::error::{CliError, CliResult};
use crate::report::{ReplicationRecord, RunReport, SweepReport, SweepRow};

/// Runs `f` on a pool capped by `EXPCLI_THREADS` when set.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let threads = match std::env::var("EXPCLI_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("EXPCLI_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// `NMSE_t` of `estimates` against the first `estimates.len()` states, with
/// the energy taken over the whole of `truth`. Equals the usual series for
/// complete traces and stays comparable for truncated ones.
pub fn nmse_against(truth: &[DVector<f64>], estimates: &[DVector<f64>]) -> Vec<f64> {
    let energy = truth.iter().map(|x| x.norm_squared()).sum::<f64>() / truth.len().max(1) as f64;
    truth
        .iter()
        .zip(estimates)
        .map(|(x, e)| (x - e).norm_squared() / energy)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- LGSSM sweep

/// Exact Kalman evidences of the true, misspecified and nudged misspecified
/// models over the step-size grid. Seeds are `seed, seed + 1, …`; every grid
/// point reuses the same simulated data per seed.
pub fn lgssm_sweep(cfg: &ExperimentConfig) -> CliResult<SweepReport> {
    cfg.validate(crate::config::Experiment::LgssmSweep)?;
    let model = &cfg.lgssm.model;
    let grid = cfg.lgssm.gamma_grid.values();
    let l = lipschitz_constant(&model.c(), &model.r())?;
    let true_spec = lgssm4_spec(model, false)?;
    let missp_spec = lgssm4_spec(model, true)?;
    let seeds: Vec<u64> = (0..cfg.replications as u64).map(|r| cfg.seed.wrapping_add(r)).collect();

    let per_seed: Vec<Vec<SweepRow>> = with_pool(|| {
        seeds
            .par_iter()
            .map(|&seed| -> CliResult<Vec<SweepRow>> {
                let data = simulate_lgssm4(model, RngStream::new(seed, 0))?;
                let states = &data.truth[1..];
                let nmse = |tr: &FilterTrace| mean(&nmse_against(states, &tr.estimates));
                let t = run_kf(&true_spec, &data.observations, &NudgeConfig::identity())?;
                let m = run_kf(&missp_spec, &data.observations, &NudgeConfig::identity())?;
                grid.iter()
                    .map(|&gamma| {
                        let n = run_kf(
                            &missp_spec,
                            &data.observations,
                            &NudgeConfig::gradient_ascent(gamma, l)?,
                        )?;
                        Ok(SweepRow {
                            gamma,
                            seed,
                            loglik_true: t.total_loglik,
                            loglik_missp: m.total_loglik,
                            loglik_nudged: n.total_loglik,
                            nmse_true: nmse(&t),
                            nmse_missp: nmse(&m),
                            nmse_nudged: nmse(&n),
                        })
                    })
                    .collect()
            })
            .collect::<CliResult<Vec<_>>>()
    })??;

    // grid-major order: all seeds for the first γ, then the next
    let rows = (0..grid.len())
        .flat_map(|g| per_seed.iter().map(move |rows| rows[g]))
        .collect();
    Ok(SweepReport::new(seeds, 2.0 / l, rows))
}

// ---------------------------------------------------------------- Lorenz

/// Random stream of replication `rep`, attempt `attempt`. Substream 0 drives
/// the data and substream 1 the filters.
pub fn replication_stream(seed: u64, rep: usize, attempt: usize) -> RngStream {
    RngStream::new(seed, rep as u64).substream(attempt as u64)
}

/// Plain and nudged particle filters on one simulated data set. Both filters
/// use the same random stream, so with `γ = 0` they coincide.
#[derive(Debug, Clone)]
pub struct PairRun {
    pub scenario: Scenario,
    pub data: LorenzData,
    pub plain: FilterTrace,
    pub plain_error: Option<Error>,
    pub nudged: FilterTrace,
    pub nudged_error: Option<Error>,
}

impl PairRun {
    pub fn error(&self) -> Option<&Error> {
        self.plain_error.as_ref().or(self.nudged_error.as_ref())
    }

    /// `inc_nudged − inc_plain` over the steps both filters completed.
    pub fn increment_differences(&self) -> Vec<f64> {
        self.nudged
            .inc_loglik
            .iter()
            .zip(&self.plain.inc_loglik)
            .map(|(n, p)| n - p)
            .collect()
    }
}

pub fn run_pair(sec: &LorenzSection, scenario: Scenario, stream: RngStream) -> CliResult<PairRun> {
    let data_cfg = sec.data_model(scenario);
    let data = simulate_lorenz(&data_cfg, stream.substream(0))?;
    let spec = data_cfg.spec_with(sec.filter_theta(scenario))?;
    let nudge = NudgeConfig::for_observation(sec.gamma(), &spec.observation)?;
    let filter_stream = stream.substream(1);
    let run = |cfg: &NudgeConfig| {
        run_pf_partial(&spec, &data.observations, cfg, sec.particles, filter_stream, ResamplingScheme::Systematic)
    };
    let (plain, plain_error) = run(&NudgeConfig::identity());
    let (nudged, nudged_error) = run(&nudge);
    Ok(PairRun { scenario, data, plain, plain_error, nudged, nudged_error })
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateEnsemble { .. } | Error::DivergedState { .. } | Error::NonFinite(_)
    )
}

/// One Monte Carlo replication. Failed attempts are re-seeded with the next
/// attempt substream and counted.
pub fn lorenz_replication(
    sec: &LorenzSection,
    scenario: Scenario,
    seed: u64,
    rep: usize,
) -> CliResult<ReplicationRecord> {
    let mut last = None;
    for attempt in 0..sec.max_attempts {
        let pair = match run_pair(sec, scenario, replication_stream(seed, rep, attempt)) {
            Ok(p) => p,
            Err(CliError::Model(e)) if recoverable(&e) => {
                last = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Some(e) = pair.error() {
            if !recoverable(e) {
                return Err(e.clone().into());
            }
            log::warn!("{} replication {rep} attempt {attempt}: {e}; re-seeding", scenario.name());
            last = Some(e.clone());
            continue;
        }
        let truth = &pair.data.truth;
        let nb = nmse_against(truth, &pair.plain.estimates);
        let nn = nmse_against(truth, &pair.nudged.estimates);
        return Ok(ReplicationRecord {
            scenario,
            replication: rep,
            seed,
            attempt,
            degeneracy_events: attempt,
            total_loglik_base: pair.plain.total_loglik,
            total_loglik_nudged: pair.nudged.total_loglik,
            evidence_base: pair.plain.total_loglik_unnormalized(),
            evidence_nudged: pair.nudged.total_loglik_unnormalized(),
            final_nmse_base: nb.last().copied().unwrap_or(f64::NAN),
            final_nmse_nudged: nn.last().copied().unwrap_or(f64::NAN),
            mean_nmse_base: mean(&nb),
            mean_nmse_nudged: mean(&nn),
        });
    }
    Err(last.unwrap_or(Error::InvalidModel("no attempts configured".into())).into())
}

/// Replicated plain versus nudged particle filters for every configured
/// scenario.
pub fn lorenz_mc(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    cfg.validate(crate::config::Experiment::LorenzMc)?;
    let sec = &cfg.lorenz;
    let jobs: Vec<(Scenario, usize)> = sec
        .scenarios
        .iter()
        .flat_map(|&s| (0..cfg.replications).map(move |r| (s, r)))
        .collect();
    let records = with_pool(|| {
        jobs.par_iter()
            .map(|&(s, r)| lorenz_replication(sec, s, cfg.seed, r))
            .collect::<CliResult<Vec<_>>>()
    })??;
    Ok(RunReport::new(cfg.seed, sec.particles, sec.gamma(), records))
}

/// Summary of a single Lorenz run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub steps: usize,
    pub steps_plain: usize,
    pub steps_nudged: usize,
    pub error: Option<String>,
    pub evidence_plain: f64,
    pub evidence_nudged: f64,
    pub final_nmse_plain: Option<f64>,
    pub final_nmse_nudged: Option<f64>,
    pub mean_nmse_plain: Option<f64>,
    pub mean_nmse_nudged: Option<f64>,
    pub mean_increment_difference: Option<f64>,
    pub positive_increment_fraction: Option<f64>,
}

impl RunSummary {
    pub fn from_pair(pair: &PairRun) -> Self {
        let truth = &pair.data.truth;
        let nb = nmse_against(truth, &pair.plain.estimates);
        let nn = nmse_against(truth, &pair.nudged.estimates);
        let diffs = pair.increment_differences();
        let some = |v: &[f64], f: fn(&[f64]) -> f64| (!v.is_empty()).then(|| f(v));
        Self {
            scenario: pair.scenario,
            steps: truth.len(),
            steps_plain: pair.plain.len(),
            steps_nudged: pair.nudged.len(),
            error: pair.error().map(|e| e.to_string()),
            evidence_plain: pair.plain.total_loglik_unnormalized(),
            evidence_nudged: pair.nudged.total_loglik_unnormalized(),
            final_nmse_plain: nb.last().copied(),
            final_nmse_nudged: nn.last().copied(),
            mean_nmse_plain: some(&nb, mean),
            mean_nmse_nudged: some(&nn, mean),
            mean_increment_difference: some(&diffs, mean),
            positive_increment_fraction: some(&diffs, |d| {
                d.iter().filter(|v| **v > 0.0).count() as f64 / d.len() as f64
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LorenzRunOutput {
    pub runs: Vec<PairRun>,
    pub summaries: Vec<RunSummary>,
}

/// A single replication (the base seed, attempt 0) per scenario. Filter
/// failures do not abort the run; the completed part of each trace is kept.
pub fn lorenz_run(cfg: &ExperimentConfig) -> CliResult<LorenzRunOutput> {
    cfg.validate(crate::config::Experiment::LorenzRun)?;
    let sec = &cfg.lorenz;
    let runs = with_pool(|| {
        sec.scenarios
            .par_iter()
            .map(|&s| run_pair(sec, s, replication_stream(cfg.seed, 0, 0)))
            .collect::<CliResult<Vec<_>>>()
    })??;
    for r in &runs {
        if let Some(e) = r.error() {
            log::warn!("{}: {e}; keeping the partial trace", r.scenario.name());
        }
    }
    let summaries = runs.iter().map(RunSummary::from_pair).collect();
    Ok(LorenzRunOutput { runs, summaries })
}

// ---------------------------------------------------------------- verify

pub const CHECK_EVIDENCE_MATCH: &str = "nudged_alternative_evidence";
pub const CHECK_PATH_BOUND: &str = "path_error_bound";
pub const CHECK_EXISTENCE: &str = "positive_step_existence";
pub const CHECK_MAXIMISER: &str = "maximiser_map";
pub const CHECK_TV: &str = "gaussian_tv_bound";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub case: usize,
    pub instance: Option<FiniteHmm>,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Scalar mean pair and variance for the TV check.
pub fn random_tv_case<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64, f64) {
    let q = rng.random_range(0.05..5.0);
    let m1 = rng.random_range(-3.0..3.0);
    let m2 = m1 + rng.random_range(-2.0..2.0);
    (m1, m2, q)
}

/// Runs every oracle check on random instances drawn from `seed`.
pub fn verify(cfg: &ExperimentConfig) -> CliResult<VerifyReport> {
    let v = &cfg.verify;
    if v.instances == 0 {
        log::warn!("verify: zero instances requested, finite-model checks pass vacuously");
    }
    let mut rng = RngStream::new(cfg.seed, 0).rng();
    let cases: Vec<(FiniteHmm, AdditivePathFn)> = (0..v.instances)
        .map(|_| {
            let h = random_instance(&mut rng, v.max_states, v.max_horizon);
            let phi = AdditivePathFn::random(h.n_states(), h.horizon(), &mut rng);
            (h, phi)
        })
        .collect();
    let grid: Vec<f64> = match v.step_grid_points {
        0 | 1 => vec![0.0, 1.0],
        k => (0..k).map(|i| i as f64 / (k - 1) as f64).collect(),
    };

    type CaseResult = CliResult<Vec<(&'static str, Option<serde_json::Value>)>>;
    let per_case: Vec<Vec<(&'static str, Option<serde_json::Value>)>> = with_pool(|| {
        cases
            .par_iter()
            .map(|(h, phi)| -> CaseResult {
                let mut out = Vec::with_capacity(4);
                let a = exact_evidence(h, Variant::Nudged);
                let b = exact_evidence(h, Variant::Alternative);
                out.push((
                    CHECK_EVIDENCE_MATCH,
                    ((a - b).abs() > 1e-12).then(|| serde_json::json!({ "nudged": a, "alternative": b })),
                ));
                let pb = check_path_error_bound(h, |p| phi.eval(p))?;
                out.push((
                    CHECK_PATH_BOUND,
                    (!pb.holds()).then(|| serde_json::json!({ "bound": pb, "phi": phi })),
                ));
                let t1 = check_step_existence_grid(h, &grid);
                out.push((CHECK_EXISTENCE, (!t1.exists).then(|| serde_json::json!(t1))));
                let mx = check_maximiser_map(h);
                out.push((CHECK_MAXIMISER, (!mx.holds()).then(|| serde_json::json!(mx))));
                Ok(out)
            })
            .collect::<CliResult<Vec<_>>>()
    })??;

    let mut checks: Vec<CheckOutcome> = [CHECK_EVIDENCE_MATCH, CHECK_PATH_BOUND, CHECK_EXISTENCE, CHECK_MAXIMISER]
        .iter()
        .map(|n| CheckOutcome { name: n.to_string(), cases: cases.len(), violations: 0 })
        .collect();
    let mut violations = Vec::new();
    for (i, results) in per_case.into_iter().enumerate() {
        for (k, (name, detail)) in results.into_iter().enumerate() {
            if let Some(detail) = detail {
                checks[k].violations += 1;
                violations.push(Violation {
                    check: name.to_string(),
                    case: i,
                    instance: Some(cases[i].0.clone()),
                    detail,
                });
            }
        }
    }

    let mut rng = RngStream::new(cfg.seed, 1).rng();
    let tv_cases: Vec<(f64, f64, f64)> = (0..v.tv_cases).map(|_| random_tv_case(&mut rng)).collect();
    let tv = with_pool(|| {
        tv_cases
            .par_iter()
            .map(|&(m1, m2, q)| check_gaussian_tv_bound(&[m1], &[m2], &DMatrix::from_element(1, 1, q)))
            .collect::<nudge_core::Result<Vec<_>>>()
    })??;
    let mut tv_outcome = CheckOutcome { name: CHECK_TV.into(), cases: tv.len(), violations: 0 };
    for (i, (c, &(m1, m2, q))) in tv.iter().zip(&tv_cases).enumerate() {
        if !c.holds() {
            tv_outcome.violations += 1;
            violations.push(Violation {
                check: CHECK_TV.into(),
                case: i,
                instance: None,
                detail: serde_json::json!({ "mu1": m1, "mu2": m2, "q": q, "result": c }),
            });
        }
    }
    checks.push(tv_outcome);
    Ok(VerifyReport { seed: cfg.seed, checks, violations })
}
