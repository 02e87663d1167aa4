//! Per-replication records with their summary statistics, and the sweep
//! table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); zero when `n < 2`.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, sd: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            n,
            mean,
            sd,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Field-wise agreement within `tol` (relative to magnitude for large
    /// values).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let close = |a: f64, b: f64| {
            (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
        };
        self.n == other.n
            && close(self.mean, other.mean)
            && close(self.sd, other.sd)
            && close(self.min, other.min)
            && close(self.max, other.max)
    }
}

/// One Lorenz Monte Carlo replication. "base" is the plain filter and
/// "nudged" its nudged counterpart, both run on the same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub scenario: Scenario,
    pub replication: usize,
    pub seed: u64,
    /// Attempt index that succeeded (0 when the first try worked).
    pub attempt: usize,
    /// Failed attempts before this record was produced.
    pub degeneracy_events: usize,
    pub total_loglik_base: f64,
    pub total_loglik_nudged: f64,
    /// Evidence with the likelihood taken up to proportionality.
    pub evidence_base: f64,
    pub evidence_nudged: f64,
    pub final_nmse_base: f64,
    pub final_nmse_nudged: f64,
    /// Time average of the NMSE series.
    pub mean_nmse_base: f64,
    pub mean_nmse_nudged: f64,
}

pub const RECORD_FIELDS: [&str; 8] = [
    "total_loglik_base",
    "total_loglik_nudged",
    "evidence_base",
    "evidence_nudged",
    "final_nmse_base",
    "final_nmse_nudged",
    "mean_nmse_base",
    "mean_nmse_nudged",
];

impl ReplicationRecord {
    pub fn field(&self, name: &str) -> Option<f64> {
        Some(match name {
            "total_loglik_base" => self.total_loglik_base,
            "total_loglik_nudged" => self.total_loglik_nudged,
            "evidence_base" => self.evidence_base,
            "evidence_nudged" => self.evidence_nudged,
            "final_nmse_base" => self.final_nmse_base,
            "final_nmse_nudged" => self.final_nmse_nudged,
            "mean_nmse_base" => self.mean_nmse_base,
            "mean_nmse_nudged" => self.mean_nmse_nudged,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub replications: usize,
    pub degeneracy_events: usize,
    pub stats: BTreeMap<String, SummaryStats>,
}

impl ScenarioSummary {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ReplicationRecord>) -> Self {
        let records: Vec<&ReplicationRecord> = records.into_iter().collect();
        let stats = RECORD_FIELDS
            .iter()
            .map(|&f| {
                let v: Vec<f64> = records.iter().map(|r| r.field(f).unwrap()).collect();
                (f.to_string(), SummaryStats::from_values(&v))
            })
            .collect();
        Self {
            replications: records.len(),
            degeneracy_events: records.iter().map(|r| r.degeneracy_events).sum(),
            stats,
        }
    }

    pub fn mean(&self, field: &str) -> f64 {
        self.stats.get(field).map_or(f64::NAN, |s| s.mean)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.replications == other.replications
            && self.degeneracy_events == other.degeneracy_events
            && self.stats.len() == other.stats.len()
            && self
                .stats
                .iter()
                .all(|(k, s)| other.stats.get(k).is_some_and(|o| s.approx_eq(o, tol)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub particles: usize,
    pub gamma: f64,
    pub records: Vec<ReplicationRecord>,
    pub summary: BTreeMap<Scenario, ScenarioSummary>,
}

impl RunReport {
    pub fn new(seed: u64, particles: usize, gamma: f64, records: Vec<ReplicationRecord>) -> Self {
        let summary = summarize(&records);
        Self { seed, particles, gamma, records, summary }
    }

    pub fn scenario(&self, s: Scenario) -> Option<&ScenarioSummary> {
        self.summary.get(&s)
    }

    /// Whether the stored summary matches a fresh recomputation from the
    /// records within `tol`.
    pub fn summary_consistent(&self, tol: f64) -> bool {
        let fresh = summarize(&self.records);
        fresh.len() == self.summary.len()
            && fresh
                .iter()
                .all(|(k, s)| self.summary.get(k).is_some_and(|o| s.approx_eq(o, tol)))
    }
}

pub fn summarize(records: &[ReplicationRecord]) -> BTreeMap<Scenario, ScenarioSummary> {
    let mut by: BTreeMap<Scenario, Vec<&ReplicationRecord>> = BTreeMap::new();
    for r in records {
        by.entry(r.scenario).or_default().push(r);
    }
    by.into_iter()
        .map(|(k, v)| (k, ScenarioSummary::from_records(v)))
        .collect()
}

/// One `(γ, seed)` cell of the linear-Gaussian sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub seed: u64,
    pub loglik_true: f64,
    pub loglik_missp: f64,
    pub loglik_nudged: f64,
    pub nmse_true: f64,
    pub nmse_missp: f64,
    pub nmse_nudged: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    pub gamma: f64,
    pub loglik_true: SummaryStats,
    pub loglik_missp: SummaryStats,
    pub loglik_nudged: SummaryStats,
    pub nmse_true: SummaryStats,
    pub nmse_missp: SummaryStats,
    pub nmse_nudged: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seeds: Vec<u64>,
    /// Upper end `2/L` of the valid step sizes.
    pub gamma_upper: f64,
    pub rows: Vec<SweepRow>,
    pub per_gamma: Vec<GammaSummary>,
}

impl SweepReport {
    /// Groups rows (already ordered by grid index, then seed) by `γ`.
    pub fn new(seeds: Vec<u64>, gamma_upper: f64, rows: Vec<SweepRow>) -> Self {
        let mut per_gamma = Vec::new();
        let k = seeds.len().max(1);
        for chunk in rows.chunks(k) {
            let col = |f: fn(&SweepRow) -> f64| {
                SummaryStats::from_values(&chunk.iter().map(f).collect::<Vec<_>>())
            };
            per_gamma.push(GammaSummary {
                gamma: chunk[0].gamma,
                loglik_true: col(|r| r.loglik_true),
                loglik_missp: col(|r| r.loglik_missp),
                loglik_nudged: col(|r| r.loglik_nudged),
                nmse_true: col(|r| r.nmse_true),
                nmse_missp: col(|r| r.nmse_missp),
                nmse_nudged: col(|r| r.nmse_nudged),
            });
        }
        Self { seeds, gamma_upper, rows, per_gamma }
    }
}
