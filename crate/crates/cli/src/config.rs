//! Experiment configuration, read from TOML. Every field has a default, so an
//! empty file (or no file) runs the reference setup.

use std::path::{Path, PathBuf};

use nudge_core::models::{Lgssm4Config, Lorenz63Config};
use nudge_core::{lipschitz_constant, LorenzParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LgssmSweep,
    LorenzRun,
    LorenzMc,
    Verify,
}

impl Experiment {
    pub fn dir_name(self) -> &'static str {
        match self {
            Experiment::LgssmSweep => "lgssm-sweep",
            Experiment::LorenzRun => "lorenz-run",
            Experiment::LorenzMc => "lorenz-mc",
            Experiment::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaGrid {
    pub points: usize,
    pub min: f64,
    pub max: f64,
    pub spacing: Spacing,
    /// Explicit values; overrides `points`, `min`, `max`.
    pub values: Option<Vec<f64>>,
}

impl Default for GammaGrid {
    fn default() -> Self {
        Self {
            points: 30,
            min: 5e-3,
            max: 0.15,
            spacing: Spacing::Log,
            values: None,
        }
    }
}

impl GammaGrid {
    pub fn values(&self) -> Vec<f64> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        match self.points {
            0 => Vec::new(),
            1 => vec![self.min],
            n => (0..n)
                .map(|i| {
                    if i == 0 {
                        return self.min;
                    }
                    if i == n - 1 {
                        return self.max;
                    }
                    let u = i as f64 / (n - 1) as f64;
                    match self.spacing {
                        Spacing::Log => (self.min.ln() + u * (self.max / self.min).ln()).exp(),
                        Spacing::Linear => self.min + u * (self.max - self.min),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct LgssmSection {
    #[serde(flatten)]
    pub model: Lgssm4Config,
    pub gamma_grid: GammaGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Filter with the data-generating parameters.
    WellSpecified,
    /// `B` offset by `mismatch_eps`.
    Mismatched,
    /// All parameters scaled by `extreme_scale`, with the first two
    /// coordinates observed.
    Extreme,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::WellSpecified, Scenario::Mismatched, Scenario::Extreme];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::WellSpecified => "well-specified",
            Scenario::Mismatched => "mismatched",
            Scenario::Extreme => "extreme",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LorenzSection {
    #[serde(flatten)]
    pub model: Lorenz63Config,
    pub particles: usize,
    /// Nudging step; `0.8 σ²` when absent.
    pub gamma: Option<f64>,
    pub scenarios: Vec<Scenario>,
    pub mismatch_eps: f64,
    pub extreme_scale: f64,
    /// Attempts per replication before it is given up.
    pub max_attempts: usize,
}

impl Default for LorenzSection {
    fn default() -> Self {
        Self {
            model: Lorenz63Config::default(),
            particles: 500,
            gamma: None,
            scenarios: Scenario::ALL.to_vec(),
            mismatch_eps: 11.0 / 5.0,
            extreme_scale: 2.0,
            max_attempts: 5,
        }
    }
}

impl LorenzSection {
    /// Data-generating model for a scenario.
    pub fn data_model(&self, scenario: Scenario) -> Lorenz63Config {
        let mut cfg = self.model.clone();
        if scenario == Scenario::Extreme {
            cfg.obs_dims = vec![0, 1];
        }
        cfg
    }

    /// Parameters assumed by the filters.
    pub fn filter_theta(&self, scenario: Scenario) -> LorenzParams {
        match scenario {
            Scenario::WellSpecified => self.model.theta,
            Scenario::Mismatched => self.model.theta.with_b_offset(self.mismatch_eps),
            Scenario::Extreme => self.model.theta.scaled(self.extreme_scale),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(0.8 * self.model.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySection {
    pub instances: usize,
    pub tv_cases: usize,
    pub max_states: usize,
    pub max_horizon: usize,
    /// Number of points of the `[0, 1]` step grid searched per time step.
    pub step_grid_points: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            instances: 200,
            tv_cases: 100,
            max_states: 6,
            max_horizon: 4,
            step_grid_points: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Seeds per grid point for the sweep, Monte Carlo runs otherwise.
    pub replications: usize,
    pub out_dir: PathBuf,
    pub lgssm: LgssmSection,
    pub lorenz: LorenzSection,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            replications: 20,
            out_dir: PathBuf::from("results"),
            lgssm: LgssmSection::default(),
            lorenz: LorenzSection::default(),
            verify: VerifySection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> CliResult<Self> {
        toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::from_toml_str(&text)
    }

    /// Checks the parts used by `experiment`.
    pub fn validate(&self, experiment: Experiment) -> CliResult<()> {
        if self.replications == 0 && experiment != Experiment::Verify {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        match experiment {
            Experiment::LgssmSweep => {
                let grid = self.lgssm.gamma_grid.values();
                if grid.is_empty() {
                    return Err(CliError::Config("gamma grid is empty".into()));
                }
                let m = &self.lgssm.model;
                let l = lipschitz_constant(&m.c(), &m.r())?;
                let upper = 2.0 / l;
                if let Some(&bad) = grid.iter().find(|g| !(0.0..upper).contains(*g)) {
                    return Err(nudge_core::Error::InvalidStepSize { gamma: bad, upper }.into());
                }
            }
            Experiment::LorenzRun | Experiment::LorenzMc => {
                let s = &self.lorenz;
                if s.particles == 0 || s.max_attempts == 0 || s.scenarios.is_empty() {
                    return Err(CliError::Config(
                        "lorenz needs particles, max_attempts and scenarios to be non-empty".into(),
                    ));
                }
                for &sc in &s.scenarios {
                    s.data_model(sc).validate()?;
                    let obs = s.data_model(sc).observation()?;
                    nudge_core::NudgeConfig::for_observation(s.gamma(), &obs)?;
                }
            }
            Experiment::Verify => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_setup() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.lorenz.particles, 500);
        assert_eq!(cfg.lorenz.model.t_len, 500);
        assert!((cfg.lorenz.gamma() - 0.8).abs() < 1e-15);
        assert_eq!(cfg.lgssm.model.kappa, 0.04);
        assert_eq!(cfg.lgssm.gamma_grid.values().len(), 30);
    }

    #[test]
    fn grid_spans_interval() {
        let g = GammaGrid::default().values();
        assert_eq!((g[0], g[29]), (5e-3, 0.15));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let lin = GammaGrid { spacing: Spacing::Linear, points: 3, min: 0.0, max: 1.0, values: None };
        assert_eq!(lin.values(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn partial_tables_override_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            seed = 7
            replications = 3
            [lgssm]
            sigma_obs = 0.2
            t_len = 40
            [lgssm.gamma_grid]
            values = [0.0, 0.01]
            [lorenz]
            particles = 100
            t_len = 50
            scenarios = ["mismatched"]
            [lorenz.theta]
            s = 10.0
            r = 28.0
            b = 3.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.lgssm.model.sigma_obs, 0.2);
        assert_eq!(cfg.lgssm.model.kappa, 0.04);
        assert_eq!(cfg.lgssm.gamma_grid.values(), vec![0.0, 0.01]);
        assert_eq!(cfg.lorenz.model.t_len, 50);
        assert_eq!(cfg.lorenz.model.h, 1e-3);
        assert_eq!(cfg.lorenz.model.theta.b, 3.0);
        assert_eq!(cfg.lorenz.scenarios, vec![Scenario::Mismatched]);
    }

    #[test]
    fn invalid_settings_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.lgssm.gamma_grid.values = Some(vec![0.1, 0.3]);
        assert!(cfg.validate(Experiment::LgssmSweep).is_err());
        cfg.lgssm.gamma_grid.values = Some(vec![]);
        assert!(cfg.validate(Experiment::LgssmSweep).is_err());
        let cfg = ExperimentConfig { replications: 0, ..Default::default() };
        assert!(cfg.validate(Experiment::LorenzMc).is_err());
        assert!(ExperimentConfig::from_toml_str("replications = \"x\"").is_err());
        assert!(ExperimentConfig::default().validate(Experiment::LgssmSweep).is_ok());
        assert!(ExperimentConfig::default().validate(Experiment::LorenzMc).is_ok());
    }

    #[test]
    fn scenario_models() {
        let s = LorenzSection::default();
        assert_eq!(s.data_model(Scenario::Extreme).obs_dims, vec![0, 1]);
        assert_eq!(s.data_model(Scenario::Mismatched).obs_dims, vec![0]);
        let t = s.filter_theta(Scenario::Mismatched);
        assert!((t.b - (8.0 / 3.0 + 2.2)).abs() < 1e-12);
        assert_eq!(s.filter_theta(Scenario::Extreme).r, 56.0);
    }
}
