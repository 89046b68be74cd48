//! TOML run configuration.
//!
//! Every section is optional; missing keys take the defaults shown by
//! [`Config::reference`]. Unknown keys are rejected with their location.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rcar::harness::{Statistic, Sweep};
use rcar::model::{ExpectationMode, ModelSpec, DEFAULT_BOUNDARY_TOL};
use rcar::moments::SeriesOptions;
use rcar::simulate::SimulationOptions;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Master seed; `RCAR_SEED` and `--seed` override it.
    #[serde(default)]
    pub seed: u64,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub simulation: SimulationOptions,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub estimation: EstimationOptions,
    pub experiment: Option<ExperimentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Covariance tables cover lags `0..=max_lag`.
    #[serde(default = "default_analysis_lag")]
    pub max_lag: usize,
    /// Frequencies at which the spectral density is reported.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Stationarity margin: a spectral radius must stay below `1 − boundary_tol`.
    #[serde(default = "default_boundary_tol")]
    pub boundary_tol: f64,
    #[serde(default)]
    pub series: SeriesOptions,
    #[serde(default)]
    pub expectation: ExpectationMode,
}

fn default_analysis_lag() -> usize {
    4
}

fn default_lambdas() -> Vec<f64> {
    (0..=8).map(|k| k as f64 * std::f64::consts::PI / 8.0).collect()
}

fn default_boundary_tol() -> f64 {
    DEFAULT_BOUNDARY_TOL
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            max_lag: default_analysis_lag(),
            lambdas: default_lambdas(),
            boundary_tol: default_boundary_tol(),
            series: SeriesOptions::default(),
            expectation: ExpectationMode::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    CrossSectional,
    PerIndividual,
    #[default]
    Both,
}

impl std::str::FromStr for Pathway {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cross_sectional" => Ok(Pathway::CrossSectional),
            "per_individual" => Ok(Pathway::PerIndividual),
            "both" => Ok(Pathway::Both),
            other => Err(format!(
                "unknown pathway `{other}` (expected cross_sectional, per_individual or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationOptions {
    /// Autoregressive order of the panel; defaults to `model.p`, then to the truth sidecar.
    pub order: Option<usize>,
    #[serde(default)]
    pub pathway: Pathway,
    /// Cross-sectional lags `0..=max_lag`; `Ω̂` needs at least 2.
    #[serde(default = "default_estimation_lag")]
    pub max_lag: usize,
    /// Per-individual moments `μ̂(v, u)` for `v ≤ max_power`, `u ≤ max_lag`.
    #[serde(default = "default_max_power")]
    pub max_power: usize,
}

fn default_estimation_lag() -> usize {
    2
}

fn default_max_power() -> usize {
    1
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            order: None,
            pathway: Pathway::default(),
            max_lag: default_estimation_lag(),
            max_power: default_max_power(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Consistency,
    Clt,
    AhatConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub sweep: Sweep,
    pub replications: usize,
    #[serde(default = "default_experiment_lags")]
    pub lags: Vec<usize>,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<Statistic>,
    /// Zero innovations in `Â_T` experiments.
    #[serde(default)]
    pub noiseless: bool,
    /// Pass band for the fitted log–log slope.
    #[serde(default)]
    pub slope_band: Option<[f64; 2]>,
}

fn default_experiment_lags() -> Vec<usize> {
    vec![0]
}

fn default_statistics() -> Vec<Statistic> {
    vec![Statistic::Bias, Statistic::Rmse, Statistic::Slope]
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn model(&self) -> Result<&ModelSpec> {
        let spec = self
            .model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [model] section".into()))?;
        spec.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(spec)
    }

    pub fn experiment(&self) -> Result<&ExperimentConfig> {
        self.experiment
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [experiment] section".into()))
    }

    /// A complete configuration with every default written out.
    pub fn reference() -> Self {
        use rcar::model::{CoefficientDistribution, NoiseSpec};
        Config {
            seed: 0,
            model: Some(ModelSpec {
                order: 1,
                coefficients: CoefficientDistribution::discrete(vec![vec![0.2], vec![0.4]], vec![0.5, 0.5])
                    .expect("valid reference law"),
                noise: NoiseSpec::Constant { sigma2: 1.0 },
                individuals: 100,
                horizon: 20,
            }),
            simulation: SimulationOptions::default(),
            analysis: AnalysisOptions::default(),
            estimation: EstimationOptions::default(),
            experiment: Some(ExperimentConfig {
                kind: ExperimentKind::Consistency,
                sweep: Sweep::Individuals(vec![100, 400, 1600]),
                replications: 200,
                lags: default_experiment_lags(),
                statistics: default_statistics(),
                noiseless: false,
                slope_band: Some([-0.65, -0.35]),
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable as TOML")
    }
}

/// Parses `--init` values: `exact_stationary`, `burn_in[:BURN]`, `ma_truncation:TERMS`.
pub fn parse_init(s: &str) -> std::result::Result<rcar::simulate::InitMode, String> {
    use rcar::simulate::{InitMode, DEFAULT_BURN_IN};
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    let number = |a: &str| a.parse::<usize>().map_err(|e| format!("invalid count `{a}` in --init: {e}"));
    match (kind, arg) {
        ("exact_stationary", None) => Ok(InitMode::ExactStationary),
        ("burn_in", None) => Ok(InitMode::BurnIn {
            burn: DEFAULT_BURN_IN,
            start: None,
        }),
        ("burn_in", Some(a)) => Ok(InitMode::BurnIn {
            burn: number(a)?,
            start: None,
        }),
        ("ma_truncation", Some(a)) => Ok(InitMode::MaTruncation { terms: number(a)? }),
        _ => Err(format!(
            "unknown init `{s}` (expected exact_stationary, burn_in[:BURN] or ma_truncation:TERMS)"
        )),
    }
}
