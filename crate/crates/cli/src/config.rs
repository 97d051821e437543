//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use glwalk_core::blocking::{DEFAULT_J_C, DEFAULT_J_NU};
use glwalk_core::projective::DEFAULT_BURN_IN;
use glwalk_core::walk::DEFAULT_STEP_BUDGET;
use glwalk_core::EnsembleSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    /// Maximum number of matrix steps; scientific notation allowed.
    pub budget: Option<f64>,
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Size of a pre-drawn ν̂ pool; fresh burn-in draws when absent.
    pub pool: Option<usize>,
    /// One-step invariance self-test of ν̂, run by the lyapunov command.
    pub invariance: Option<InvarianceBlock>,
    pub lyapunov: Option<LyapunovBlock>,
    pub variance: Option<VarianceBlock>,
    pub be_curve: Option<BeCurveBlock>,
    pub rate_fit: Option<RateFitBlock>,
    pub depcoef: Option<DepcoefBlock>,
    pub blocks: Option<BlocksBlock>,
    pub gap: Option<GapBlock>,
    pub plot: Option<PlotBlock>,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceBlock {
    pub draws: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.01
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovBlock {
    pub n: u64,
    pub paths: usize,
}

/// Where λ̂ comes from: a recorded value or an estimate made in the run.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSpec {
    pub value: Option<f64>,
    pub se: Option<f64>,
    /// Path length of the run that produced `value`.
    pub run_length: Option<u64>,
    pub estimate: Option<LyapunovBlock>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum VarianceChoice {
    BatchMeans,
    CovarianceSeries,
    Both,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceBlock {
    #[serde(default = "default_variance_choice")]
    pub method: VarianceChoice,
    pub n_grid: Option<Vec<u64>>,
    pub paths: usize,
    /// Path length of the series method.
    #[serde(default = "default_series_length")]
    pub length: usize,
    pub series_paths: Option<usize>,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    pub lambda: Option<LambdaSpec>,
}

fn default_variance_choice() -> VarianceChoice {
    VarianceChoice::Both
}
fn default_series_length() -> usize {
    4096
}
fn default_max_lag() -> usize {
    glwalk_core::estimators::MAX_SERIES_LAG
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeCurveBlock {
    pub n_grid: Option<Vec<u64>>,
    pub paths: Option<usize>,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    pub lambda: LambdaSpec,
    /// Fixed ŝ; otherwise batch means over the run's own vec_norm columns.
    pub s_hat: Option<f64>,
    /// Paths per start of the worst-start observable.
    pub worst_start_paths: Option<usize>,
    #[serde(default)]
    pub write_samples: bool,
    /// Reads a samples CSV instead of simulating.
    pub samples_input: Option<PathBuf>,
}

fn default_observables() -> Vec<String> {
    vec!["vec_norm".into()]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateFitBlock {
    /// A be_curve CSV; the be_curve block is run first when absent.
    pub input: Option<PathBuf>,
    pub models: Option<Vec<String>>,
    pub q: Option<f64>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    pub observable: Option<String>,
}

fn default_resamples() -> usize {
    glwalk_core::estimators::MIN_BOOTSTRAP
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairStrategyBlock {
    #[serde(default = "default_pairs")]
    pub nu_pairs: usize,
    #[serde(default = "default_pairs")]
    pub orthogonal_pairs: usize,
    #[serde(default)]
    pub pinned: Vec<[Vec<f64>; 2]>,
}

fn default_pairs() -> usize {
    32
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepcoefBlock {
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    pub k_grid: Vec<u64>,
    pub replicates: usize,
    pub pair_strategy: Option<PairStrategyBlock>,
    /// Moment order for the decay check; skipped when absent.
    pub q: Option<f64>,
    pub violation_factor: Option<f64>,
}

fn default_p() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapBlock {
    pub n_grid: Vec<u64>,
    pub paths: usize,
    #[serde(default = "default_gap_directions")]
    pub j_nu: usize,
}

fn default_gap_directions() -> usize {
    glwalk_core::estimators::MIN_GAP_DIRECTIONS
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksBlock {
    pub lambda: Option<LambdaSpec>,
    pub r1: Option<R1Block>,
    pub growth: Option<GrowthBlock>,
    pub condvar: Option<CondVarBlock>,
    pub structure: Option<StructureBlock>,
    pub step1: Option<Step1Block>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct R1Block {
    pub p: f64,
    pub q: f64,
    pub m_grid: Vec<usize>,
    pub paths: usize,
    #[serde(default = "default_j_nu")]
    pub j_nu: usize,
    #[serde(default = "default_j_c")]
    pub j_c: usize,
}

fn default_j_nu() -> usize {
    DEFAULT_J_NU
}
fn default_j_c() -> usize {
    DEFAULT_J_C
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthBlock {
    pub q: f64,
    pub m_grid: Vec<usize>,
    pub paths: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CondVarBlock {
    pub m_grid: Vec<usize>,
    #[serde(default = "default_outer")]
    pub outer: usize,
    pub inner: usize,
    #[serde(default = "default_j_nu")]
    pub j_nu: usize,
}

fn default_outer() -> usize {
    128
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureBlock {
    pub m: Option<usize>,
    #[serde(rename = "N")]
    pub big_n: Option<usize>,
    pub n: Option<usize>,
    pub kappa: Option<f64>,
    pub replicates: Option<usize>,
    pub outer: Option<usize>,
    pub inner: Option<usize>,
    pub j_nu: Option<usize>,
    pub j_c: Option<usize>,
    pub t_grid: Option<Vec<f64>>,
    pub z: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step1Block {
    pub n: usize,
    pub m: usize,
    pub paths: usize,
    #[serde(default = "default_j_nu")]
    pub j_nu: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotBlock {
    pub input: Option<PathBuf>,
    pub kind: Option<String>,
    pub q: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config does not parse: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn ensemble(&self) -> Result<&EnsembleSpec, CliError> {
        self.ensemble.as_ref().ok_or_else(|| CliError::config("missing ensemble block"))
    }

    /// Budget from the environment override, the config, or the default.
    pub fn budget(&self, env: Option<&str>) -> Result<u128, CliError> {
        let raw = match env {
            Some(s) => Some(s.trim().parse::<f64>().map_err(|_| CliError::config(format!("GLWALK_BUDGET={s:?} is not a number")))?),
            None => self.budget,
        };
        match raw {
            None => Ok(DEFAULT_STEP_BUDGET),
            Some(b) if b >= 1.0 && b.is_finite() => Ok(b as u128),
            Some(b) => Err(CliError::config(format!("budget must be a positive number, got {b}"))),
        }
    }
}

pub fn require<'a, T>(block: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    block.as_ref().ok_or_else(|| CliError::config(format!("missing {name} block")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::parse(
            r#"{"seed": 3, "ensemble": {"d": 2, "family": {"kind": "rot_diag_rot", "tail_index": 4.5}}, "gap": {"n_grid": [1, 10], "paths": 4}}"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.burn_in, DEFAULT_BURN_IN);
        assert_eq!(c.gap.unwrap().j_nu, 16);
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let e = ExperimentConfig::parse(r#"{"seed": 1, "sed": 2}"#).unwrap_err();
        assert_eq!(e.code(), 2);
    }

    #[test]
    fn budget_precedence() {
        let c = ExperimentConfig::parse(r#"{"budget": 1e6}"#).unwrap();
        assert_eq!(c.budget(None).unwrap(), 1_000_000);
        assert_eq!(c.budget(Some("2e3")).unwrap(), 2000);
        assert!(c.budget(Some("lots")).is_err());
        assert!(ExperimentConfig::parse(r#"{"budget": -1}"#).unwrap().budget(None).is_err());
        assert_eq!(ExperimentConfig::parse("{}").unwrap().budget(None).unwrap(), DEFAULT_STEP_BUDGET);
    }
}
