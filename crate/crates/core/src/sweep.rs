//! Calibration sweeps over an (epsilon, delta, mechanism) grid.
//!
//! Cells are independent and run through [`par::map`]; the rows are sorted
//! by `(epsilon, delta, mechanism)` afterwards, so the output order never
//! depends on scheduling. A failing cell becomes a row with a reason instead
//! of aborting the sweep.

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::multi_gaussian::{CalibrationHyper, ShortfallOptions, DEFAULT_ETA};
use crate::par::{self, Execution};
use crate::params::{LossKind, Mechanism, PrivacyParams};
use crate::result::{calibrate, CalibrationResult};
use crate::verifier::verify_calibrated_with;

/// Environment variable that overrides [`SweepConfig::parallelism`].
pub const THREADS_ENV: &str = "DPMIX_THREADS";

/// The epsilon values of the default grid.
pub const DEFAULT_EPSILONS: [f64; 10] = [0.1, 0.25, 0.5, 0.75, 1.0, 2.0, 3.0, 4.0, 5.0, 10.0];

/// The delta values of the default grid.
pub const DEFAULT_DELTAS: [f64; 15] =
    [5e-7, 1e-6, 5e-6, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 0.01, 0.02, 0.05, 0.1, 0.15, 0.25];

/// Table format written by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(DpError::InvalidArgument(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

fn default_sensitivity() -> f64 {
    1.0
}
fn default_mechanisms() -> Vec<Mechanism> {
    Mechanism::ALL.to_vec()
}
fn default_k_grid() -> Vec<u32> {
    (1..=20).collect()
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}
fn default_true() -> bool {
    true
}
fn default_refine() -> f64 {
    2.0
}
fn default_epsilons() -> Vec<f64> {
    DEFAULT_EPSILONS.to_vec()
}
fn default_deltas() -> Vec<f64> {
    DEFAULT_DELTAS.to_vec()
}

/// A sweep definition. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_sensitivity")]
    pub sensitivity: f64,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<Mechanism>,
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<u32>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub output_format: OutputFormat,
    /// Worker count; `None` uses every available core.
    #[serde(default)]
    pub parallelism: Option<usize>,
    /// Re-verify every calibrated cell.
    #[serde(default = "default_true")]
    pub verify: bool,
    /// Verifier grid refinement relative to the calibration grid.
    #[serde(default = "default_refine")]
    pub refine_factor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilons: default_epsilons(),
            deltas: default_deltas(),
            sensitivity: default_sensitivity(),
            mechanisms: default_mechanisms(),
            k_grid: default_k_grid(),
            eta: default_eta(),
            loss: LossKind::L1,
            output_format: OutputFormat::Csv,
            parallelism: None,
            verify: true,
            refine_factor: default_refine(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.deltas.is_empty() {
            return Err(DpError::InvalidArgument("epsilons and deltas must be nonempty".into()));
        }
        if self.mechanisms.is_empty() {
            return Err(DpError::InvalidArgument("mechanisms must be nonempty".into()));
        }
        for &e in &self.epsilons {
            for &d in &self.deltas {
                PrivacyParams::new(e, d, self.sensitivity)?;
            }
        }
        if self.mechanisms.contains(&Mechanism::MultiGaussian) {
            self.hyper().validate()?;
        }
        if !(self.refine_factor >= 1.0) {
            return Err(DpError::InvalidArgument("refine_factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn hyper(&self) -> CalibrationHyper {
        CalibrationHyper { eta: self.eta, k_grid: self.k_grid.clone(), loss: self.loss }
    }

    /// Worker count after applying the environment override.
    pub fn threads(&self) -> Option<usize> {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .or(self.parallelism)
    }
}

/// One sweep cell. Exactly one of `result` and `reason` is set, except that
/// a calibrated cell whose verification errored keeps its result and
/// carries the verifier's message as `reason`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mechanism: Mechanism,
    pub params: PrivacyParams,
    pub result: Option<CalibrationResult>,
    pub reason: Option<String>,
}

fn run_cell(
    mechanism: Mechanism,
    params: PrivacyParams,
    cfg: &SweepConfig,
    hyper: &CalibrationHyper,
    exec: Execution,
) -> SweepRow {
    let opts = ShortfallOptions { execution: exec, ..ShortfallOptions::default() };
    match calibrate(mechanism, &params, hyper, &opts) {
        Ok(mut res) => {
            let mut reason = None;
            if cfg.verify {
                match verify_calibrated_with(&res, cfg.refine_factor, exec) {
                    Ok(rep) => {
                        res.verify_slack = Some(rep.worst_slack);
                        if !rep.passed {
                            reason = Some(format!("verification failed at phi={}", rep.worst_phi));
                        }
                    }
                    Err(e) => reason = Some(format!("verification error: {e}")),
                }
            }
            SweepRow { mechanism, params, result: Some(res), reason }
        }
        Err(e) => {
            log::warn!("{mechanism} at ({}, {}) failed: {e}", params.epsilon, params.delta);
            SweepRow { mechanism, params, result: None, reason: Some(e.to_string()) }
        }
    }
}

/// Runs every `(epsilon, delta, mechanism)` cell of `cfg`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    run_sweep_with(cfg, Execution::default())
}

/// [`run_sweep`] with an explicit execution policy.
pub fn run_sweep_with(cfg: &SweepConfig, exec: Execution) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let hyper = cfg.hyper();
    let mut cells = Vec::new();
    for &e in &cfg.epsilons {
        for &d in &cfg.deltas {
            let p = PrivacyParams::new(e, d, cfg.sensitivity)?;
            let mut mechs = cfg.mechanisms.clone();
            mechs.sort();
            mechs.dedup();
            for m in mechs {
                cells.push((m, p));
            }
        }
    }
    let mut rows = par::with_threads(cfg.threads(), || {
        par::map(&cells, exec, |&(m, p)| run_cell(m, p, cfg, &hyper, exec))
    });
    rows.sort_by(|a, b| {
        a.params
            .epsilon
            .total_cmp(&b.params.epsilon)
            .then(a.params.delta.total_cmp(&b.params.delta))
            .then(a.mechanism.cmp(&b.mechanism))
    });
    Ok(rows)
}
