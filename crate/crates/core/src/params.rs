use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};

/// Target privacy budget `(epsilon, delta)` and query sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
}

impl PrivacyParams {
    /// Validates `epsilon > 0`, `0 < delta < 1` and `sensitivity > 0`.
    pub fn new(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        let p = Self { epsilon, delta, sensitivity };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(DpError::InvalidParams(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DpError::InvalidParams(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity.is_finite()) {
            return Err(DpError::InvalidParams(format!(
                "sensitivity must be positive, got {}",
                self.sensitivity
            )));
        }
        Ok(())
    }

    /// Same budget with unit sensitivity.
    pub(crate) fn normalized(&self) -> Self {
        Self { sensitivity: 1.0, ..*self }
    }

    /// Same budget with `delta` replaced.
    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }
}

/// Mechanism family tag used in results, configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    AnalyticGaussian,
    MultiGaussian,
    QuasiGaussian,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] =
        [Mechanism::AnalyticGaussian, Mechanism::MultiGaussian, Mechanism::QuasiGaussian];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mechanism::AnalyticGaussian => "analytic-gaussian",
            Mechanism::MultiGaussian => "multi-gaussian",
            Mechanism::QuasiGaussian => "quasi-gaussian",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic-gaussian" => Ok(Mechanism::AnalyticGaussian),
            "multi-gaussian" => Ok(Mechanism::MultiGaussian),
            "quasi-gaussian" => Ok(Mechanism::QuasiGaussian),
            other => Err(DpError::InvalidArgument(format!(
                "unknown mechanism '{other}' (expected analytic-gaussian, multi-gaussian or quasi-gaussian)"
            ))),
        }
    }
}

/// Which expected loss a calibration sweep optimizes and reports against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    L1,
    L2,
}

impl std::str::FromStr for LossKind {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            other => Err(DpError::InvalidArgument(format!("unknown loss '{other}' (expected l1 or l2)"))),
        }
    }
}

/// Relative improvement `100 (a - m) / max(a, m)` of loss `m` over baseline `a`.
pub fn improvement_pct(baseline: f64, mechanism: f64) -> f64 {
    100.0 * (baseline - mechanism) / baseline.max(mechanism)
}
