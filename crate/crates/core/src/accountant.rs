//! zCDP composition of Gaussian and multi-Gaussian mechanisms.
//!
//! Each entry with sensitivity `D_t` and scale `sigma_t` contributes
//! `rho_t = D_t^2 / (2 sigma_t^2)`. The composed mechanism is
//! `rho_tot`-zCDP and hence `(rho_tot + 2 sqrt(rho_tot log(1/delta_tot)), delta_tot)`-DP.

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::params::Mechanism;

/// One composed mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub sensitivity: f64,
    pub sigma: f64,
}

impl LedgerEntry {
    pub fn rho(&self) -> f64 {
        let r = self.sensitivity / self.sigma;
        0.5 * r * r
    }
}

/// Running zCDP total of a sequence of mechanisms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositionLedger {
    pub entries: Vec<LedgerEntry>,
    pub rho_total: f64,
}

impl CompositionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns a ledger with one more Gaussian or multi-Gaussian entry.
    pub fn add(&self, sensitivity: f64, sigma: f64) -> Result<Self> {
        if !(sensitivity > 0.0 && sensitivity.is_finite()) || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(DpError::Domain(format!(
                "ledger entries need positive sensitivity and sigma, got ({sensitivity}, {sigma})"
            )));
        }
        let entry = LedgerEntry { sensitivity, sigma };
        let mut next = self.clone();
        next.entries.push(entry);
        next.rho_total += entry.rho();
        Ok(next)
    }

    /// [`add`](Self::add) with a family tag; the quasi-Gaussian mechanism has
    /// no zCDP guarantee and is rejected.
    pub fn add_mechanism(&self, mechanism: Mechanism, sensitivity: f64, sigma: f64) -> Result<Self> {
        match mechanism {
            Mechanism::AnalyticGaussian | Mechanism::MultiGaussian => self.add(sensitivity, sigma),
            Mechanism::QuasiGaussian => Err(DpError::Unsupported(
                "the quasi-Gaussian mechanism has no zCDP bound and cannot be composed here".into(),
            )),
        }
    }

    /// Concatenates two ledgers.
    pub fn merge(&self, other: &Self) -> Self {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self { entries, rho_total: self.rho_total + other.rho_total }
    }

    /// Total epsilon at failure probability `delta_tot`.
    pub fn to_dp(&self, delta_tot: f64) -> Result<f64> {
        ledger_to_dp(self, delta_tot)
    }
}

/// Free-function form of [`CompositionLedger::add`].
pub fn ledger_add(ledger: &CompositionLedger, delta_t: f64, sigma_t: f64) -> Result<CompositionLedger> {
    ledger.add(delta_t, sigma_t)
}

/// `rho + 2 sqrt(rho log(1 / delta_tot))`.
pub fn ledger_to_dp(ledger: &CompositionLedger, delta_tot: f64) -> Result<f64> {
    if !(delta_tot > 0.0 && delta_tot < 1.0) {
        return Err(DpError::Domain(format!("delta_tot must lie in (0,1), got {delta_tot}")));
    }
    let rho = ledger.rho_total;
    Ok(rho + 2.0 * (rho * (1.0 / delta_tot).ln()).sqrt())
}
