//! Calibration front end shared by the sweep runner and the CLI.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic_gaussian::calibrate_analytic_gaussian;
use crate::error::Result;
use crate::multi_gaussian::{
    mg_calibrate_best_k_with, mg_calibrate_with, CalibrationHyper, ShortfallOptions,
};
use crate::params::{improvement_pct, LossKind, Mechanism, PrivacyParams};
use crate::quasi_gaussian::qg_calibrate_detailed;

/// One calibrated mechanism with its losses and bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mechanism: Mechanism,
    pub params: PrivacyParams,
    pub sigma: f64,
    /// Modality of a multi-Gaussian mixture.
    pub chosen_k: Option<u32>,
    /// Discretization parameter of a multi-Gaussian calibration.
    pub eta: Option<f64>,
    pub l1: f64,
    pub l2: f64,
    /// `100 (a - m) / max(a, m)` against the analytic Gaussian for `loss`.
    pub improvement_vs_baseline_pct: f64,
    /// Loss the improvement (and the choice of K) refers to.
    pub loss: LossKind,
    /// Worst slack reported by the verifier, when it was run.
    pub verify_slack: Option<f64>,
    pub wall_ms: f64,
    /// Tail-condition bound of a quasi-Gaussian calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    /// Ratio-condition bound of a quasi-Gaussian calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

impl CalibrationResult {
    pub fn loss_value(&self) -> f64 {
        match self.loss {
            LossKind::L1 => self.l1,
            LossKind::L2 => self.l2,
        }
    }
}

/// Calibrates `mechanism` for `params`.
///
/// For the multi-Gaussian family a single-entry `k_grid` fixes the
/// modality; otherwise the loss-minimizing modality is selected.
pub fn calibrate(
    mechanism: Mechanism,
    params: &PrivacyParams,
    hyper: &CalibrationHyper,
    opts: &ShortfallOptions,
) -> Result<CalibrationResult> {
    let start = Instant::now();
    let baseline = calibrate_analytic_gaussian(params)?;
    let base_loss = match hyper.loss {
        LossKind::L1 => baseline.l1_loss(),
        LossKind::L2 => baseline.l2_loss(),
    };
    let mut out = CalibrationResult {
        mechanism,
        params: *params,
        sigma: 0.0,
        chosen_k: None,
        eta: None,
        l1: 0.0,
        l2: 0.0,
        improvement_vs_baseline_pct: 0.0,
        loss: hyper.loss,
        verify_slack: None,
        wall_ms: 0.0,
        sigma1: None,
        sigma2: None,
    };
    match mechanism {
        Mechanism::AnalyticGaussian => {
            out.sigma = baseline.sigma;
            out.l1 = baseline.l1_loss();
            out.l2 = baseline.l2_loss();
        }
        Mechanism::MultiGaussian => {
            hyper.validate()?;
            let dist = if hyper.k_grid.len() == 1 {
                mg_calibrate_with(params, hyper.k_grid[0], hyper.eta, opts)?
            } else {
                mg_calibrate_best_k_with(params, hyper, opts)?.dist
            };
            out.sigma = dist.sigma;
            out.chosen_k = Some(dist.modality);
            out.eta = Some(hyper.eta);
            out.l1 = dist.l1_loss();
            out.l2 = dist.l2_loss();
        }
        Mechanism::QuasiGaussian => {
            let q = qg_calibrate_detailed(params)?;
            out.sigma = q.dist.sigma;
            out.l1 = q.dist.l1_loss();
            out.l2 = q.dist.l2_loss();
            out.sigma1 = Some(q.sigma1);
            out.sigma2 = Some(q.sigma2);
        }
    }
    out.improvement_vs_baseline_pct = improvement_pct(base_loss, out.loss_value());
    out.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}
