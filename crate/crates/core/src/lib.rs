//! Calibration, sampling, verification and composition of additive noise
//! mechanisms for (epsilon, delta)-differential privacy.
//!
//! Three families are provided: the analytic Gaussian baseline, the
//! multi-Gaussian mixture (a Gaussian convolved with a discrete Laplace
//! distribution on the lattice `D Z`, truncated to `K` modes on each side),
//! and the quasi-Gaussian mixture (a zero-mean Gaussian with weight `e^eps`
//! plus the density proportional to `exp(-(|x| - D)^2 / (2 sigma^2))`).
//!
//! ```
//! use dpmix::{calibrate_analytic_gaussian, PrivacyParams};
//!
//! let p = PrivacyParams::new(1.0, 0.1, 1.0).unwrap();
//! let g = calibrate_analytic_gaussian(&p).unwrap();
//! assert!((g.sigma - 1.0859).abs() < 1e-4);
//! ```

// `!(x > 0.0)` is the NaN-rejecting form used for argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod analytic_gaussian;
pub mod error;
pub mod multi_gaussian;
pub mod numerics;
pub mod par;
pub mod params;
pub mod quasi_gaussian;
pub mod result;
pub mod sampling;
mod search;
pub mod sweep;
pub mod verifier;

pub use accountant::{ledger_add, ledger_to_dp, CompositionLedger, LedgerEntry};
pub use analytic_gaussian::{calibrate_analytic_gaussian, GaussianMechanism};
pub use error::{DpError, Result};
pub use multi_gaussian::{
    mg_calibrate, mg_calibrate_best_k, mg_shortfall, BestK, CalibrationHyper, MultiGaussianDist,
    ShortfallOptions, ShortfallReport,
};
pub use par::Execution;
pub use params::{improvement_pct, LossKind, Mechanism, PrivacyParams};
pub use quasi_gaussian::{qg_calibrate, qg_max_min, MaxMinCase, MaxMinResult, QuasiGaussianDist};
pub use result::{calibrate, CalibrationResult};
pub use search::DEFAULT_GRID_CAP;
pub use sweep::{run_sweep, OutputFormat, SweepConfig, SweepRow};
pub use verifier::{verify_calibrated, verify_dp, VerificationReport, VerifierConfig};
