//! Latent class models for multivariate categorical data.
//!
//! This crate fits polytomous latent class models and latent class regression
//! models (class membership driven by covariates through a multinomial logit)
//! by multi-restart EM, selects among competing models by information
//! criteria, and computes response-consistency diagnostics: class-conditional
//! response tables, extreme false positive/negative probabilities, and
//! per-indicator consistent-classification probabilities.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all IO, file formats
//! and the command-line interface live in the companion `lca-cli` crate.
//!
//! # Overview
//!
//! * [`data`] — the [`Dataset`] container, validation and listwise filtering.
//! * [`formula`] — interaction-term formulas (`A + Z + A:Z`) and their
//!   expansion into a per-respondent [`DesignMatrix`].
//! * [`estimator`] — EM fitting, canonical class ordering, coefficient
//!   standard errors.
//! * [`selection`] — AIC/BIC, residual degrees of freedom, goodness of fit,
//!   class-count scans and model comparison.
//! * [`diagnostics`] — class-conditional tables, extreme-bias and
//!   consistency probabilities, indicator flagging.
//! * [`simulate`] — synthetic data generation from known parameters and
//!   brute-force likelihood oracles for small instances.

#![cfg_attr(not(feature = "std"), no_std)]
// Estimation kernels index parallel `[class][indicator][category]`
// structures; subscripted loops mirror that shape better than zipped
// iterators would.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod diagnostics;
mod error;
pub mod estimator;
pub mod formula;
pub(crate) mod math;
pub mod selection;
pub mod simulate;

pub use data::{Dataset, Indicator, ValidationReport};
pub use diagnostics::{
    class_conditional_table, consistency_report, ClassConditionalTable, ConsistencyReport,
    IndicatorFlag, Thresholds,
};
pub use error::Error;
pub use estimator::{
    canonicalize, count_parameters, fit, normal_two_sided_p, standard_errors, CoefficientTable,
    FitControls, FitWarning, FittedModel, MissingPolicy, ModelSpec, Params,
};
pub use formula::{build_design_matrix, DesignMatrix, Formula, Term};
pub use selection::{
    compare_models, information_criteria, pearson_chi_square, scan_classes, Comparison,
    FitSummary, GoodnessOfFit,
};
pub use simulate::{sample_dataset, GeneratorSpec};

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
