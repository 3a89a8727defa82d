//! Epidemic transmission modeling and quasi-experimental evaluation of
//! public-health interventions.
//!
//! The crate has two halves that meet in the middle:
//!
//! 1. **Transmission dynamics** ([`epi_model`]): a survival-convolution model
//!    of daily new infections driven by a piecewise-linear infection rate,
//!    fitted to reported case counts by square-root least squares, from which
//!    the effective reproduction number `R_t` is derived through the renewal
//!    equation.
//! 2. **Causal effect estimation** ([`design`], [`propensity`], [`causal`]):
//!    a nested case-control design over regions aligned on days since their
//!    first reported case, a logistic propensity model for intervention
//!    timing fit by an estimating equation over risk sets, and an
//!    inverse-probability-weighted difference-in-difference estimator of the
//!    average change in `R_t` attributable to an intervention, with plug-in
//!    asymptotic variances and a moderated-effect (HTE) regression.
//!
//! [`synthetic`] generates ground-truth scenarios for estimator validation
//! and coverage studies; [`ingest`] and [`pipeline`] provide the file-based
//! front end used by the `epidid` command-line tool.

pub mod causal;
pub mod design;
pub mod epi_model;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod propensity;
pub mod synthetic;
pub(crate) mod util;

pub use error::{Error, Result};
