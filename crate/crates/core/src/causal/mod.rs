//! Intervention-effect estimators over a fitted design.
//!
//! * [`estimate_ate`] / [`ate_variance`]: the standardized-weight IPW
//!   difference-in-difference estimator of the average effect on the
//!   reproduction number, with its plug-in asymptotic variance built from
//!   per-region influence values.
//! * [`estimate_hte`]: a linear moderated-effect model fit by a weighted
//!   estimating equation, with a sandwich covariance and per-coordinate
//!   Wald tests.
//! * [`delta_sweep`]: the whole pipeline repeated across window sizes, with
//!   infeasible cells marked rather than aborting.

mod ate;
mod hte;
mod sweep;

pub use ate::{ate_variance, estimate_ate, estimate_ate_full, AteEstimate, AteResult, AteVariance};
pub use hte::{estimate_hte, HteResult, Moderators};
pub use sweep::{delta_sweep, CovariateSelection, SweepCell, SweepResult};
