//! Survival-convolution transmission model and effective reproduction number.
//!
//! New infections evolve by a convolution of past incidence with the
//! infectious-survival function `S(m)`, scaled by a time-varying infection
//! rate `a(t)`:
//!
//! ```text
//! N(t+1) = a(t) * sum_{m >= 0} N(t-m) * S(m+1)
//! ```
//!
//! The effective reproduction number is the renewal-equation ratio of new
//! infections to the serial-interval-weighted sum of past infections.

mod fit;
mod rate;
mod serial;
mod simulate;
mod survival;

pub use fit::{fit_epidemic, EpidemicFit, FitOptions};
pub use rate::{knot_schedule, RateFunction};
pub use serial::SerialIntervalPmf;
pub use simulate::{convolve_step, infectious_mass, removed_count, simulate_cases};
pub use survival::SurvivalSpec;

pub(crate) use simulate::simulate_trajectory;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Denominators of the renewal ratio at or below this are treated as
/// undefined rather than divided through.
pub const RT_DENOMINATOR_EPS: f64 = 1e-12;

/// Daily new-case counts for one region, indexed by days since the first
/// reported case (day 0 = first reported case).
#[derive(Clone, Debug)]
pub struct IncidenceSeries {
    pub region_id: String,
    /// Calendar date of day 0, when known.
    pub origin_date: Option<NaiveDate>,
    pub counts: Vec<f64>,
    /// Day indices that were absent from the source and imputed as zero.
    pub imputed_days: Vec<usize>,
}

impl IncidenceSeries {
    pub fn new(region_id: impl Into<String>, counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidInput("incidence series must be nonempty".into()));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput(
                "incidence counts must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { region_id: region_id.into(), origin_date: None, counts, imputed_days: Vec::new() })
    }

    pub fn with_origin(mut self, date: NaiveDate) -> Self {
        self.origin_date = Some(date);
        self
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Per-day effective reproduction number with undefined entries flagged
/// (`None`) rather than interpolated.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RtSeries {
    values: Vec<Option<f64>>,
}

impl RtSeries {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        Self { values }
    }

    /// Value at a day offset; out-of-range or negative days are undefined.
    pub fn at(&self, day: i64) -> Option<f64> {
        if day < 0 {
            return None;
        }
        self.values.get(day as usize).copied().flatten()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Change of the reproduction number over a window: `R_{t+delta} - R_t`.
///
/// Returns `None` when either endpoint is undefined; callers exclude and
/// count such outcomes rather than fail.
pub fn outcome_change(rt: &RtSeries, t: i64, delta: i64) -> Option<f64> {
    debug_assert!(delta >= 1, "outcome window must be positive");
    Some(rt.at(t + delta)? - rt.at(t)?)
}

/// Renewal-equation reproduction number: `R_t = N(t) / sum_k w_k N(t-k)`.
///
/// `N(t-k)` is taken as zero before the start of the series; entries whose
/// denominator does not exceed [`RT_DENOMINATOR_EPS`] are flagged undefined.
pub fn reproduction_number(n: &[f64], w: &SerialIntervalPmf) -> RtSeries {
    let values = (0..n.len())
        .map(|t| {
            let mut den = 0.0;
            for k in 1..=w.max_lag() {
                if k > t {
                    break;
                }
                den += w.weight(k) * n[t - k];
            }
            if den > RT_DENOMINATOR_EPS {
                Some(n[t] / den)
            } else {
                None
            }
        })
        .collect();
    RtSeries::new(values)
}
