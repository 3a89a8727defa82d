//! Effect estimates across window sizes.

use rayon::prelude::*;

use super::ate::{estimate_ate_full, AteResult};
use crate::design::{build_design, screen_covariates, DesignOptions, RegionRecord};
use crate::error::Result;
use crate::propensity::fit_propensity;

/// How the propensity covariates are chosen per window size.
#[derive(Clone, Debug)]
pub enum CovariateSelection {
    /// Use exactly these covariates (intercept implicit).
    Fixed(Vec<String>),
    /// Screen candidates per window: top `k` by rank correlation after
    /// dropping covariates above the missingness threshold.
    Screened { k: usize, missing_threshold: f64 },
}

/// One cell of the sweep grid.
#[derive(Clone, Debug)]
pub enum SweepCell {
    Estimated(Box<AteResult>),
    /// Recorded reason; rendered as a `-` marker in output tables.
    Infeasible(String),
}

impl SweepCell {
    pub fn as_estimate(&self) -> Option<&AteResult> {
        match self {
            SweepCell::Estimated(res) => Some(res),
            SweepCell::Infeasible(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub intervention: String,
    pub cells: Vec<(i64, SweepCell)>,
}

/// Rebuild the design, refit the propensity model, and estimate the effect
/// for every window size. Per-window failures become infeasible cells; the
/// sweep itself never aborts.
pub fn delta_sweep(
    records: &[RegionRecord],
    intervention: &str,
    deltas: &[i64],
    opts: &DesignOptions,
    selection: &CovariateSelection,
) -> Result<SweepResult> {
    let cells: Vec<(i64, SweepCell)> = deltas
        .par_iter()
        .map(|&delta| {
            let cell = run_one(records, intervention, delta, opts, selection)
                .map(|res| SweepCell::Estimated(Box::new(res)))
                .unwrap_or_else(|e| SweepCell::Infeasible(e.to_string()));
            (delta, cell)
        })
        .collect();
    Ok(SweepResult { intervention: intervention.to_string(), cells })
}

fn run_one(
    records: &[RegionRecord],
    intervention: &str,
    delta: i64,
    opts: &DesignOptions,
    selection: &CovariateSelection,
) -> Result<AteResult> {
    let table = build_design(records, intervention, delta, opts)?;
    let table = match selection {
        CovariateSelection::Fixed(names) => table.select_covariates(names)?,
        CovariateSelection::Screened { k, missing_threshold } => {
            let report = screen_covariates(&table, *k, *missing_threshold)?;
            table.select_covariates(&report.selected)?
        }
    };
    let fit = fit_propensity(&table)?;
    estimate_ate_full(&table, &fit)
}
