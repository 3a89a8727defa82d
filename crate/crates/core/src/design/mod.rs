//! Nested case-control design over regions aligned on days since first case.
//!
//! Each region that implemented the intervention defines an event; every
//! region whose own intervention time is not earlier is at risk for that
//! event. Regions intervening within the outcome window are grouped with the
//! event as treated, regions intervening after it serve as controls, and the
//! outcome is the change of the reproduction number across the window.

mod align;
mod screening;
mod standardize;
mod table;

pub use align::{align_regions, AlignmentExclusion, AlignmentReport, RawRegionData};
pub use screening::{screen_covariates, spearman, ScreeningEntry, ScreeningReport};
pub use standardize::{standardize, Population, ScaleRule, ScalingPolicy};
pub use table::{
    build_design, Assignment, DesignDiagnostics, DesignEvent, DesignOptions, DesignRow,
    DesignTable, INTERCEPT_NAME,
};

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::epi_model::RtSeries;

/// One region's aligned record: everything is indexed by days since the
/// region's first reported case.
#[derive(Clone, Debug, Default)]
pub struct RegionRecord {
    pub region_id: String,
    /// Baseline covariates; `None` marks a missing value. The intercept is
    /// implicit and added when design tables are built.
    pub baseline: BTreeMap<String, Option<f64>>,
    /// Candidate time-varying series (daily values, day-indexed from 0).
    pub series: BTreeMap<String, Vec<Option<f64>>>,
    /// Reproduction-number series used for outcomes.
    pub rt: RtSeries,
    /// Intervention day offsets; `None` means the region never implemented
    /// it (time infinity, eligible as control for every event).
    pub interventions: BTreeMap<String, Option<i64>>,
    pub first_case_date: Option<NaiveDate>,
}

impl RegionRecord {
    /// Day value of a time-varying covariate; the name `rt` resolves to the
    /// reproduction-number series.
    pub fn series_value(&self, name: &str, day: i64) -> Option<f64> {
        if name == "rt" {
            return self.rt.at(day);
        }
        if day < 0 {
            return None;
        }
        self.series.get(name)?.get(day as usize).copied().flatten()
    }

    pub fn intervention_day(&self, name: &str) -> Option<i64> {
        self.interventions.get(name).copied().flatten()
    }
}

/// Mean of a series over the `window` days strictly before `day`, requiring
/// at least `min_days` observed values. This is the pre-event summary used
/// for time-varying covariate rows.
pub fn pre_window_mean(
    record: &RegionRecord,
    name: &str,
    day: i64,
    window: usize,
    min_days: usize,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for back in 1..=window as i64 {
        if let Some(v) = record.series_value(name, day - back) {
            sum += v;
            count += 1;
        }
    }
    if count >= min_days.max(1) {
        Some(sum / count as f64)
    } else {
        None
    }
}
