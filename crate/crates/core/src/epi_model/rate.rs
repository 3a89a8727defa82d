//! Piecewise-linear infection rate `a(t)`.

use crate::error::{Error, Result};

/// Nonnegative piecewise-linear function of the day index: linear between
/// knots, constant beyond the first and last knot.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFunction {
    knot_days: Vec<i64>,
    knot_values: Vec<f64>,
}

impl RateFunction {
    pub fn new(knot_days: Vec<i64>, knot_values: Vec<f64>) -> Result<Self> {
        if knot_days.is_empty() || knot_days.len() != knot_values.len() {
            return Err(Error::InvalidInput(
                "rate function needs matching, nonempty knot days and values".into(),
            ));
        }
        if knot_days.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("knot days must be strictly increasing".into()));
        }
        if knot_values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("knot values must be finite and nonnegative".into()));
        }
        Ok(Self { knot_days, knot_values })
    }

    /// Constant rate at all days.
    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0], vec![value])
    }

    /// Construction for internal callers whose inputs are valid by
    /// construction (e.g. squared parameters on strictly increasing days).
    pub(crate) fn from_parts_unchecked(knot_days: Vec<i64>, knot_values: Vec<f64>) -> Self {
        debug_assert!(knot_days.windows(2).all(|p| p[1] > p[0]));
        debug_assert!(knot_values.iter().all(|v| *v >= 0.0));
        Self { knot_days, knot_values }
    }

    pub fn knot_days(&self) -> &[i64] {
        &self.knot_days
    }

    pub fn knot_values(&self) -> &[f64] {
        &self.knot_values
    }

    /// `a(day)` by linear interpolation, constant extrapolation outside the
    /// knot range.
    pub fn value_at(&self, day: i64) -> f64 {
        let days = &self.knot_days;
        let vals = &self.knot_values;
        if day <= days[0] {
            return vals[0];
        }
        if day >= *days.last().unwrap() {
            return *vals.last().unwrap();
        }
        // partition_point: first knot strictly greater than `day`.
        let hi = days.partition_point(|&d| d <= day);
        let lo = hi - 1;
        let span = (days[hi] - days[lo]) as f64;
        let frac = (day - days[lo]) as f64 / span;
        vals[lo] + frac * (vals[hi] - vals[lo])
    }

    /// Rate values on `[from, to)`, one per day.
    pub fn values_on(&self, from: i64, to: i64) -> Vec<f64> {
        (from..to).map(|d| self.value_at(d)).collect()
    }
}

/// Knot days for a fit: the segment start, any intervention days inside the
/// observed window, the last observed day, and enough interior points that
/// no gap exceeds `max_gap` days.
pub fn knot_schedule(start_day: i64, end_day: i64, interventions: &[i64], max_gap: i64) -> Vec<i64> {
    assert!(max_gap >= 1, "knot gap must be positive");
    let mut anchors: Vec<i64> = vec![start_day, end_day];
    anchors.extend(interventions.iter().copied().filter(|d| *d > start_day && *d < end_day));
    anchors.sort_unstable();
    anchors.dedup();

    let mut knots = Vec::new();
    for pair in anchors.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        knots.push(lo);
        let gap = hi - lo;
        if gap > max_gap {
            let pieces = (gap + max_gap - 1) / max_gap;
            for p in 1..pieces {
                knots.push(lo + (gap * p) / pieces);
            }
        }
    }
    knots.push(*anchors.last().unwrap());
    knots.dedup();
    knots
}
