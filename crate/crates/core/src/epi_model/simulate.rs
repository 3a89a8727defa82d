//! Forward recursion of the survival-convolution model.

use super::{RateFunction, SurvivalSpec};
use crate::error::{Error, Result};

fn check_history(history: &[f64]) -> Result<()> {
    if history.is_empty() {
        return Err(Error::InvalidInput("history must be nonempty".into()));
    }
    if history.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("history values must be finite and nonnegative".into()));
    }
    Ok(())
}

/// One convolution update: given `N(0..=t)` in chronological order, returns
/// `N(t+1) = a(t) * sum_{m >= 0} N(t-m) S(m+1)`, truncated at the survival
/// truncation day.
pub fn convolve_step(history: &[f64], survival: &SurvivalSpec, rate_at_t: f64) -> Result<f64> {
    check_history(history)?;
    if !rate_at_t.is_finite() || rate_at_t < 0.0 {
        return Err(Error::InvalidInput(format!(
            "infection rate must be finite and nonnegative, got {rate_at_t}"
        )));
    }
    Ok(rate_at_t * convolve_mass(history, survival, history.len() - 1))
}

/// `sum_{m >= 0} N(t-m) S(m+1)`: the still-infectious mass after day `t`.
fn convolve_mass(history: &[f64], survival: &SurvivalSpec, t: usize) -> f64 {
    let m_max = survival.truncation().saturating_sub(1).min(t);
    let mut acc = 0.0;
    for m in 0..=m_max {
        acc += history[t - m] * survival.s(m + 1);
    }
    acc
}

/// Individuals leaving the transmission chain right after day `t`:
/// `W(t) = sum_m N(t-m) [S(m) - S(m+1)]`.
pub fn removed_count(history: &[f64], survival: &SurvivalSpec, t: usize) -> Result<f64> {
    check_history(history)?;
    if t >= history.len() {
        return Err(Error::InvalidInput(format!(
            "day {t} is beyond the provided history of length {}",
            history.len()
        )));
    }
    let m_max = survival.truncation().min(t);
    let mut acc = 0.0;
    for m in 0..=m_max {
        acc += history[t - m] * (survival.s(m) - survival.s(m + 1));
    }
    Ok(acc)
}

/// Total infectious individuals at day `t`: `M(t) = sum_m N(t-m) S(m)`.
pub fn infectious_mass(history: &[f64], survival: &SurvivalSpec, t: usize) -> Result<f64> {
    check_history(history)?;
    if t >= history.len() {
        return Err(Error::InvalidInput(format!(
            "day {t} is beyond the provided history of length {}",
            history.len()
        )));
    }
    let m_max = survival.truncation().min(t);
    let mut acc = 0.0;
    for m in 0..=m_max {
        acc += history[t - m] * survival.s(m);
    }
    Ok(acc)
}

/// Full trajectory from the seed day: index 0 holds `N` at day `-t0_offset`
/// (the seed), and the vector extends through observed day `horizon - 1`.
pub(crate) fn simulate_trajectory(
    seed_count: f64,
    t0_offset: i64,
    rate: &RateFunction,
    survival: &SurvivalSpec,
    horizon: usize,
) -> Vec<f64> {
    let total_len = t0_offset as usize + horizon;
    let mut n = Vec::with_capacity(total_len);
    n.push(seed_count);
    for s in 0..total_len - 1 {
        let day = s as i64 - t0_offset;
        let next = rate.value_at(day) * convolve_mass(&n, survival, s);
        n.push(next);
    }
    n
}

/// Deterministic trajectory of daily new infections over observed days
/// `0..horizon`, seeded with `seed_count` cases at day `-t0_offset`.
pub fn simulate_cases(
    seed_count: f64,
    t0_offset: i64,
    rate: &RateFunction,
    survival: &SurvivalSpec,
    horizon: usize,
) -> Result<Vec<f64>> {
    if horizon < 1 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if !seed_count.is_finite() || seed_count <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "seed count must be positive and finite, got {seed_count}"
        )));
    }
    if t0_offset < 0 {
        return Err(Error::InvalidInput(format!(
            "outbreak start offset must be nonnegative days before day 0, got {t0_offset}"
        )));
    }
    let full = simulate_trajectory(seed_count, t0_offset, rate, survival, horizon);
    Ok(full[t0_offset as usize..].to_vec())
}
