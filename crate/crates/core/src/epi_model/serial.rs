//! Discretized serial-interval distribution `w_k`.

use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;
const TAIL_EPS: f64 = 1e-12;
const MAX_LAG_CAP: usize = 500;

/// Probability mass function of the serial interval over integer lags
/// `k = 1..=K`, with `w_0` forced to zero so a case never counts as its own
/// infector in the renewal denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct SerialIntervalPmf {
    /// `w[k]` for `k = 0..=K`; `w[0] == 0`.
    w: Vec<f64>,
}

impl SerialIntervalPmf {
    /// Build from weights for lags `1..=K`. Weights must be nonnegative and
    /// sum to one within `1e-9`.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("serial interval needs at least one lag".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "serial-interval weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "serial-interval weights must sum to 1 within {SUM_TOL}, got {total}"
            )));
        }
        let mut w = Vec::with_capacity(weights.len() + 1);
        w.push(0.0);
        w.extend_from_slice(weights);
        Ok(Self { w })
    }

    /// Discretize a Gamma distribution with the given mean and standard
    /// deviation (days) by integrating the density over `[k-1/2, k+1/2)`
    /// for `k >= 1` and renormalizing.
    pub fn discretized_gamma(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite()) || mean <= 0.0 || sd <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "gamma serial interval needs positive mean and sd, got mean={mean} sd={sd}"
            )));
        }
        let shape = (mean / sd).powi(2);
        let rate = mean / (sd * sd);
        let gamma = Gamma::new(shape, rate)
            .map_err(|e| Error::InvalidInput(format!("invalid gamma parameters: {e}")))?;

        let mut raw = Vec::new();
        let mut k = 1usize;
        loop {
            let lo = gamma.cdf(k as f64 - 0.5);
            let hi = gamma.cdf(k as f64 + 0.5);
            raw.push(hi - lo);
            if 1.0 - hi < TAIL_EPS || k >= MAX_LAG_CAP {
                break;
            }
            k += 1;
        }
        let total: f64 = raw.iter().sum();
        let mut w = Vec::with_capacity(raw.len() + 1);
        w.push(0.0);
        w.extend(raw.iter().map(|v| v / total));
        Ok(Self { w })
    }

    /// `w_k`; zero outside `1..=K`.
    pub fn weight(&self, k: usize) -> f64 {
        self.w.get(k).copied().unwrap_or(0.0)
    }

    /// Largest lag `K` with carried mass.
    pub fn max_lag(&self) -> usize {
        self.w.len() - 1
    }

    /// All weights including the forced `w_0 = 0`.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn mean_lag(&self) -> f64 {
        self.w.iter().enumerate().map(|(k, w)| k as f64 * w).sum()
    }
}

impl Default for SerialIntervalPmf {
    /// Discretized Gamma with mean 4.7 days and sd 2.9 days.
    fn default() -> Self {
        Self::discretized_gamma(4.7, 2.9).expect("default serial interval is valid")
    }
}
