//! Infectious-duration survival function `S(m)`.

use crate::error::{Error, Result};

/// Survival mass below this is truncated to zero.
const TRUNCATION_EPS: f64 = 1e-6;

/// Probability of remaining infectious `m` days after infection.
///
/// `S(0) = 1`, `S` is nonincreasing, and `S(m) = 0` beyond the truncation
/// day `M`. The default is an exponential duration with mean 10 days.
#[derive(Clone, Debug)]
pub struct SurvivalSpec {
    kind: SurvivalKind,
    table: Vec<f64>,
}

#[derive(Clone, Debug)]
enum SurvivalKind {
    Exponential { rate: f64 },
    Tabulated,
}

impl SurvivalSpec {
    /// Exponential duration with the given hazard rate per day; truncated at
    /// the smallest `m` with `S(m) < 1e-6`.
    pub fn exponential(rate: f64) -> Result<Self> {
        if !rate.is_finite() || rate <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "survival rate must be positive and finite, got {rate}"
            )));
        }
        let m_trunc = (-(TRUNCATION_EPS.ln()) / rate).ceil() as usize;
        let table = (0..=m_trunc).map(|m| (-rate * m as f64).exp()).collect();
        Ok(Self { kind: SurvivalKind::Exponential { rate }, table })
    }

    /// Explicit table `S(0..=M)`; must start at 1 and be nonincreasing
    /// within `[0, 1]`.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("survival table must be nonempty".into()));
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "survival table must start at S(0) = 1, got {}",
                values[0]
            )));
        }
        for pair in values.windows(2) {
            if pair[1] > pair[0] + 1e-12 {
                return Err(Error::InvalidInput("survival table must be nonincreasing".into()));
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + 1e-12) {
            return Err(Error::InvalidInput("survival values must lie in [0, 1]".into()));
        }
        Ok(Self { kind: SurvivalKind::Tabulated, table: values })
    }

    /// `S(m)`; zero beyond the truncation day.
    pub fn s(&self, m: usize) -> f64 {
        self.table.get(m).copied().unwrap_or(0.0)
    }

    /// Truncation day `M`: the last day carried in the table.
    pub fn truncation(&self) -> usize {
        self.table.len() - 1
    }

    /// Hazard rate for exponential specs.
    pub fn rate(&self) -> Option<f64> {
        match self.kind {
            SurvivalKind::Exponential { rate } => Some(rate),
            SurvivalKind::Tabulated => None,
        }
    }
}

impl Default for SurvivalSpec {
    /// Mean infectious duration of 10 days (rate 0.1/day).
    fn default() -> Self {
        Self::exponential(0.1).expect("default survival spec is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_table_shape() {
        let s = SurvivalSpec::exponential(0.1).unwrap();
        assert!((s.s(0) - 1.0).abs() < 1e-15);
        assert!(s.s(10) > s.s(11));
        let m = s.truncation();
        assert!(s.s(m) < TRUNCATION_EPS);
        assert!(s.s(m - 1) >= TRUNCATION_EPS);
        assert_eq!(s.s(m + 1), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SurvivalSpec::exponential(0.0).is_err());
        assert!(SurvivalSpec::exponential(f64::NAN).is_err());
        assert!(SurvivalSpec::tabulated(vec![]).is_err());
        assert!(SurvivalSpec::tabulated(vec![0.9, 0.5]).is_err());
        assert!(SurvivalSpec::tabulated(vec![1.0, 0.5, 0.7]).is_err());
    }

    #[test]
    fn tabulated_step() {
        let s = SurvivalSpec::tabulated(vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.s(2), 1.0);
        assert_eq!(s.s(3), 0.0);
        assert_eq!(s.s(99), 0.0);
        assert_eq!(s.truncation(), 3);
    }
}
