//! Population standardization of covariates and count series.

use std::collections::BTreeMap;

use super::RegionRecord;
use crate::error::{Error, Result};

/// Population denominators for one region.
#[derive(Clone, Copy, Debug)]
pub struct Population {
    pub total: f64,
    /// Residents aged 17-65, the denominator for unemployment.
    pub working_age: f64,
}

/// How a baseline covariate is rescaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleRule {
    /// Leave as-is (e.g. per-capita income, values already in rate form).
    Unscaled,
    /// Count divided by total population, per 100 (share form).
    SharePer100,
    /// Count divided by working-age population, per 100 (rate form).
    WorkingAgeRatePer100,
    /// Count divided by total population, per 100,000.
    CountPer100k,
}

/// Scaling assignments; covariates not listed are left unscaled.
#[derive(Clone, Debug, Default)]
pub struct ScalingPolicy {
    pub baseline: BTreeMap<String, ScaleRule>,
    /// Time-varying series rescaled to per-100,000 of total population.
    pub series_per_100k: Vec<String>,
}

/// Apply the scaling policy, returning new records. Every region must have a
/// positive population entry for each rule actually exercised.
pub fn standardize(
    records: &[RegionRecord],
    populations: &BTreeMap<String, Population>,
    policy: &ScalingPolicy,
) -> Result<Vec<RegionRecord>> {
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let mut rec = record.clone();
        let pop = populations
            .get(&rec.region_id)
            .ok_or_else(|| Error::MissingPopulation(rec.region_id.clone()))?;
        if !(pop.total > 0.0) {
            return Err(Error::MissingPopulation(format!(
                "{} (total population must be positive)",
                rec.region_id
            )));
        }

        for (name, value) in rec.baseline.iter_mut() {
            let rule = policy.baseline.get(name).copied().unwrap_or(ScaleRule::Unscaled);
            if let Some(v) = value {
                *v = match rule {
                    ScaleRule::Unscaled => *v,
                    ScaleRule::SharePer100 => *v / pop.total * 100.0,
                    ScaleRule::CountPer100k => *v / pop.total * 100_000.0,
                    ScaleRule::WorkingAgeRatePer100 => {
                        if !(pop.working_age > 0.0) {
                            return Err(Error::MissingPopulation(format!(
                                "{} (working-age population must be positive for `{name}`)",
                                rec.region_id
                            )));
                        }
                        *v / pop.working_age * 100.0
                    }
                };
            }
        }

        for name in &policy.series_per_100k {
            if let Some(series) = rec.series.get_mut(name) {
                for v in series.iter_mut().flatten() {
                    *v = *v / pop.total * 100_000.0;
                }
            }
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> RegionRecord {
        let mut baseline = BTreeMap::new();
        baseline.insert("income_per_capita".to_string(), Some(30_000.0));
        baseline.insert("unemployed".to_string(), Some(100_000.0));
        baseline.insert("below_poverty".to_string(), Some(500_000.0));
        let mut series = BTreeMap::new();
        series.insert("new_cases".to_string(), vec![Some(500.0), None, Some(50.0)]);
        RegionRecord { region_id: id.into(), baseline, series, ..Default::default() }
    }

    fn policy() -> ScalingPolicy {
        let mut baseline = BTreeMap::new();
        baseline.insert("unemployed".to_string(), ScaleRule::WorkingAgeRatePer100);
        baseline.insert("below_poverty".to_string(), ScaleRule::SharePer100);
        baseline.insert("income_per_capita".to_string(), ScaleRule::Unscaled);
        ScalingPolicy { baseline, series_per_100k: vec!["new_cases".to_string()] }
    }

    #[test]
    fn applies_each_rule() {
        let mut pops = BTreeMap::new();
        pops.insert("a".to_string(), Population { total: 5_000_000.0, working_age: 2_000_000.0 });
        let out = standardize(&[record("a")], &pops, &policy()).unwrap();
        let rec = &out[0];
        // 500 cases / 5M * 100k = 10 per 100k.
        assert_eq!(rec.series_value("new_cases", 0), Some(10.0));
        assert_eq!(rec.series_value("new_cases", 1), None);
        // Income left unscaled.
        assert_eq!(rec.baseline["income_per_capita"], Some(30_000.0));
        // Unemployment per 100 of working-age population.
        assert_eq!(rec.baseline["unemployed"], Some(5.0));
        // Poverty count as share per 100 of total population.
        assert_eq!(rec.baseline["below_poverty"], Some(10.0));
    }

    #[test]
    fn missing_population_names_the_region() {
        let pops = BTreeMap::new();
        let err = standardize(&[record("nowhere")], &pops, &policy());
        match err {
            Err(Error::MissingPopulation(r)) => assert!(r.contains("nowhere")),
            other => panic!("expected missing population, got {other:?}"),
        }
    }
}
