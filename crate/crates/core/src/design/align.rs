//! Calendar-time to epidemic-time alignment.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::RegionRecord;
use crate::epi_model::{IncidenceSeries, RtSeries};
use crate::error::{Error, Result};

/// Pre-alignment bundle for one region, keyed by calendar dates.
#[derive(Clone, Debug)]
pub struct RawRegionData {
    /// Day-indexed incidence with a known origin date (day 0 = first
    /// reported case).
    pub cases: IncidenceSeries,
    /// Reproduction-number series on the same day index.
    pub rt: RtSeries,
    pub baseline: BTreeMap<String, Option<f64>>,
    /// Calendar-dated covariate series (deaths, positivity, bed occupancy).
    pub dated_series: BTreeMap<String, BTreeMap<NaiveDate, f64>>,
    pub intervention_dates: BTreeMap<String, NaiveDate>,
}

/// A region dropped at alignment because an intervention preceded its first
/// reported case.
#[derive(Clone, Debug)]
pub struct AlignmentExclusion {
    pub region_id: String,
    pub intervention: String,
    /// Negative day offset of the offending intervention.
    pub offset: i64,
}

#[derive(Clone, Debug, Default)]
pub struct AlignmentReport {
    pub excluded: Vec<AlignmentExclusion>,
    pub kept: usize,
}

/// Re-index every region on days since its first reported case.
///
/// Intervention calendar dates become day offsets; regions with any
/// configured intervention before their first case are excluded and
/// reported, not failed. Output is sorted by region id.
pub fn align_regions(
    raw: Vec<RawRegionData>,
    vocabulary: &[String],
) -> Result<(Vec<RegionRecord>, AlignmentReport)> {
    let mut records = Vec::new();
    let mut report = AlignmentReport::default();

    for region in raw {
        let origin = region.cases.origin_date.ok_or_else(|| {
            Error::InvalidInput(format!(
                "region `{}` has no origin date; alignment needs calendar anchoring",
                region.cases.region_id
            ))
        })?;
        let region_id = region.cases.region_id.clone();
        let horizon = region.cases.len();

        let mut offsets: BTreeMap<String, Option<i64>> = BTreeMap::new();
        let mut negative: Vec<AlignmentExclusion> = Vec::new();
        for name in vocabulary {
            match region.intervention_dates.get(name) {
                Some(date) => {
                    let offset = date.signed_duration_since(origin).num_days();
                    if offset < 0 {
                        negative.push(AlignmentExclusion {
                            region_id: region_id.clone(),
                            intervention: name.clone(),
                            offset,
                        });
                    }
                    offsets.insert(name.clone(), Some(offset));
                }
                None => {
                    offsets.insert(name.clone(), None);
                }
            }
        }
        if !negative.is_empty() {
            report.excluded.extend(negative);
            continue;
        }

        let mut series: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        for (name, dated) in &region.dated_series {
            let mut values = vec![None; horizon];
            for (date, value) in dated {
                let off = date.signed_duration_since(origin).num_days();
                if off >= 0 && (off as usize) < horizon {
                    values[off as usize] = Some(*value);
                }
            }
            series.insert(name.clone(), values);
        }
        series.insert(
            "new_cases".into(),
            region.cases.counts.iter().map(|c| Some(*c)).collect(),
        );

        records.push(RegionRecord {
            region_id,
            baseline: region.baseline,
            series,
            rt: region.rt,
            interventions: offsets,
            first_case_date: Some(origin),
        });
    }

    records.sort_by(|a, b| a.region_id.cmp(&b.region_id));
    report.kept = records.len();
    Ok((records, report))
}
