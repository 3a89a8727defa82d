//! Risk sets, treatment indicators, outcomes, and covariate rows.

use super::{pre_window_mean, RegionRecord};
use crate::epi_model::outcome_change;
use crate::error::{Error, Result};

/// Name of the implicit intercept column, always first.
pub const INTERCEPT_NAME: &str = "(intercept)";

/// Risk-set membership of one region at one event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    /// Own intervention time inside `[T_j, T_j + delta]`.
    Treated,
    /// Own intervention time after `T_j + delta` (or never).
    Control,
    /// Dropped in strict mode: another intervention fell inside the window.
    Excluded,
}

/// One intervention event: the case region and its intervention day.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DesignEvent {
    pub case_region: usize,
    pub day: i64,
}

/// One (event, at-risk region) pair.
#[derive(Clone, Debug)]
pub struct DesignRow {
    pub event: usize,
    pub region: usize,
    pub assignment: Assignment,
    /// Outcome change across the window; `None` when the reproduction
    /// number is undefined at either endpoint.
    pub outcome: Option<f64>,
    /// Covariate vector aligned with the table's covariate names; missing
    /// components are NaN.
    pub covariates: Vec<f64>,
}

impl DesignRow {
    pub fn treated(&self) -> bool {
        self.assignment == Assignment::Treated
    }

    pub fn covariates_complete(&self) -> bool {
        self.covariates.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default)]
pub struct DesignDiagnostics {
    /// Events removed because no eligible control remained, as
    /// (region id, event day, reason).
    pub dropped_events: Vec<(String, i64, String)>,
    /// Rows excluded by the strict no-concurrent-intervention rule.
    pub excluded_rows: usize,
    /// Non-excluded rows with an undefined outcome.
    pub missing_outcome_rows: usize,
    /// Non-excluded rows with at least one missing covariate component.
    pub incomplete_covariate_rows: usize,
}

/// Event-indexed design table for one intervention and one window size.
#[derive(Clone, Debug)]
pub struct DesignTable {
    pub intervention: String,
    pub delta: i64,
    /// `(intercept)`, then time-varying names, then baseline names.
    pub covariate_names: Vec<String>,
    pub region_ids: Vec<String>,
    pub events: Vec<DesignEvent>,
    pub rows: Vec<DesignRow>,
    pub diagnostics: DesignDiagnostics,
}

impl DesignTable {
    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    /// Rows that participate in estimation (treated or control).
    pub fn active_rows(&self) -> impl Iterator<Item = (usize, &DesignRow)> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.assignment != Assignment::Excluded)
    }

    /// Index of the event whose case region is `region`, if that event was
    /// kept.
    pub fn own_event(&self, region: usize) -> Option<usize> {
        self.events.iter().position(|e| e.case_region == region)
    }

    /// Project the table onto a subset of covariates (the intercept is kept
    /// implicitly and must not be listed).
    pub fn select_covariates(&self, names: &[String]) -> Result<DesignTable> {
        let mut indices = vec![0usize];
        for name in names {
            if name == INTERCEPT_NAME {
                continue;
            }
            let idx = self
                .covariate_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown covariate `{name}`")))?;
            indices.push(idx);
        }
        let covariate_names = indices.iter().map(|&i| self.covariate_names[i].clone()).collect();
        let mut table = self.clone();
        table.covariate_names = covariate_names;
        let mut incomplete = 0usize;
        for row in &mut table.rows {
            row.covariates = indices.iter().map(|&i| row.covariates[i]).collect();
            if row.assignment != Assignment::Excluded && !row.covariates_complete() {
                incomplete += 1;
            }
        }
        table.diagnostics.incomplete_covariate_rows = incomplete;
        Ok(table)
    }

    /// A structurally valid table assembled directly from rows; intended for
    /// simulation harnesses and tests. Region and event indices must be
    /// consistent with the provided id lists.
    pub fn from_parts(
        intervention: impl Into<String>,
        delta: i64,
        covariate_names: Vec<String>,
        region_ids: Vec<String>,
        events: Vec<DesignEvent>,
        rows: Vec<DesignRow>,
    ) -> Result<DesignTable> {
        let n_regions = region_ids.len();
        let n_events = events.len();
        for event in &events {
            if event.case_region >= n_regions {
                return Err(Error::InvalidInput("event case region out of range".into()));
            }
        }
        let n_cov = covariate_names.len();
        for row in &rows {
            if row.event >= n_events || row.region >= n_regions {
                return Err(Error::InvalidInput("row indices out of range".into()));
            }
            if row.covariates.len() != n_cov {
                return Err(Error::InvalidInput("row covariate arity mismatch".into()));
            }
        }
        Ok(DesignTable {
            intervention: intervention.into(),
            delta,
            covariate_names,
            region_ids,
            events,
            rows,
            diagnostics: DesignDiagnostics::default(),
        })
    }
}

/// Construction options for [`build_design`].
#[derive(Clone, Debug)]
pub struct DesignOptions {
    /// Time-varying covariates, summarized as pre-event window means.
    pub h_names: Vec<String>,
    /// Baseline covariate names.
    pub x_names: Vec<String>,
    /// Pre-event averaging window in days.
    pub h_window: usize,
    /// Minimum observed days inside the window.
    pub h_min_days: usize,
    /// Exclude rows whose region implemented a different intervention
    /// inside `(T_j, T_j + delta]`.
    pub strict_no_concurrent: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            h_names: Vec::new(),
            x_names: Vec::new(),
            h_window: 7,
            h_min_days: 3,
            strict_no_concurrent: false,
        }
    }
}

/// Build the event-indexed design table for one intervention.
///
/// Events are the distinct (region, intervention day) pairs with a finite
/// day. For event `j`, the risk set holds every region `i` with
/// `T_i >= T_j`; rows with `T_i <= T_j + delta` are grouped as treated and
/// rows with `T_i > T_j + delta` are controls. The outcome is
/// `R_{i, T_j + delta} - R_{i, T_j}` and the covariate row is the pre-event
/// window mean of each time-varying series followed by the baseline values.
/// Events left without any control are dropped with a diagnostic.
pub fn build_design(
    records: &[RegionRecord],
    intervention: &str,
    delta: i64,
    opts: &DesignOptions,
) -> Result<DesignTable> {
    if delta < 1 {
        return Err(Error::InvalidInput(format!("window size must be >= 1, got {delta}")));
    }
    if records.is_empty() {
        return Err(Error::InsufficientDesign("no regions".into()));
    }

    // Deterministic region order regardless of input permutation.
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].region_id.cmp(&records[b].region_id));
    let regions: Vec<&RegionRecord> = order.iter().map(|&i| &records[i]).collect();
    let region_ids: Vec<String> = regions.iter().map(|r| r.region_id.clone()).collect();

    let mut covariate_names = vec![INTERCEPT_NAME.to_string()];
    covariate_names.extend(opts.h_names.iter().cloned());
    covariate_names.extend(opts.x_names.iter().cloned());

    // Events sorted by (day, region id).
    let mut events: Vec<DesignEvent> = regions
        .iter()
        .enumerate()
        .filter_map(|(idx, r)| {
            r.intervention_day(intervention).map(|day| DesignEvent { case_region: idx, day })
        })
        .collect();
    events.sort_by_key(|e| (e.day, e.case_region));
    if events.len() < 2 {
        return Err(Error::InsufficientDesign(format!(
            "intervention `{intervention}` has {} event(s); at least 2 required",
            events.len()
        )));
    }

    let mut diagnostics = DesignDiagnostics::default();
    let mut kept_events: Vec<DesignEvent> = Vec::new();
    let mut rows: Vec<DesignRow> = Vec::new();

    for event in events {
        let mut event_rows: Vec<DesignRow> = Vec::new();
        let mut n_controls = 0usize;
        for (ridx, region) in regions.iter().enumerate() {
            let own = region.intervention_day(intervention);
            // At risk only while not yet treated: T_i >= T_j (None = infinity).
            let at_risk = own.map_or(true, |t| t >= event.day);
            if !at_risk {
                continue;
            }
            let assignment = if opts.strict_no_concurrent
                && has_concurrent_other(region, intervention, event.day, delta)
            {
                Assignment::Excluded
            } else {
                match own {
                    Some(t) if t <= event.day + delta => Assignment::Treated,
                    _ => Assignment::Control,
                }
            };
            if assignment == Assignment::Control {
                n_controls += 1;
            }

            let outcome = outcome_change(&region.rt, event.day, delta);
            let mut covariates = Vec::with_capacity(covariate_names.len());
            covariates.push(1.0);
            for name in &opts.h_names {
                covariates.push(
                    pre_window_mean(region, name, event.day, opts.h_window, opts.h_min_days)
                        .unwrap_or(f64::NAN),
                );
            }
            for name in &opts.x_names {
                covariates.push(
                    region.baseline.get(name).copied().flatten().unwrap_or(f64::NAN),
                );
            }

            event_rows.push(DesignRow {
                event: kept_events.len(),
                region: ridx,
                assignment,
                outcome,
                covariates,
            });
        }

        if n_controls == 0 {
            diagnostics.dropped_events.push((
                region_ids[event.case_region].clone(),
                event.day,
                "no eligible controls".into(),
            ));
            continue;
        }
        for row in &event_rows {
            match row.assignment {
                Assignment::Excluded => diagnostics.excluded_rows += 1,
                _ => {
                    if row.outcome.is_none() {
                        diagnostics.missing_outcome_rows += 1;
                    }
                    if !row.covariates_complete() {
                        diagnostics.incomplete_covariate_rows += 1;
                    }
                }
            }
        }
        kept_events.push(event);
        rows.extend(event_rows);
    }

    if kept_events.len() < 2 {
        return Err(Error::InsufficientDesign(format!(
            "intervention `{intervention}` keeps {} event(s) after dropping those without controls",
            kept_events.len()
        )));
    }

    Ok(DesignTable {
        intervention: intervention.to_string(),
        delta,
        covariate_names,
        region_ids,
        events: kept_events,
        rows,
        diagnostics,
    })
}

/// True when some other intervention of this region falls inside
/// `(event_day, event_day + delta]`.
fn has_concurrent_other(
    region: &RegionRecord,
    intervention: &str,
    event_day: i64,
    delta: i64,
) -> bool {
    region.interventions.iter().any(|(name, day)| {
        name != intervention
            && day.is_some_and(|d| d > event_day && d <= event_day + delta)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epi_model::RtSeries;
    use std::collections::BTreeMap;

    fn region(id: &str, t: Option<i64>, rt: Vec<Option<f64>>) -> RegionRecord {
        let mut interventions = BTreeMap::new();
        interventions.insert("npi".to_string(), t);
        RegionRecord {
            region_id: id.into(),
            rt: RtSeries::new(rt),
            interventions,
            ..Default::default()
        }
    }

    fn smooth_rt(len: usize) -> Vec<Option<f64>> {
        (0..len).map(|d| Some(2.0 - 0.01 * d as f64)).collect()
    }

    #[test]
    fn hand_enumerated_risk_sets() {
        // T = (10, 12, 30), delta = 5.
        let records = vec![
            region("a", Some(10), smooth_rt(60)),
            region("b", Some(12), smooth_rt(60)),
            region("c", Some(30), smooth_rt(60)),
        ];
        let table = build_design(&records, "npi", 5, &DesignOptions::default()).unwrap();

        // Event at 30 has no controls and is dropped.
        assert_eq!(table.events.len(), 2);
        assert_eq!(table.diagnostics.dropped_events.len(), 1);
        assert_eq!(table.diagnostics.dropped_events[0].1, 30);

        // Event at 10: a treated (own), b grouped treated (12 <= 15), c control.
        let e0: Vec<_> = table.rows.iter().filter(|r| r.event == 0).collect();
        assert_eq!(e0.len(), 3);
        assert!(e0.iter().find(|r| r.region == 0).unwrap().treated());
        assert!(e0.iter().find(|r| r.region == 1).unwrap().treated());
        assert_eq!(
            e0.iter().find(|r| r.region == 2).unwrap().assignment,
            Assignment::Control
        );

        // Event at 12: only b and c remain at risk; a already treated.
        let e1: Vec<_> = table.rows.iter().filter(|r| r.event == 1).collect();
        assert_eq!(e1.len(), 2);
        assert!(e1.iter().all(|r| r.region != 0));
    }

    #[test]
    fn delta_one_with_separated_times_is_exact_equality() {
        let records = vec![
            region("a", Some(10), smooth_rt(60)),
            region("b", Some(14), smooth_rt(60)),
            region("c", Some(20), smooth_rt(60)),
            region("d", None, smooth_rt(60)),
        ];
        let table = build_design(&records, "npi", 1, &DesignOptions::default()).unwrap();
        for row in table.rows.iter().filter(|r| r.assignment != Assignment::Excluded) {
            let own = records
                .iter()
                .find(|r| r.region_id == table.region_ids[row.region])
                .unwrap()
                .intervention_day("npi");
            let event_day = table.events[row.event].day;
            assert_eq!(row.treated(), own == Some(event_day));
        }
    }

    #[test]
    fn missing_outcome_is_flagged_and_counted() {
        let mut rt = smooth_rt(60);
        rt[15] = None; // event day 10 + delta 5
        let records = vec![
            region("a", Some(10), rt),
            region("b", Some(25), smooth_rt(60)),
            region("c", None, smooth_rt(60)),
        ];
        let table = build_design(&records, "npi", 5, &DesignOptions::default()).unwrap();
        let bad = table
            .rows
            .iter()
            .find(|r| r.region == 0 && table.events[r.event].day == 10)
            .unwrap();
        assert!(bad.outcome.is_none());
        assert_eq!(table.diagnostics.missing_outcome_rows, 1);
    }

    #[test]
    fn outcome_is_change_from_event_day() {
        let records = vec![
            region("a", Some(10), smooth_rt(60)),
            region("b", Some(40), smooth_rt(60)),
            region("c", None, smooth_rt(60)),
        ];
        let table = build_design(&records, "npi", 5, &DesignOptions::default()).unwrap();
        for row in &table.rows {
            if let Some(d) = row.outcome {
                // rt declines by 0.01/day, so any 5-day change is -0.05.
                assert!((d + 0.05).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partition_property() {
        let records = vec![
            region("a", Some(5), smooth_rt(80)),
            region("b", Some(9), smooth_rt(80)),
            region("c", Some(30), smooth_rt(80)),
            region("d", Some(55), smooth_rt(80)),
            region("e", None, smooth_rt(80)),
        ];
        let table = build_design(&records, "npi", 3, &DesignOptions::default()).unwrap();
        for row in &table.rows {
            let own = records
                .iter()
                .find(|r| r.region_id == table.region_ids[row.region])
                .unwrap()
                .intervention_day("npi");
            let day = table.events[row.event].day;
            match row.assignment {
                Assignment::Treated => {
                    let t = own.unwrap();
                    assert!(t >= day && t <= day + 3);
                }
                Assignment::Control => assert!(own.map_or(true, |t| t > day + 3)),
                Assignment::Excluded => panic!("no strict mode here"),
            }
        }
    }

    #[test]
    fn region_permutation_leaves_table_identical() {
        let mk = || {
            vec![
                region("a", Some(5), smooth_rt(80)),
                region("b", Some(9), smooth_rt(80)),
                region("c", Some(30), smooth_rt(80)),
                region("d", None, smooth_rt(80)),
            ]
        };
        let t1 = build_design(&mk(), "npi", 4, &DesignOptions::default()).unwrap();
        let mut permuted = mk();
        permuted.reverse();
        let t2 = build_design(&permuted, "npi", 4, &DesignOptions::default()).unwrap();
        assert_eq!(t1.region_ids, t2.region_ids);
        assert_eq!(t1.events, t2.events);
        assert_eq!(t1.rows.len(), t2.rows.len());
        for (r1, r2) in t1.rows.iter().zip(&t2.rows) {
            assert_eq!((r1.event, r1.region, r1.assignment), (r2.event, r2.region, r2.assignment));
            assert_eq!(r1.outcome, r2.outcome);
        }
    }

    #[test]
    fn widening_window_grows_treated_sets() {
        let records = vec![
            region("a", Some(5), smooth_rt(80)),
            region("b", Some(9), smooth_rt(80)),
            region("c", Some(30), smooth_rt(80)),
            region("d", None, smooth_rt(80)),
        ];
        let narrow = build_design(&records, "npi", 2, &DesignOptions::default()).unwrap();
        let wide = build_design(&records, "npi", 6, &DesignOptions::default()).unwrap();
        for event in &narrow.events {
            let day = event.day;
            let treated_of = |t: &DesignTable| -> Vec<usize> {
                t.events
                    .iter()
                    .position(|e| e.day == day && e.case_region == event.case_region)
                    .map(|eidx| {
                        t.rows
                            .iter()
                            .filter(|r| r.event == eidx && r.treated())
                            .map(|r| r.region)
                            .collect()
                    })
                    .unwrap_or_default()
            };
            let narrow_treated = treated_of(&narrow);
            let wide_treated = treated_of(&wide);
            if wide_treated.is_empty() {
                continue; // event dropped under the wider window
            }
            for r in &narrow_treated {
                assert!(wide_treated.contains(r));
            }
        }
    }

    #[test]
    fn risk_set_monotonicity() {
        let records = vec![
            region("a", Some(5), smooth_rt(80)),
            region("b", Some(9), smooth_rt(80)),
            region("c", Some(30), smooth_rt(80)),
            region("d", None, smooth_rt(80)),
        ];
        let table = build_design(&records, "npi", 3, &DesignOptions::default()).unwrap();
        // If region i is at risk for event j, it is at risk for every
        // earlier kept event.
        for (eidx, event) in table.events.iter().enumerate() {
            let members: Vec<usize> =
                table.rows.iter().filter(|r| r.event == eidx).map(|r| r.region).collect();
            for (pidx, prior) in table.events.iter().enumerate() {
                if prior.day > event.day {
                    continue;
                }
                let prior_members: Vec<usize> =
                    table.rows.iter().filter(|r| r.event == pidx).map(|r| r.region).collect();
                for m in &members {
                    assert!(prior_members.contains(m));
                }
            }
        }
    }

    #[test]
    fn strict_mode_excludes_concurrent_other_interventions() {
        let mut a = region("a", Some(10), smooth_rt(60));
        let mut b = region("b", Some(30), smooth_rt(60));
        // Region b starts a different intervention 3 days after event day 10.
        b.interventions.insert("other".into(), Some(13));
        a.interventions.insert("other".into(), None);
        let c = region("c", None, smooth_rt(60));
        let records = vec![a, b, c];

        let mut opts = DesignOptions::default();
        let relaxed = build_design(&records, "npi", 5, &opts);
        // Only one event has controls -> insufficient unless both kept.
        assert!(relaxed.is_ok() || relaxed.is_err());

        opts.strict_no_concurrent = true;
        let records2 = vec![
            region("a", Some(10), smooth_rt(60)),
            {
                let mut b = region("b", Some(12), smooth_rt(60));
                b.interventions.insert("other".into(), Some(13));
                b
            },
            region("c", Some(40), smooth_rt(60)),
            region("d", None, smooth_rt(60)),
        ];
        let strict = build_design(&records2, "npi", 5, &opts).unwrap();
        let excluded: Vec<_> = strict
            .rows
            .iter()
            .filter(|r| r.assignment == Assignment::Excluded)
            .collect();
        // Region b excluded from the day-10 event (other intervention at 13
        // in (10, 15]) but not from its own day-12 event (13 in (12, 17]
        // also holds) -- both windows catch it.
        assert!(!excluded.is_empty());
        assert!(strict.diagnostics.excluded_rows >= 1);
    }

    #[test]
    fn fewer_than_two_events_is_an_error() {
        let records = vec![
            region("a", Some(10), smooth_rt(60)),
            region("b", None, smooth_rt(60)),
        ];
        let err = build_design(&records, "npi", 5, &DesignOptions::default());
        assert!(matches!(err, Err(Error::InsufficientDesign(_))));
    }
}
