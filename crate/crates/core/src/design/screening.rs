//! Covariate screening by rank correlation with the event indicator.

use super::table::{Assignment, DesignTable};
use crate::error::{Error, Result};

/// Screening outcome for one candidate covariate.
#[derive(Clone, Debug)]
pub struct ScreeningEntry {
    pub name: String,
    /// Spearman correlation with the treatment indicator; `None` when
    /// undefined (constant covariate or one-armed table).
    pub rho: Option<f64>,
    pub missing_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct ScreeningReport {
    /// Survivors ranked by |rho| descending (undefined last), name
    /// ascending on ties.
    pub ranked: Vec<ScreeningEntry>,
    /// Top-k names; the intercept is implicit and never screened.
    pub selected: Vec<String>,
    /// Covariates dropped for missingness, with their missing fraction.
    pub excluded_missing: Vec<(String, f64)>,
}

/// Rank candidate covariates by |Spearman rho| against the treatment
/// indicator across active rows, dropping those whose missing fraction
/// exceeds `missing_threshold`, and select the top `k`.
pub fn screen_covariates(
    table: &DesignTable,
    k: usize,
    missing_threshold: f64,
) -> Result<ScreeningReport> {
    if k < 1 {
        return Err(Error::InvalidInput("screening k must be >= 1".into()));
    }
    let rows: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r.assignment != Assignment::Excluded)
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientDesign("no active rows to screen".into()));
    }

    let mut ranked: Vec<ScreeningEntry> = Vec::new();
    let mut excluded_missing: Vec<(String, f64)> = Vec::new();
    let mut any_usable = false;

    for (idx, name) in table.covariate_names.iter().enumerate() {
        if idx == 0 {
            continue; // intercept
        }
        let mut xs = Vec::new();
        let mut ds = Vec::new();
        let mut missing = 0usize;
        for row in &rows {
            let v = row.covariates[idx];
            if v.is_finite() {
                xs.push(v);
                ds.push(if row.treated() { 1.0 } else { 0.0 });
            } else {
                missing += 1;
            }
        }
        let missing_fraction = missing as f64 / rows.len() as f64;
        if missing_fraction > missing_threshold {
            excluded_missing.push((name.clone(), missing_fraction));
            continue;
        }
        any_usable = true;
        let rho = spearman(&xs, &ds);
        ranked.push(ScreeningEntry { name: name.clone(), rho, missing_fraction });
    }

    if !any_usable && table.covariate_names.len() > 1 {
        return Err(Error::InsufficientDesign(
            "every candidate covariate exceeds the missingness threshold".into(),
        ));
    }

    ranked.sort_by(|a, b| {
        let ka = a.rho.map(f64::abs);
        let kb = b.rho.map(f64::abs);
        match (ka, kb) {
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap().then(a.name.cmp(&b.name)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.name.cmp(&b.name),
        }
    });

    let selected = ranked.iter().take(k).map(|e| e.name.clone()).collect();
    Ok(ScreeningReport { ranked, selected, excluded_missing })
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant (undefined).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
