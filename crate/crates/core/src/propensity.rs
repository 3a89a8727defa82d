//! Logistic propensity model for intervention timing.
//!
//! The coefficient vector solves the estimating equation
//! `sum_rows x (delta - expit(x' beta)) = 0` over risk-set rows, which is
//! exactly the pooled logistic score, so an ordinary maximum-likelihood
//! oracle is a valid cross-check. The per-region influence vectors feed the
//! plug-in variances of the downstream effect estimators.

use nalgebra::{DMatrix, DVector};

use crate::design::{Assignment, DesignTable};
use crate::error::{Error, Result};
use crate::util::expit;

/// Fitted probabilities are clipped into `[CLIP_EPS, 1 - CLIP_EPS]` so the
/// inverse-probability weights stay finite; clip events are counted, never
/// silent.
pub const CLIP_EPS: f64 = 1e-8;

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100;
const DIVERGENCE_NORM: f64 = 30.0;

/// Fitted propensity model over one design table.
#[derive(Clone, Debug)]
pub struct PropensityFit {
    pub covariate_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Per-row fitted probability, aligned with `table.rows`; `None` for
    /// rows outside the fit (excluded or incomplete covariates).
    pub q: Vec<Option<f64>>,
    /// Per-region probability at the region's own kept event, when any.
    pub p_case: Vec<Option<f64>>,
    /// Per-region influence vectors; zero for regions with no usable rows.
    pub v: Vec<Vec<f64>>,
    /// Regions contributing at least one usable row. This is the `n` of all
    /// per-region averages downstream.
    pub region_used: Vec<bool>,
    pub n_regions: usize,
    pub used_rows: usize,
    pub converged: bool,
    pub iterations: usize,
    pub clip_count: usize,
}

impl PropensityFit {
    /// Estimated covariance of the coefficient estimate,
    /// `(sum_i V_i V_i') / n^2`.
    pub fn beta_covariance(&self) -> DMatrix<f64> {
        let p = self.beta.len();
        let mut acc = DMatrix::zeros(p, p);
        for v in &self.v {
            let vv = DVector::from_column_slice(v);
            acc += &vv * vv.transpose();
        }
        acc / (self.n_regions as f64 * self.n_regions as f64)
    }
}

/// Rows entering the fit: treated or control with complete covariates.
/// Rows with a missing outcome still inform the assignment model.
fn usable(row: &crate::design::DesignRow) -> bool {
    row.assignment != Assignment::Excluded && row.covariates_complete()
}

/// Solve the propensity estimating equation by damped Newton iteration.
///
/// The solve runs on internally standardized covariates for conditioning and
/// is polished on the original scale; convergence is declared at residual
/// norm `1e-10`. Complete separation and rank deficiency are reported as
/// errors, divergence heuristically (`|beta| > 30` with a non-vanishing
/// residual).
pub fn fit_propensity(table: &DesignTable) -> Result<PropensityFit> {
    let rows: Vec<(usize, &crate::design::DesignRow)> =
        table.rows.iter().enumerate().filter(|(_, r)| usable(r)).collect();
    let p = table.covariate_names.len();
    let n_treated = rows.iter().filter(|(_, r)| r.treated()).count();
    let n_control = rows.len() - n_treated;
    if n_treated == 0 || n_control == 0 {
        return Err(Error::InsufficientDesign(format!(
            "propensity fit needs both arms, got {n_treated} treated / {n_control} control rows"
        )));
    }

    check_single_covariate_separation(table, &rows)?;

    // Column standardization (intercept untouched).
    let mut mean = vec![0.0; p];
    let mut sd = vec![1.0; p];
    for j in 1..p {
        let m = rows.iter().map(|(_, r)| r.covariates[j]).sum::<f64>() / rows.len() as f64;
        let var =
            rows.iter().map(|(_, r)| (r.covariates[j] - m).powi(2)).sum::<f64>() / rows.len() as f64;
        if var <= 0.0 {
            return Err(Error::RankDeficient(format!(
                "covariate `{}` is constant across rows",
                table.covariate_names[j]
            )));
        }
        mean[j] = m;
        sd[j] = var.sqrt();
    }
    let std_row = |r: &crate::design::DesignRow| -> DVector<f64> {
        DVector::from_iterator(
            p,
            r.covariates.iter().enumerate().map(|(j, v)| {
                if j == 0 {
                    1.0
                } else {
                    (v - mean[j]) / sd[j]
                }
            }),
        )
    };

    let mut beta = DVector::zeros(p);
    let mut iterations = 0usize;
    let mut residual = score(&rows, &std_row, &beta);
    for _ in 0..MAX_ITERATIONS {
        if residual.norm() < RESIDUAL_TOL {
            break;
        }
        iterations += 1;
        let hessian = information(&rows, &std_row, &beta);
        let step = hessian
            .cholesky()
            .map(|ch| ch.solve(&residual))
            .ok_or_else(|| Error::RankDeficient("singular information matrix".into()))?;

        // Step-halving on residual-norm increase.
        let mut scale = 1.0;
        let base_norm = residual.norm();
        loop {
            let cand = &beta + scale * &step;
            let cand_res = score(&rows, &std_row, &cand);
            if cand_res.norm() <= base_norm || scale < 1e-4 {
                beta = cand;
                residual = cand_res;
                break;
            }
            scale *= 0.5;
        }

        if beta.norm() > DIVERGENCE_NORM && residual.norm() > 1e-6 {
            let worst = (1..p)
                .max_by(|&a, &b| beta[a].abs().partial_cmp(&beta[b].abs()).unwrap())
                .unwrap_or(0);
            return Err(Error::Separation { covariate: table.covariate_names[worst].clone() });
        }
    }

    // Back-transform to the original covariate scale and polish there.
    let mut beta_orig = DVector::zeros(p);
    for j in 1..p {
        beta_orig[j] = beta[j] / sd[j];
    }
    beta_orig[0] = beta[0] - (1..p).map(|j| beta[j] * mean[j] / sd[j]).sum::<f64>();
    let orig_row = |r: &crate::design::DesignRow| DVector::from_column_slice(&r.covariates);
    for _ in 0..5 {
        let res = score(&rows, &orig_row, &beta_orig);
        if res.norm() < RESIDUAL_TOL {
            break;
        }
        let hess = information(&rows, &orig_row, &beta_orig);
        match hess.cholesky() {
            Some(ch) => beta_orig += ch.solve(&res),
            None => break,
        }
    }
    let final_residual = score(&rows, &orig_row, &beta_orig).norm();
    let converged = final_residual < 1e-8;

    // Fitted probabilities, clipped.
    let mut clip_count = 0usize;
    let mut q = vec![None; table.rows.len()];
    for (idx, row) in &rows {
        let raw = expit(orig_row(row).dot(&beta_orig));
        let clipped = raw.clamp(CLIP_EPS, 1.0 - CLIP_EPS);
        if clipped != raw {
            clip_count += 1;
        }
        q[*idx] = Some(clipped);
    }

    let mut region_used = vec![false; table.n_regions()];
    for (_, row) in &rows {
        region_used[row.region] = true;
    }
    let n_regions = region_used.iter().filter(|u| **u).count();

    let mut p_case = vec![None; table.n_regions()];
    for (idx, row) in &rows {
        let event = &table.events[row.event];
        if event.case_region == row.region {
            p_case[row.region] = q[*idx];
        }
    }

    let mut fit = PropensityFit {
        covariate_names: table.covariate_names.clone(),
        beta: beta_orig.iter().copied().collect(),
        q,
        p_case,
        v: vec![vec![0.0; p]; table.n_regions()],
        region_used,
        n_regions,
        used_rows: rows.len(),
        converged,
        iterations,
        clip_count,
    };
    fit.v = influence_vectors(table, &fit)?;
    Ok(fit)
}

/// Per-region influence vectors for the coefficient estimate:
///
/// ```text
/// V_i = [ n^{-1} sum_rows x x' q (1-q) ]^{-1}  sum_{rows of i} x (delta - q)
/// ```
///
/// Their sum vanishes at the solution (the estimating equation holds).
pub fn influence_vectors(table: &DesignTable, fit: &PropensityFit) -> Result<Vec<Vec<f64>>> {
    if !fit.converged {
        return Err(Error::InvalidInput(
            "influence vectors require a converged propensity fit".into(),
        ));
    }
    let p = fit.beta.len();
    let n = fit.n_regions as f64;
    let mut info = DMatrix::zeros(p, p);
    let mut scores: Vec<DVector<f64>> = vec![DVector::zeros(p); table.n_regions()];
    for (idx, row) in table.rows.iter().enumerate() {
        let Some(qv) = fit.q[idx] else { continue };
        let x = DVector::from_column_slice(&row.covariates);
        info += &x * x.transpose() * (qv * (1.0 - qv));
        let delta = if row.treated() { 1.0 } else { 0.0 };
        scores[row.region] += &x * (delta - qv);
    }
    info /= n;
    let inv = info
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::RankDeficient("singular information matrix".into()))?;
    Ok(scores
        .into_iter()
        .map(|s| (&inv * s).iter().copied().collect())
        .collect())
}

fn score<F>(rows: &[(usize, &crate::design::DesignRow)], xf: &F, beta: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&crate::design::DesignRow) -> DVector<f64>,
{
    let mut g = DVector::zeros(beta.len());
    for (_, row) in rows {
        let x = xf(row);
        let delta = if row.treated() { 1.0 } else { 0.0 };
        let q = expit(x.dot(beta));
        g += &x * (delta - q);
    }
    g
}

fn information<F>(
    rows: &[(usize, &crate::design::DesignRow)],
    xf: &F,
    beta: &DVector<f64>,
) -> DMatrix<f64>
where
    F: Fn(&crate::design::DesignRow) -> DVector<f64>,
{
    let p = beta.len();
    let mut h = DMatrix::zeros(p, p);
    for (_, row) in rows {
        let x = xf(row);
        let q = expit(x.dot(beta));
        h += &x * x.transpose() * (q * (1.0 - q)).max(1e-12);
    }
    h
}

/// Exact check for complete separation by a single covariate: every treated
/// value strictly above every control value (or the reverse).
fn check_single_covariate_separation(
    table: &DesignTable,
    rows: &[(usize, &crate::design::DesignRow)],
) -> Result<()> {
    for j in 1..table.covariate_names.len() {
        let mut t_min = f64::INFINITY;
        let mut t_max = f64::NEG_INFINITY;
        let mut c_min = f64::INFINITY;
        let mut c_max = f64::NEG_INFINITY;
        for (_, row) in rows {
            let v = row.covariates[j];
            if row.treated() {
                t_min = t_min.min(v);
                t_max = t_max.max(v);
            } else {
                c_min = c_min.min(v);
                c_max = c_max.max(v);
            }
        }
        let constant = t_min == t_max && c_min == c_max && t_min == c_min;
        if !constant && (t_min > c_max || t_max < c_min) {
            return Err(Error::Separation { covariate: table.covariate_names[j].clone() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DesignEvent, DesignRow, DesignTable, INTERCEPT_NAME};
    use crate::util::logit;

    /// Table with one row per (event, region) laid out from explicit
    /// (region, treated, covariates-beyond-intercept) triples per event.
    fn table_from(
        events: Vec<Vec<(usize, bool, Vec<f64>)>>,
        n_regions: usize,
        names: &[&str],
    ) -> DesignTable {
        let mut covariate_names = vec![INTERCEPT_NAME.to_string()];
        covariate_names.extend(names.iter().map(|s| s.to_string()));
        let mut rows = Vec::new();
        let mut evs = Vec::new();
        for (eidx, event_rows) in events.iter().enumerate() {
            // Case region: first treated row in the event.
            let case = event_rows.iter().find(|r| r.1).map(|r| r.0).unwrap_or(0);
            evs.push(DesignEvent { case_region: case, day: 10 * (eidx as i64 + 1) });
            for (region, treated, extra) in event_rows {
                let mut c = vec![1.0];
                c.extend(extra);
                rows.push(DesignRow {
                    event: eidx,
                    region: *region,
                    assignment: if *treated { Assignment::Treated } else { Assignment::Control },
                    outcome: Some(0.0),
                    covariates: c,
                });
            }
        }
        DesignTable::from_parts(
            "npi",
            1,
            covariate_names,
            (0..n_regions).map(|i| format!("r{i}")).collect(),
            evs,
            rows,
        )
        .unwrap()
    }

    #[test]
    fn balanced_events_give_zero_intercept() {
        // Intercept-only, one treated per risk set of size 2.
        let table = table_from(
            vec![
                vec![(0, true, vec![]), (1, false, vec![])],
                vec![(1, true, vec![]), (2, false, vec![])],
                vec![(2, true, vec![]), (3, false, vec![])],
            ],
            4,
            &[],
        );
        let fit = fit_propensity(&table).unwrap();
        assert!(fit.converged);
        assert!(fit.beta[0].abs() < 1e-10, "beta0 = {}", fit.beta[0]);
        for q in fit.q.iter().flatten() {
            assert!((q - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn intercept_only_matches_event_fraction() {
        // 3 treated rows of 10 total: logit(0.3).
        let mut event_rows = vec![(0usize, true, vec![])];
        for r in 1..10 {
            event_rows.push((r, r < 3, vec![]));
        }
        let table = table_from(vec![event_rows.clone(), event_rows], 10, &[]);
        let fit = fit_propensity(&table).unwrap();
        assert!((fit.beta[0] - logit(0.3)).abs() < 1e-9);
    }

    #[test]
    fn matches_independent_mle_oracle() {
        // 6 rows, 2 covariates; oracle maximizes the log-likelihood by its
        // own Newton iteration on the gradient/hessian of the likelihood.
        let rows = vec![
            (0usize, true, vec![0.5, -1.0]),
            (1usize, false, vec![-0.2, 0.3]),
            (2usize, false, vec![0.1, 1.2]),
            (3usize, true, vec![-0.8, 0.9]),
            (4usize, false, vec![-0.9, -0.4]),
            (5usize, false, vec![0.9, 0.8]),
        ];
        let table = table_from(vec![rows.clone()], 6, &["x1", "x2"]);
        let fit = fit_propensity(&table).unwrap();

        let oracle = mle_oracle(
            &rows.iter().map(|(_, d, x)| (*d, vec![1.0, x[0], x[1]])).collect::<Vec<_>>(),
        );
        for (a, b) in fit.beta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    /// Plain Newton ascent on the pooled log-likelihood; test-only oracle.
    fn mle_oracle(rows: &[(bool, Vec<f64>)]) -> Vec<f64> {
        let p = rows[0].1.len();
        let mut beta = DVector::<f64>::zeros(p);
        for _ in 0..200 {
            let mut grad = DVector::<f64>::zeros(p);
            let mut hess = DMatrix::<f64>::zeros(p, p);
            for (d, x) in rows {
                let xv = DVector::from_column_slice(x);
                let eta: f64 = xv.dot(&beta);
                let mu = 1.0 / (1.0 + (-eta).exp());
                grad += &xv * (if *d { 1.0 } else { 0.0 } - mu);
                hess += &xv * xv.transpose() * mu * (1.0 - mu);
            }
            if grad.norm() < 1e-12 {
                break;
            }
            beta += hess.cholesky().unwrap().solve(&grad);
        }
        beta.iter().copied().collect()
    }

    #[test]
    fn influence_vectors_sum_to_zero_and_duplication_leaves_them_unchanged() {
        let rows = vec![
            (0usize, true, vec![0.5]),
            (1usize, false, vec![-0.2]),
            (2usize, true, vec![1.1]),
            (3usize, false, vec![0.8]),
            (4usize, false, vec![-1.3]),
        ];
        let table = table_from(vec![rows.clone(), rows.clone()], 5, &["x"]);
        let fit = fit_propensity(&table).unwrap();
        let p = fit.beta.len();
        for j in 0..p {
            let total: f64 = fit.v.iter().map(|v| v[j]).sum();
            let scale: f64 = fit.v.iter().map(|v| v[j].abs()).sum::<f64>().max(1.0);
            assert!(total.abs() / scale < 1e-6, "sum V[{j}] = {total}");
        }

        // Duplicating every region doubles both the total information and n,
        // so the per-region averages in the influence formula are unchanged
        // and each copy carries the same vector as the original.
        let mut dup_rows = Vec::new();
        for copy in 0..2usize {
            for (r, d, x) in &rows {
                dup_rows.push((r + copy * 5, *d, x.clone()));
            }
        }
        let dup_table = table_from(vec![dup_rows.clone(), dup_rows], 10, &["x"]);
        let dup_fit = fit_propensity(&dup_table).unwrap();
        for r in 0..5 {
            for j in 0..p {
                assert!(
                    (fit.v[r][j] - dup_fit.v[r][j]).abs() < 1e-8,
                    "V[{r}][{j}]: {} vs {}",
                    fit.v[r][j],
                    dup_fit.v[r][j]
                );
                assert!((dup_fit.v[r][j] - dup_fit.v[r + 5][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn hand_computed_intercept_only_influence() {
        // Two regions, one event, intercept-only: q = 1/2 at the solution.
        // Information: n^-1 * 2 * 0.25 = 0.25, inverse 4; scores +-0.5.
        let table = table_from(vec![vec![(0, true, vec![]), (1, false, vec![])]], 2, &[]);
        let fit = fit_propensity(&table).unwrap();
        assert!((fit.v[0][0] - 2.0).abs() < 1e-8);
        assert!((fit.v[1][0] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn beta_covariance_is_symmetric_psd() {
        let rows = vec![
            (0usize, true, vec![0.5, 0.1]),
            (1usize, false, vec![-0.2, -0.5]),
            (2usize, true, vec![1.1, 0.7]),
            (3usize, false, vec![0.4, 0.9]),
            (4usize, false, vec![-1.3, 0.2]),
            (5usize, false, vec![0.8, -1.0]),
        ];
        let table = table_from(vec![rows.clone(), rows], 6, &["x1", "x2"]);
        let fit = fit_propensity(&table).unwrap();
        let cov = fit.beta_covariance();
        for i in 0..cov.nrows() {
            for j in 0..cov.ncols() {
                assert!((cov[(i, j)] - cov[(j, i)]).abs() < 1e-12);
            }
        }
        let eig = cov.symmetric_eigenvalues();
        assert!(eig.iter().all(|l| *l > -1e-12), "eigenvalues {eig:?}");
    }

    #[test]
    fn separation_is_detected_and_named() {
        let rows = vec![
            (0usize, true, vec![2.0]),
            (1usize, true, vec![1.5]),
            (2usize, false, vec![-1.0]),
            (3usize, false, vec![-0.5]),
        ];
        let table = table_from(vec![rows.clone(), rows], 4, &["split"]);
        match fit_propensity(&table) {
            Err(Error::Separation { covariate }) => assert_eq!(covariate, "split"),
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn constant_covariate_is_rank_deficient() {
        let rows = vec![
            (0usize, true, vec![3.0]),
            (1usize, false, vec![3.0]),
            (2usize, false, vec![3.0]),
        ];
        let table = table_from(vec![rows.clone(), rows], 3, &["flat"]);
        assert!(matches!(fit_propensity(&table), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn one_armed_table_is_rejected() {
        let rows = vec![(0usize, true, vec![]), (1usize, true, vec![])];
        let table = table_from(vec![rows.clone(), rows], 2, &[]);
        assert!(matches!(fit_propensity(&table), Err(Error::InsufficientDesign(_))));
    }

    #[test]
    fn orthogonal_covariate_barely_moves_coefficients() {
        // Monotone-refit check: across replicates, adding a covariate that is
        // independent of treatment shifts the original slope by o_p(1); the
        // mean shift over 200 replicates stays within 5 standard errors.
        use rand::Rng;
        use rand::SeedableRng;
        let mut shifts = Vec::new();
        for rep in 0..200u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(900 + rep);
            let n = 80;
            let mut base_rows = Vec::new();
            let mut aug_rows = Vec::new();
            for r in 0..n {
                let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
                let z: f64 = rng.random::<f64>() * 2.0 - 1.0;
                let p = expit(-0.4 + 0.9 * x);
                let d = rng.random::<f64>() < p;
                base_rows.push((r, d, vec![x]));
                aug_rows.push((r, d, vec![x, z]));
            }
            if !base_rows.iter().any(|r| r.1) || base_rows.iter().all(|r| r.1) {
                continue;
            }
            let t_base = table_from(vec![base_rows], n, &["x"]);
            let t_aug = table_from(vec![aug_rows], n, &["x", "z"]);
            let (Ok(f_base), Ok(f_aug)) = (fit_propensity(&t_base), fit_propensity(&t_aug)) else {
                continue;
            };
            shifts.push(f_aug.beta[1] - f_base.beta[1]);
        }
        assert!(shifts.len() > 150);
        let m = crate::util::mean(&shifts);
        let se = (crate::util::sample_variance(&shifts) / shifts.len() as f64).sqrt();
        assert!(m.abs() < 5.0 * se, "mean shift {m} vs se {se}");
    }
}
