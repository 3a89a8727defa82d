//! Average intervention effect and its plug-in variance.

use nalgebra::DVector;

use crate::design::{DesignRow, DesignTable};
use crate::error::{Error, Result};
use crate::propensity::{PropensityFit, CLIP_EPS};
use crate::util::KahanSum;

/// Point estimate with its per-region building blocks.
#[derive(Clone, Debug)]
pub struct AteEstimate {
    pub intervention: String,
    pub delta: i64,
    /// Difference of the two standardized-weight arm means.
    pub gamma_hat: f64,
    /// Per-region weighted outcome and weight sums, region-aligned:
    /// treated-arm `A_i`, `B_i` and control-arm `C_i`, `D_i`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub n_treated_rows: usize,
    pub n_control_rows: usize,
    /// Rows dropped from both the numerator and denominator of their arm
    /// because the outcome was undefined.
    pub n_missing_outcome: usize,
}

/// Variance pieces attached to a point estimate.
#[derive(Clone, Debug)]
pub struct AteVariance {
    pub sigma2_hat: f64,
    pub ci95: (f64, f64),
    /// Per-region influence values (zero for regions outside the fit).
    pub u: Vec<f64>,
    /// Fitted case probabilities sitting at the clip boundary.
    pub q_boundary_count: usize,
}

/// Point estimate, variance, and confidence interval together.
#[derive(Clone, Debug)]
pub struct AteResult {
    pub intervention: String,
    pub delta: i64,
    pub gamma_hat: f64,
    pub sigma2_hat: f64,
    pub ci95: (f64, f64),
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub u: Vec<f64>,
    pub n_treated_rows: usize,
    pub n_control_rows: usize,
    pub n_missing_outcome: usize,
    pub q_boundary_count: usize,
}

impl AteResult {
    pub fn std_err(&self) -> f64 {
        self.sigma2_hat.sqrt()
    }
}

/// Rows entering the effect estimate: in an arm, with a fitted probability
/// and a defined outcome.
fn estimation_row<'a>(
    row: &'a DesignRow,
    q: Option<f64>,
) -> Option<(&'a DesignRow, f64, f64)> {
    let qv = q?;
    let outcome = row.outcome?;
    Some((row, qv, outcome))
}

/// Standardized-weight IPW difference-in-difference point estimate:
///
/// ```text
/// gamma = (sum d*delta/q) / (sum delta/q)
///       - (sum d*(1-delta)/(1-q)) / (sum (1-delta)/(1-q))
/// ```
///
/// Rows with a missing outcome are excluded from both the numerator and the
/// denominator of their arm. An empty arm is an error.
pub fn estimate_ate(table: &DesignTable, fit: &PropensityFit) -> Result<AteEstimate> {
    let nr = table.n_regions();
    let mut a = vec![0.0; nr];
    let mut b = vec![0.0; nr];
    let mut c = vec![0.0; nr];
    let mut d = vec![0.0; nr];
    let mut n_treated = 0usize;
    let mut n_control = 0usize;
    let mut n_missing = 0usize;

    for (idx, row) in table.active_rows() {
        if fit.q[idx].is_some() && row.outcome.is_none() {
            n_missing += 1;
        }
        let Some((row, q, outcome)) = estimation_row(row, fit.q[idx]) else { continue };
        if row.treated() {
            a[row.region] += outcome / q;
            b[row.region] += 1.0 / q;
            n_treated += 1;
        } else {
            c[row.region] += outcome / (1.0 - q);
            d[row.region] += 1.0 / (1.0 - q);
            n_control += 1;
        }
    }

    let sb = crate::util::kahan_sum(b.iter().copied());
    let sd = crate::util::kahan_sum(d.iter().copied());
    if n_treated == 0 || sb <= 0.0 {
        return Err(Error::InsufficientArm("no usable treated rows".into()));
    }
    if n_control == 0 || sd <= 0.0 {
        return Err(Error::InsufficientArm("no usable control rows".into()));
    }
    let sa = crate::util::kahan_sum(a.iter().copied());
    let sc = crate::util::kahan_sum(c.iter().copied());
    let gamma_hat = sa / sb - sc / sd;

    Ok(AteEstimate {
        intervention: table.intervention.clone(),
        delta: table.delta,
        gamma_hat,
        a,
        b,
        c,
        d,
        n_treated_rows: n_treated,
        n_control_rows: n_control,
        n_missing_outcome: n_missing,
    })
}

/// Plug-in asymptotic variance via per-region influence values.
///
/// Each `U_i` collects: the region's own weighted-sum contributions to the
/// two arm ratios; a correction for the estimated propensity coefficients
/// (two bracketed row vectors applied to `V_i`); and, for regions that are
/// themselves events, the self-selection terms of the empirical
/// intervention-time distribution (the `d_ii/q_ii` pair on the treated arm
/// and the event's control-row sums on the control arm). Then
/// `sigma2 = n^-2 sum_i (U_i - mean U)^2`.
pub fn ate_variance(
    table: &DesignTable,
    fit: &PropensityFit,
    est: &AteEstimate,
) -> Result<AteVariance> {
    if !fit.converged {
        return Err(Error::InvalidInput("variance requires a converged propensity fit".into()));
    }
    let nr = table.n_regions();
    let p = fit.beta.len();
    let n = fit.n_regions as f64;

    let sa = crate::util::kahan_sum(est.a.iter().copied());
    let sb = crate::util::kahan_sum(est.b.iter().copied());
    let sc = crate::util::kahan_sum(est.c.iter().copied());
    let sd = crate::util::kahan_sum(est.d.iter().copied());
    if sb <= 0.0 || sd <= 0.0 {
        return Err(Error::InsufficientArm("variance needs both arms".into()));
    }

    // Bracketed propensity-correction terms, accumulated over rows.
    let mut t_dx = vec![KahanSum::new(); p]; // sum d (1-q)/q x   over treated
    let mut t_x = vec![KahanSum::new(); p]; //  sum (1-q)/q x    over treated
    let mut c_dx = vec![KahanSum::new(); p]; // sum d q/(1-q) x  over control
    let mut c_x = vec![KahanSum::new(); p]; //  sum q/(1-q) x    over control
    for (idx, row) in table.active_rows() {
        let Some((row, q, outcome)) = estimation_row(row, fit.q[idx]) else { continue };
        if row.treated() {
            let w = (1.0 - q) / q;
            for j in 0..p {
                t_dx[j].add(outcome * w * row.covariates[j]);
                t_x[j].add(w * row.covariates[j]);
            }
        } else {
            let w = q / (1.0 - q);
            for j in 0..p {
                c_dx[j].add(outcome * w * row.covariates[j]);
                c_x[j].add(w * row.covariates[j]);
            }
        }
    }
    let bracket: DVector<f64> = DVector::from_iterator(
        p,
        (0..p).map(|j| {
            let treated_part = t_dx[j].total() / sb - sa / (sb * sb) * t_x[j].total();
            let control_part = c_dx[j].total() / sd - sc / (sd * sd) * c_x[j].total();
            treated_part + control_part
        }),
    );

    // Self-selection terms: regions that carry a kept event contribute their
    // own case row and the event's control rows.
    let mut self_terms = vec![0.0; nr];
    let mut q_boundary = 0usize;
    for (eidx, event) in table.events.iter().enumerate() {
        let case = event.case_region;
        let mut t1 = 0.0;
        let mut t2 = 0.0;
        let mut s_d = KahanSum::new();
        let mut s_1 = KahanSum::new();
        for (idx, row) in table.active_rows() {
            if row.event != eidx {
                continue;
            }
            let Some((row, q, outcome)) = estimation_row(row, fit.q[idx]) else { continue };
            if row.region == case {
                if q <= CLIP_EPS || q >= 1.0 - CLIP_EPS {
                    q_boundary += 1;
                }
                t1 = outcome / q / sb;
                t2 = sa / (sb * sb) / q;
            } else if !row.treated() {
                s_d.add(outcome / (1.0 - q));
                s_1.add(1.0 / (1.0 - q));
            }
        }
        self_terms[case] += t1 - t2 - s_d.total() / sd + sc / (sd * sd) * s_1.total();
    }

    // Assemble U_i over regions inside the fit.
    let mut u = vec![0.0; nr];
    let mut active: Vec<usize> = Vec::new();
    for i in 0..nr {
        if !fit.region_used[i] {
            continue;
        }
        active.push(i);
        let ratio_part = n
            * (est.a[i] / sb - est.c[i] / sd - sa * est.b[i] / (sb * sb)
                + sc * est.d[i] / (sd * sd));
        let v_i = DVector::from_column_slice(&fit.v[i]);
        u[i] = ratio_part - bracket.dot(&v_i) + self_terms[i];
    }

    let u_bar = active.iter().map(|&i| u[i]).sum::<f64>() / active.len() as f64;
    let mut ss = KahanSum::new();
    for &i in &active {
        ss.add((u[i] - u_bar) * (u[i] - u_bar));
    }
    let sigma2_hat = ss.total() / (n * n);
    let half = 1.96 * sigma2_hat.sqrt();
    Ok(AteVariance {
        sigma2_hat,
        ci95: (est.gamma_hat - half, est.gamma_hat + half),
        u,
        q_boundary_count: q_boundary,
    })
}

/// Point estimate and variance in one call.
pub fn estimate_ate_full(table: &DesignTable, fit: &PropensityFit) -> Result<AteResult> {
    let est = estimate_ate(table, fit)?;
    let var = ate_variance(table, fit, &est)?;
    Ok(AteResult {
        intervention: est.intervention,
        delta: est.delta,
        gamma_hat: est.gamma_hat,
        sigma2_hat: var.sigma2_hat,
        ci95: var.ci95,
        a: est.a,
        b: est.b,
        c: est.c,
        d: est.d,
        u: var.u,
        n_treated_rows: est.n_treated_rows,
        n_control_rows: est.n_control_rows,
        n_missing_outcome: est.n_missing_outcome,
        q_boundary_count: var.q_boundary_count,
    })
}

/// The two standardized arm means from raw parts; exposed for the
/// weight-scale invariance property (both ratios are invariant to a common
/// rescaling of the weights).
pub(crate) fn gamma_from_weights(
    outcomes: &[f64],
    treated: &[bool],
    weights: &[f64],
) -> Option<f64> {
    let mut ta = KahanSum::new();
    let mut tb = KahanSum::new();
    let mut ca = KahanSum::new();
    let mut cb = KahanSum::new();
    for ((d, &t), &w) in outcomes.iter().zip(treated).zip(weights) {
        if t {
            ta.add(d * w);
            tb.add(w);
        } else {
            ca.add(d * w);
            cb.add(w);
        }
    }
    if tb.total() <= 0.0 || cb.total() <= 0.0 {
        return None;
    }
    Some(ta.total() / tb.total() - ca.total() / cb.total())
}
