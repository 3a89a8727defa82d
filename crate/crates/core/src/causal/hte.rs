//! Moderated intervention effects (heterogeneity of treatment effect).

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::DesignTable;
use crate::error::{Error, Result};
use crate::propensity::PropensityFit;
use crate::util::KahanSum;

/// Region-level moderator matrix; the first column is conventionally an
/// intercept (or a full indicator coding).
#[derive(Clone, Debug)]
pub struct Moderators {
    pub names: Vec<String>,
    /// One vector per region, aligned with the table's region order.
    pub values: Vec<Vec<f64>>,
}

impl Moderators {
    /// A lone intercept for every region: the moderated model then collapses
    /// to a scalar effect.
    pub fn intercept_only(n_regions: usize) -> Self {
        Self { names: vec!["(intercept)".into()], values: vec![vec![1.0]; n_regions] }
    }
}

#[derive(Clone, Debug)]
pub struct HteResult {
    pub intervention: String,
    pub delta: i64,
    pub z_names: Vec<String>,
    pub theta: Vec<f64>,
    /// Sandwich covariance of the coefficient estimate.
    pub psi: DMatrix<f64>,
    pub wald_z: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Per-region influence vectors (zero outside the fit).
    pub w: Vec<Vec<f64>>,
}

impl HteResult {
    pub fn std_err(&self, l: usize) -> f64 {
        self.psi[(l, l)].sqrt()
    }

    /// Two-sided Wald rejection at level alpha for coordinate `l`.
    pub fn rejects(&self, l: usize, alpha: f64) -> bool {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        self.wald_z[l] > normal.inverse_cdf(1.0 - alpha / 2.0)
    }
}

/// Solve the moderated-effect estimating equation
///
/// ```text
/// sum_i Z_i [ sum_{j in S(i)} { d_ij (delta_ij/q_ij - (1-delta_ij)/(1-q_ij)) - theta' Z_i } ] = 0
/// ```
///
/// i.e. the linear system `[sum_i m_i Z_i Z_i'] theta = sum_i Z_i s_i`, with
/// `m_i` the region's usable row count and `s_i` its signed weighted outcome
/// sum. The covariance is the sandwich `S1^-1 S2 S1^-1` where `S2` stacks
/// per-region influence vectors that carry the propensity-estimation
/// correction through `V_i`.
pub fn estimate_hte(
    table: &DesignTable,
    fit: &PropensityFit,
    moderators: &Moderators,
) -> Result<HteResult> {
    if !fit.converged {
        return Err(Error::InvalidInput("HTE requires a converged propensity fit".into()));
    }
    let nr = table.n_regions();
    if moderators.values.len() != nr {
        return Err(Error::InvalidInput(format!(
            "moderator rows ({}) must match regions ({nr})",
            moderators.values.len()
        )));
    }
    let pz = moderators.names.len();
    if pz == 0 || moderators.values.iter().any(|v| v.len() != pz) {
        return Err(Error::InvalidInput("moderator arity mismatch".into()));
    }
    let px = fit.beta.len();
    let n = fit.n_regions as f64;

    // Per-region usable row counts and signed weighted outcome sums.
    let mut row_count = vec![0usize; nr];
    let mut signed_sum = vec![KahanSum::new(); nr];
    // Correction bracket G (pz x px): n^-1 sum_rows Z_i x' d (delta(1-q)/q + (1-delta)q/(1-q)).
    let mut g = DMatrix::<f64>::zeros(pz, px);
    for (idx, row) in table.active_rows() {
        let (Some(q), Some(outcome)) = (fit.q[idx], row.outcome) else { continue };
        row_count[row.region] += 1;
        let w_signed =
            if row.treated() { 1.0 / q } else { -1.0 / (1.0 - q) };
        signed_sum[row.region].add(outcome * w_signed);
        let w_abs = if row.treated() { (1.0 - q) / q } else { q / (1.0 - q) };
        let z = &moderators.values[row.region];
        for a in 0..pz {
            for bidx in 0..px {
                g[(a, bidx)] += z[a] * row.covariates[bidx] * outcome * w_abs;
            }
        }
    }
    g /= n;

    // Sigma1 and the right-hand side.
    let mut sigma1 = DMatrix::<f64>::zeros(pz, pz);
    let mut rhs = DVector::<f64>::zeros(pz);
    for i in 0..nr {
        if row_count[i] == 0 {
            continue;
        }
        let z = DVector::from_column_slice(&moderators.values[i]);
        sigma1 += &z * z.transpose() * row_count[i] as f64;
        rhs += &z * signed_sum[i].total();
    }

    let Some(chol) = sigma1.clone().cholesky() else {
        let name = weakest_direction(&sigma1, &moderators.names);
        return Err(Error::CollinearModerators(format!(
            "moderator design matrix is singular (involving `{name}`)"
        )));
    };
    let theta = chol.solve(&rhs);

    // Influence vectors and Sigma2.
    let mut w_vectors = vec![vec![0.0; pz]; nr];
    let mut sigma2 = DMatrix::<f64>::zeros(pz, pz);
    for i in 0..nr {
        if !fit.region_used[i] {
            continue;
        }
        let z = DVector::from_column_slice(&moderators.values[i]);
        let fitted = theta.dot(&z);
        let base = &z * (signed_sum[i].total() - row_count[i] as f64 * fitted);
        let v_i = DVector::from_column_slice(&fit.v[i]);
        let w_i = base - &g * v_i;
        sigma2 += &w_i * w_i.transpose();
        w_vectors[i] = w_i.iter().copied().collect();
    }

    let sigma1_inv = chol.inverse();
    let psi = &sigma1_inv * sigma2 * &sigma1_inv;

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut wald_z = Vec::with_capacity(pz);
    let mut p_values = Vec::with_capacity(pz);
    for l in 0..pz {
        let se = psi[(l, l)].max(0.0).sqrt();
        let zstat = if se > 0.0 { theta[l].abs() / se } else { f64::INFINITY };
        wald_z.push(zstat);
        let p = if zstat.is_finite() { 2.0 * (1.0 - normal.cdf(zstat)) } else { 0.0 };
        p_values.push(p.clamp(0.0, 1.0));
    }

    Ok(HteResult {
        intervention: table.intervention.clone(),
        delta: table.delta,
        z_names: moderators.names.clone(),
        theta: theta.iter().copied().collect(),
        psi,
        wald_z,
        p_values,
        w: w_vectors,
    })
}

/// Name the moderator with the largest weight in the null direction of a
/// singular design matrix.
fn weakest_direction(m: &DMatrix<f64>, names: &[String]) -> String {
    let svd = m.clone().svd(true, true);
    if let Some(v_t) = svd.v_t {
        let last = v_t.nrows() - 1;
        let row = v_t.row(last);
        let mut best = 0usize;
        for j in 0..row.len() {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        return names.get(best).cloned().unwrap_or_else(|| "?".into());
    }
    "?".into()
}
