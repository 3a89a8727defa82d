//! Square-root least-squares fit of the survival-convolution model.
//!
//! The fit searches an integer grid of outbreak start offsets `t0` and, for
//! each candidate, minimizes `sum_t (sqrt(obs_t) - sqrt(N_t))^2` over the
//! nonnegative knot values of the piecewise-linear infection rate with a
//! bound-respecting Levenberg–Marquardt solver (values parameterized as
//! squares) started from several points.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};

use super::{
    reproduction_number, simulate_trajectory, IncidenceSeries, RateFunction, RtSeries,
    SerialIntervalPmf, SurvivalSpec,
};
use crate::error::{Error, Result};

/// Seed magnitude at the outbreak start: one undetected case.
pub const SEED_COUNT: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Searched outbreak start offsets, in days before day 0.
    pub t0_search: RangeInclusive<i64>,
    /// Flat initial knot values tried per candidate (a warm start from the
    /// previous candidate is always added).
    pub starts: Vec<f64>,
    pub max_iterations: usize,
    /// Convergence when the relative loss improvement drops below this.
    pub rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { t0_search: 0..=30, starts: vec![0.05, 0.15, 0.35], max_iterations: 500, rel_tol: 1e-10 }
    }
}

/// Result of fitting the transmission model to one region.
#[derive(Clone, Debug)]
pub struct EpidemicFit {
    pub region_id: String,
    /// Days before day 0 of the first (undetected) case.
    pub t0_offset: i64,
    /// Fitted infection rate, including the knot at the outbreak start.
    pub rate: RateFunction,
    /// Model incidence on observed days `0..len`.
    pub fitted_n: Vec<f64>,
    /// Reproduction number on observed days, undefined entries flagged.
    pub rt: RtSeries,
    pub loss: f64,
    /// False when no candidate reached the convergence tolerance; the fit is
    /// still the best found, never silently discarded.
    pub converged: bool,
}

/// Fit outbreak start and knot values to an observed incidence series.
///
/// `knots` are knot days in observed-day coordinates (the outbreak-start
/// knot is added per candidate). Fails with a degenerate-fit error on an
/// all-zero series.
pub fn fit_epidemic(
    obs: &IncidenceSeries,
    knots: &[i64],
    survival: &SurvivalSpec,
    serial: &SerialIntervalPmf,
    opts: &FitOptions,
) -> Result<EpidemicFit> {
    if obs.total() <= 0.0 {
        return Err(Error::DegenerateFit(format!(
            "region `{}` has an all-zero incidence series",
            obs.region_id
        )));
    }
    if knots.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidInput("knot days must be strictly increasing".into()));
    }
    if opts.t0_search.is_empty() {
        return Err(Error::InvalidInput("t0 search range is empty".into()));
    }
    if *opts.t0_search.start() < 0 {
        return Err(Error::InvalidInput("t0 offsets are days before day 0 and must be >= 0".into()));
    }

    let horizon = obs.len();
    let sqrt_obs: Vec<f64> = obs.counts.iter().map(|c| c.sqrt()).collect();

    let mut best: Option<Candidate> = None;
    let mut warm: Option<Vec<f64>> = None;

    for t0 in opts.t0_search.clone() {
        let days = candidate_knot_days(knots, t0, horizon);
        if horizon < days.len() + 2 {
            return Err(Error::InvalidInput(format!(
                "series of length {horizon} cannot identify {} knots (need at least {})",
                days.len(),
                days.len() + 2
            )));
        }
        let problem = Problem { sqrt_obs: &sqrt_obs, knot_days: &days, t0, survival, horizon };

        let mut starts: Vec<Vec<f64>> = opts
            .starts
            .iter()
            .map(|v| vec![v.max(1e-6).sqrt(); days.len()])
            .collect();
        if let Some(w) = &warm {
            if w.len() == days.len() {
                starts.push(w.clone());
            }
        }

        let mut cand_best: Option<(Vec<f64>, f64, bool)> = None;
        for x0 in starts {
            let (x, loss, converged) = levenberg_marquardt(&problem, x0, opts);
            if cand_best.as_ref().map_or(true, |(_, l, _)| loss < *l) {
                cand_best = Some((x, loss, converged));
            }
        }
        let (x, loss, converged) = cand_best.expect("at least one start");
        warm = Some(x.clone());

        let replace = match &best {
            None => true,
            Some(b) => loss < b.loss || (loss == b.loss && t0.abs() < b.t0.abs()),
        };
        if replace {
            best = Some(Candidate { t0, x, loss, converged });
        }
    }

    let best = best.expect("nonempty t0 search");
    let days = candidate_knot_days(knots, best.t0, horizon);
    let values: Vec<f64> = best.x.iter().map(|x| x * x).collect();
    let rate = RateFunction::new(days, values)?;
    let full = simulate_trajectory(SEED_COUNT, best.t0, &rate, survival, horizon);
    let fitted_n = full[best.t0 as usize..].to_vec();
    let rt_full = reproduction_number(&full, serial);
    let rt = RtSeries::new(rt_full.values()[best.t0 as usize..].to_vec());

    Ok(EpidemicFit {
        region_id: obs.region_id.clone(),
        t0_offset: best.t0,
        rate,
        fitted_n,
        rt,
        loss: best.loss,
        converged: best.converged,
    })
}

struct Candidate {
    t0: i64,
    x: Vec<f64>,
    loss: f64,
    converged: bool,
}

/// Knot days for one `t0` candidate: the outbreak-start knot plus every
/// caller knot that lies after it.
fn candidate_knot_days(knots: &[i64], t0: i64, horizon: usize) -> Vec<i64> {
    let start = -t0;
    let mut days = vec![start];
    days.extend(knots.iter().copied().filter(|&d| d > start && d < horizon as i64 + 1));
    days
}

struct Problem<'a> {
    sqrt_obs: &'a [f64],
    knot_days: &'a [i64],
    t0: i64,
    survival: &'a SurvivalSpec,
    horizon: usize,
}

impl Problem<'_> {
    /// Residuals `sqrt(obs_t) - sqrt(N_t)` at parameters `x` (knot values
    /// are `x^2`).
    fn residuals(&self, x: &[f64]) -> DVector<f64> {
        let values: Vec<f64> = x.iter().map(|v| v * v).collect();
        let rate = RateFunction::from_parts_unchecked(self.knot_days.to_vec(), values);
        let full = simulate_trajectory(SEED_COUNT, self.t0, &rate, self.survival, self.horizon);
        let observed = &full[self.t0 as usize..];
        DVector::from_iterator(
            self.horizon,
            self.sqrt_obs.iter().zip(observed).map(|(o, n)| o - n.max(0.0).sqrt()),
        )
    }
}

/// Levenberg–Marquardt with a numerically differenced Jacobian. Returns the
/// parameters, the final loss, and whether the relative-improvement
/// tolerance was reached.
fn levenberg_marquardt(problem: &Problem<'_>, mut x: Vec<f64>, opts: &FitOptions) -> (Vec<f64>, f64, bool) {
    let p = x.len();
    let mut r = problem.residuals(&x);
    let mut loss = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..opts.max_iterations {
        if loss < 1e-24 {
            converged = true;
            break;
        }
        // Forward-difference Jacobian of the residual vector.
        let mut jac = DMatrix::zeros(r.len(), p);
        for j in 0..p {
            let h = 1e-6 * x[j].abs().max(1e-3);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = problem.residuals(&xp);
            for i in 0..r.len() {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() < 1e-16 {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda < 1e14 {
            let mut damped = jtj.clone();
            for j in 0..p {
                damped[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let x_new: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
            let r_new = problem.residuals(&x_new);
            let loss_new = r_new.norm_squared();
            if loss_new <= loss {
                let improvement = loss - loss_new;
                x = x_new;
                r = r_new;
                loss = loss_new;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if improvement < opts.rel_tol * loss.max(f64::MIN_POSITIVE) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        // Stalled (damping exhausted) or reached tolerance.
        if !accepted || converged {
            break;
        }
    }
    (x, loss, converged)
}
