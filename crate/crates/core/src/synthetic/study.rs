//! Replicated estimator studies on synthetic worlds.

use rayon::prelude::*;
use serde::Serialize;

use super::{generate, CovariateKind, EffectScale, ScenarioSpec};
use crate::causal::{estimate_ate_full, estimate_hte, Moderators};
use crate::design::build_design;
use crate::error::{Error, Result};
use crate::propensity::fit_propensity;
use crate::util::{mean, sample_variance, splitmix64};

/// Summary of a null-or-constant-effect coverage study.
#[derive(Clone, Debug, Serialize)]
pub struct CoverageStudy {
    pub replicates_requested: usize,
    pub replicates_ok: usize,
    pub failures: usize,
    pub gamma_true: f64,
    pub mean_gamma: f64,
    pub bias: f64,
    /// Monte Carlo standard error of the mean estimate.
    pub mc_se_mean: f64,
    pub empirical_variance: f64,
    pub mean_sigma2: f64,
    /// Fraction of replicates whose 95% interval covers the truth.
    pub coverage: f64,
    pub coverage_se: f64,
}

/// Run the full estimation pipeline (design, propensity, effect, interval)
/// once per replicate with independent seeds, against the scenario's true
/// effect. Replicate-level failures are counted and the study continues.
pub fn coverage_study(spec: &ScenarioSpec, replicates: usize, delta: i64) -> Result<CoverageStudy> {
    if replicates < 100 {
        return Err(Error::InvalidInput(format!(
            "coverage study needs at least 100 replicates, got {replicates}"
        )));
    }
    if spec.covariates.iter().any(|c| c.effect_coef != 0.0) {
        return Err(Error::InvalidInput(
            "coverage study expects a homogeneous effect; use the moderator study instead".into(),
        ));
    }
    if spec.effect.scale != EffectScale::Rt {
        return Err(Error::InvalidInput(
            "coverage study calibrates against the outcome-scale effect; use scale = \"rt\"".into(),
        ));
    }
    let gamma_true = spec.effect.base;
    let opts = spec.analysis_design_options();

    let outcomes: Vec<Option<(f64, f64, bool)>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rep_spec = spec.clone();
            rep_spec.seed = splitmix64(spec.seed ^ (rep as u64 + 1));
            let (records, _) = generate(&rep_spec).ok()?;
            let table = build_design(&records, &rep_spec.intervention_name, delta, &opts).ok()?;
            let fit = fit_propensity(&table).ok()?;
            let res = estimate_ate_full(&table, &fit).ok()?;
            let covered = res.ci95.0 <= gamma_true && gamma_true <= res.ci95.1;
            Some((res.gamma_hat, res.sigma2_hat, covered))
        })
        .collect();

    let ok: Vec<&(f64, f64, bool)> = outcomes.iter().flatten().collect();
    let failures = replicates - ok.len();
    if ok.len() < 2 {
        return Err(Error::InsufficientDesign(format!(
            "coverage study produced only {} usable replicates",
            ok.len()
        )));
    }
    let gammas: Vec<f64> = ok.iter().map(|o| o.0).collect();
    let sigmas: Vec<f64> = ok.iter().map(|o| o.1).collect();
    let covered = ok.iter().filter(|o| o.2).count() as f64;
    let n = gammas.len() as f64;
    let empirical_variance = sample_variance(&gammas);
    let coverage = covered / n;
    Ok(CoverageStudy {
        replicates_requested: replicates,
        replicates_ok: gammas.len(),
        failures,
        gamma_true,
        mean_gamma: mean(&gammas),
        bias: mean(&gammas) - gamma_true,
        mc_se_mean: (empirical_variance / n).sqrt(),
        empirical_variance,
        mean_sigma2: mean(&sigmas),
        coverage,
        coverage_se: (coverage * (1.0 - coverage) / n).sqrt(),
    })
}

/// Summary of a two-group moderated-effect study with indicator coding.
#[derive(Clone, Debug, Serialize)]
pub struct HteGroupStudy {
    pub replicates_requested: usize,
    pub replicates_ok: usize,
    pub failures: usize,
    /// True groupwise effects (group = 0, group = 1).
    pub theta_true: (f64, f64),
    pub mean_theta: (f64, f64),
    pub mc_se_mean: (f64, f64),
    /// Wald rejection rate of the zero null per coordinate at 5%.
    pub rejection_rate: (f64, f64),
}

/// Replicated moderated-effect estimation with a binary group moderator in
/// indicator coding, so the coefficients are the groupwise effects.
pub fn hte_group_study(
    spec: &ScenarioSpec,
    replicates: usize,
    delta: i64,
    group_covariate: &str,
) -> Result<HteGroupStudy> {
    if replicates < 100 {
        return Err(Error::InvalidInput(format!(
            "moderator study needs at least 100 replicates, got {replicates}"
        )));
    }
    let group = spec
        .covariates
        .iter()
        .find(|c| c.name == group_covariate)
        .ok_or_else(|| Error::InvalidInput(format!("unknown moderator `{group_covariate}`")))?;
    if !matches!(group.kind, CovariateKind::Binary { .. }) {
        return Err(Error::InvalidInput(format!(
            "moderator `{group_covariate}` must be binary for the group study"
        )));
    }
    let theta_true = (spec.effect.base, spec.effect.base + group.effect_coef);
    let opts = spec.analysis_design_options();

    let outcomes: Vec<Option<([f64; 2], [bool; 2])>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rep_spec = spec.clone();
            rep_spec.seed = splitmix64(spec.seed ^ (rep as u64 + 1));
            let (records, _) = generate(&rep_spec).ok()?;
            let table = build_design(&records, &rep_spec.intervention_name, delta, &opts).ok()?;
            let fit = fit_propensity(&table).ok()?;
            let moderators = Moderators {
                names: vec![format!("{group_covariate}=0"), format!("{group_covariate}=1")],
                values: table
                    .region_ids
                    .iter()
                    .map(|id| {
                        let rec = records.iter().find(|r| &r.region_id == id)?;
                        let g = rec.baseline.get(group_covariate).copied().flatten()?;
                        Some(vec![1.0 - g, g])
                    })
                    .collect::<Option<Vec<_>>>()?,
            };
            let res = estimate_hte(&table, &fit, &moderators).ok()?;
            Some((
                [res.theta[0], res.theta[1]],
                [res.rejects(0, 0.05), res.rejects(1, 0.05)],
            ))
        })
        .collect();

    let ok: Vec<&([f64; 2], [bool; 2])> = outcomes.iter().flatten().collect();
    let failures = replicates - ok.len();
    if ok.len() < 2 {
        return Err(Error::InsufficientDesign(format!(
            "moderator study produced only {} usable replicates",
            ok.len()
        )));
    }
    let t0: Vec<f64> = ok.iter().map(|o| o.0[0]).collect();
    let t1: Vec<f64> = ok.iter().map(|o| o.0[1]).collect();
    let n = ok.len() as f64;
    Ok(HteGroupStudy {
        replicates_requested: replicates,
        replicates_ok: ok.len(),
        failures,
        theta_true,
        mean_theta: (mean(&t0), mean(&t1)),
        mc_se_mean: (
            (sample_variance(&t0) / n).sqrt(),
            (sample_variance(&t1) / n).sqrt(),
        ),
        rejection_rate: (
            ok.iter().filter(|o| o.1[0]).count() as f64 / n,
            ok.iter().filter(|o| o.1[1]).count() as f64 / n,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_replicates_rejected() {
        let spec = ScenarioSpec::default();
        assert!(coverage_study(&spec, 50, 3).is_err());
    }

    #[test]
    fn heterogeneous_effect_rejected_by_coverage_study() {
        let mut spec = ScenarioSpec::default();
        spec.covariates[0].effect_coef = -0.2;
        assert!(coverage_study(&spec, 100, 3).is_err());
    }

    #[test]
    fn small_null_study_runs_and_is_roughly_centered() {
        let mut spec = ScenarioSpec::default();
        spec.seed = 42;
        let study = coverage_study(&spec, 100, 3).unwrap();
        assert!(study.failures <= 5, "failures = {}", study.failures);
        assert!(
            study.bias.abs() < 4.0 * study.mc_se_mean,
            "bias {} vs mc se {}",
            study.bias,
            study.mc_se_mean
        );
        assert!(study.coverage > 0.85, "coverage = {}", study.coverage);
    }

    #[test]
    fn consistency_between_replicate_counts() {
        let mut spec = ScenarioSpec::default();
        spec.seed = 9;
        let a = coverage_study(&spec, 100, 3).unwrap();
        let b = coverage_study(&spec, 200, 3).unwrap();
        // Coverage estimates agree within two binomial standard errors.
        let se = (a.coverage_se.powi(2) + b.coverage_se.powi(2)).sqrt();
        assert!(
            (a.coverage - b.coverage).abs() <= 2.0 * se.max(1e-6),
            "{} vs {}",
            a.coverage,
            b.coverage
        );
    }
}

