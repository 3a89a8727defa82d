//! Scenario realization: epidemics, covariates, assignment, effect.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{CovariateKind, EffectScale, ScenarioSpec};
use crate::design::{pre_window_mean, RegionRecord};
use crate::epi_model::{
    reproduction_number, simulate_cases, simulate_trajectory, RateFunction, RtSeries,
    SerialIntervalPmf, SurvivalSpec,
};
use crate::error::Result;
use crate::util::{expit, splitmix64};

/// Everything needed to recompute or verify a generated world.
#[derive(Clone, Debug, Serialize)]
pub struct ScenarioTruth {
    pub intervention: String,
    pub effect_scale: EffectScale,
    pub effect_base: f64,
    /// Days after implementation before the effect appears in the outcome
    /// series (1 unless the delayed-effect violation is on).
    pub effect_activation_lag: i64,
    pub region_ids: Vec<String>,
    pub region_effects: Vec<f64>,
    pub intervention_days: Vec<Option<i64>>,
    pub t0_offsets: Vec<i64>,
    pub rate_knot_days: Vec<Vec<i64>>,
    pub rate_knot_values: Vec<Vec<f64>>,
    /// Hazard coefficients by name (`(intercept)`, `rt`, covariates).
    pub hazard_coefficients: BTreeMap<String, f64>,
    /// Per region: (decision day, true propensity) at every decision taken
    /// while still at risk.
    pub assignment_probs: Vec<Vec<(i64, f64)>>,
    /// Unobserved confounder draws when the leak violation is on.
    pub unobserved: Option<Vec<f64>>,
}

/// Generate one world. Reproducible: per-region RNG streams are derived
/// from the seed, so output is byte-identical across runs and independent
/// of iteration order.
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<RegionRecord>, ScenarioTruth)> {
    spec.validate()?;
    let survival = SurvivalSpec::exponential(spec.survival_rate)?;
    let serial = SerialIntervalPmf::discretized_gamma(spec.serial_mean, spec.serial_sd)?;
    let horizon = spec.horizon;
    let n = spec.n_regions;

    let mut records = Vec::with_capacity(n);
    let mut truth = ScenarioTruth {
        intervention: spec.intervention_name.clone(),
        effect_scale: spec.effect.scale,
        effect_base: spec.effect.base,
        effect_activation_lag: if spec.violations.delayed_effect {
            1 + spec.violations.delay_days
        } else {
            1
        },
        region_ids: Vec::new(),
        region_effects: Vec::new(),
        intervention_days: Vec::new(),
        t0_offsets: Vec::new(),
        rate_knot_days: Vec::new(),
        rate_knot_values: Vec::new(),
        hazard_coefficients: hazard_coefficients(spec),
        assignment_probs: Vec::new(),
        unobserved: if spec.violations.confounding_leak { Some(Vec::new()) } else { None },
    };

    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ (i as u64 + 1)));
        let region_id = format!("s{i:03}");

        // Covariates.
        let mut draws: Vec<(String, f64)> = Vec::new();
        for c in &spec.covariates {
            let v = match c.kind {
                CovariateKind::Normal => {
                    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                }
                CovariateKind::Binary { p } => {
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            draws.push((c.name.clone(), v));
        }
        let leak = if spec.violations.confounding_leak {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        } else {
            0.0
        };

        // Infection rate: declining random knots scaled by covariate loads.
        let t0 = rng.random_range(spec.rate.t0_min..=spec.rate.t0_max);
        let mut knot_days = vec![-t0];
        let mut day = spec.rate.knot_spacing - t0;
        while day < horizon as i64 {
            knot_days.push(day);
            day += spec.rate.knot_spacing;
        }
        knot_days.push(horizon as i64);
        let mut log_load = 0.0;
        for (c, (_, v)) in spec.covariates.iter().zip(&draws) {
            log_load += c.rate_loading * v;
        }
        if spec.violations.confounding_leak {
            log_load += spec.violations.leak_rate_loading * leak;
        }
        let load = log_load.exp();
        let knot_values: Vec<f64> = (0..knot_days.len())
            .map(|k| {
                let raw = rng.random_range(spec.rate.value_lo..=spec.rate.value_hi);
                (raw * spec.rate.decline.powi(k as i32) * load)
                    .clamp(spec.rate.value_floor, spec.rate.value_cap)
            })
            .collect();
        let rate = RateFunction::new(knot_days.clone(), knot_values.clone())?;

        // Natural epidemic; the reproduction number is computed on the full
        // trajectory (seed phase included) so early observed days have a
        // defined denominator, then jittered like an estimated series.
        let cases = simulate_cases(1.0, t0, &rate, &survival, horizon)?;
        let noise: Vec<f64> = (0..horizon)
            .map(|_| {
                if spec.rt_noise_sd > 0.0 {
                    spec.rt_noise_sd
                        * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                } else {
                    0.0
                }
            })
            .collect();
        let natural_rt = add_rt_noise(observed_rt(t0, &rate, &survival, &serial, horizon), &noise);

        // Assignment walk over tick days. The trailing-week summary is
        // computed by the same helper the design stage uses, and only looks
        // at days before the decision, where injected and natural series
        // coincide.
        let natural_record = RegionRecord {
            region_id: region_id.clone(),
            rt: natural_rt.clone(),
            ..Default::default()
        };
        let mut t_i: Option<i64> = None;
        let mut probs: Vec<(i64, f64)> = Vec::new();
        let mut day = spec.assignment.first_decision_day;
        while day <= spec.assignment.last_decision_day {
            let Some(h) = pre_window_mean(&natural_record, "rt", day, 7, 3) else {
                day += spec.assignment.decision_spacing;
                continue;
            };
            let mut logit = spec.assignment.intercept + spec.assignment.rt_week_coef * h;
            for (c, (_, v)) in spec.covariates.iter().zip(&draws) {
                logit += c.assignment_coef * v;
            }
            if spec.violations.confounding_leak {
                logit += spec.violations.leak_assignment_coef * leak;
            }
            let p = expit(logit);
            probs.push((day, p));
            if rng.random::<f64>() < p {
                t_i = Some(day);
                break;
            }
            day += spec.assignment.decision_spacing;
        }

        // Effect injection.
        let g_i = spec.region_effect(&draws);
        let activation = truth.effect_activation_lag;
        let (observed_rt_series, observed_cases) = match spec.effect.scale {
            EffectScale::Rt => {
                let mut values: Vec<Option<f64>> = natural_rt.values().to_vec();
                if let Some(t) = t_i {
                    for (d, v) in values.iter_mut().enumerate() {
                        if (d as i64) >= t + activation {
                            if let Some(r) = v {
                                *r += g_i;
                            }
                        }
                    }
                }
                (RtSeries::new(values), cases.clone())
            }
            EffectScale::Rate => {
                if let Some(t) = t_i {
                    let bumped = bump_rate(&rate, t + activation - 1, g_i);
                    let cases2 = simulate_cases(1.0, t0, &bumped, &survival, horizon)?;
                    let rt2 =
                        add_rt_noise(observed_rt(t0, &bumped, &survival, &serial, horizon), &noise);
                    (rt2, cases2)
                } else {
                    (natural_rt.clone(), cases.clone())
                }
            }
        };

        let mut baseline = BTreeMap::new();
        for (name, v) in &draws {
            baseline.insert(name.clone(), Some(*v));
        }
        let mut series = BTreeMap::new();
        series.insert(
            "new_cases".to_string(),
            observed_cases.iter().map(|c| Some(*c)).collect::<Vec<_>>(),
        );
        let mut interventions = BTreeMap::new();
        interventions.insert(spec.intervention_name.clone(), t_i);

        records.push(RegionRecord {
            region_id: region_id.clone(),
            baseline,
            series,
            rt: observed_rt_series,
            interventions,
            first_case_date: None,
        });

        truth.region_ids.push(region_id);
        truth.region_effects.push(g_i);
        truth.intervention_days.push(t_i);
        truth.t0_offsets.push(t0);
        truth.rate_knot_days.push(knot_days);
        truth.rate_knot_values.push(knot_values);
        truth.assignment_probs.push(probs);
        if let Some(u) = truth.unobserved.as_mut() {
            u.push(leak);
        }
    }

    if spec.violations.interference {
        apply_interference(spec, &mut records, &truth);
    }

    Ok((records, truth))
}

fn hazard_coefficients(spec: &ScenarioSpec) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("(intercept)".to_string(), spec.assignment.intercept);
    if spec.assignment.rt_week_coef != 0.0 {
        m.insert("rt".to_string(), spec.assignment.rt_week_coef);
    }
    for c in &spec.covariates {
        if c.assignment_coef != 0.0 {
            m.insert(c.name.clone(), c.assignment_coef);
        }
    }
    m
}

/// Reproduction number on observed days, derived from the full trajectory.
fn observed_rt(
    t0: i64,
    rate: &RateFunction,
    survival: &SurvivalSpec,
    serial: &SerialIntervalPmf,
    horizon: usize,
) -> RtSeries {
    let whole = simulate_trajectory(1.0, t0, rate, survival, horizon);
    let rt_full = reproduction_number(&whole, serial);
    RtSeries::new(rt_full.values()[t0 as usize..].to_vec())
}

/// Day-level jitter on a reproduction-number series.
fn add_rt_noise(rt: RtSeries, noise: &[f64]) -> RtSeries {
    let values = rt
        .values()
        .iter()
        .enumerate()
        .map(|(d, v)| v.map(|r| r + noise[d]))
        .collect();
    RtSeries::new(values)
}

/// Additive bump of the rate strictly after `from_day`, preserving values up
/// to it (knots inserted at the boundary).
fn bump_rate(rate: &RateFunction, from_day: i64, bump: f64) -> RateFunction {
    let mut days: Vec<i64> = rate.knot_days().to_vec();
    for d in [from_day, from_day + 1] {
        if !days.contains(&d) {
            days.push(d);
        }
    }
    days.sort_unstable();
    let values: Vec<f64> = days
        .iter()
        .map(|&d| {
            let base = rate.value_at(d);
            if d > from_day {
                (base + bump).max(0.0)
            } else {
                base
            }
        })
        .collect();
    RateFunction::new(days, values).expect("bumped rate is valid")
}

/// Global spillover: every region's outcome series absorbs a share of the
/// average injected effect as the treated fraction grows.
fn apply_interference(spec: &ScenarioSpec, records: &mut [RegionRecord], truth: &ScenarioTruth) {
    let n = records.len() as f64;
    let g_mean =
        truth.region_effects.iter().sum::<f64>() / truth.region_effects.len().max(1) as f64;
    let strength = spec.violations.interference_strength;
    for record in records.iter_mut() {
        let mut values: Vec<Option<f64>> = record.rt.values().to_vec();
        for (d, v) in values.iter_mut().enumerate() {
            let treated_frac = truth
                .intervention_days
                .iter()
                .filter(|t| t.is_some_and(|t| t < d as i64))
                .count() as f64
                / n;
            if let Some(r) = v {
                *r += strength * g_mean * treated_frac;
            }
        }
        record.rt = RtSeries::new(values);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = ScenarioSpec::default();
        let (r1, t1) = generate(&spec).unwrap();
        let (r2, t2) = generate(&spec).unwrap();
        assert_eq!(t1.intervention_days, t2.intervention_days);
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.rt, b.rt);
            assert_eq!(a.baseline, b.baseline);
        }
        assert_eq!(t1.region_effects, t2.region_effects);
    }

    #[test]
    fn zero_effect_means_zero_truth() {
        let spec = ScenarioSpec::default();
        let (_, truth) = generate(&spec).unwrap();
        assert!(truth.region_effects.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn events_and_controls_both_exist() {
        let spec = ScenarioSpec::default();
        let (_, truth) = generate(&spec).unwrap();
        let events = truth.intervention_days.iter().filter(|t| t.is_some()).count();
        assert!(events >= 10, "only {events} events");
        assert!(events < spec.n_regions, "everyone treated");
        // All events on tick days.
        for t in truth.intervention_days.iter().flatten() {
            assert_eq!(
                (t - spec.assignment.first_decision_day) % spec.assignment.decision_spacing,
                0
            );
        }
    }

    #[test]
    fn rt_injection_shifts_only_after_implementation() {
        let mut spec = ScenarioSpec::default();
        spec.effect.base = -0.5;
        let (records, truth) = generate(&spec).unwrap();
        let mut base_spec = spec.clone();
        base_spec.effect.base = 0.0;
        let (base_records, base_truth) = generate(&base_spec).unwrap();
        assert_eq!(truth.intervention_days, base_truth.intervention_days);
        for ((rec, base), t) in records.iter().zip(&base_records).zip(&truth.intervention_days) {
            match t {
                None => assert_eq!(rec.rt, base.rt),
                Some(t) => {
                    for d in 0..rec.rt.len() as i64 {
                        let a = rec.rt.at(d);
                        let b = base.rt.at(d);
                        if d <= *t {
                            assert_eq!(a, b, "day {d} before activation");
                        } else {
                            let (a, b) = (a.unwrap(), b.unwrap());
                            assert!((a - (b - 0.5)).abs() < 1e-12, "day {d}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rate_scale_injection_changes_cases_too() {
        let mut spec = ScenarioSpec::default();
        spec.effect.scale = EffectScale::Rate;
        spec.effect.base = -0.05;
        let (records, truth) = generate(&spec).unwrap();
        let treated = truth.intervention_days.iter().position(|t| t.is_some()).unwrap();
        let t = truth.intervention_days[treated].unwrap();
        let mut base_spec = spec.clone();
        base_spec.effect.base = 0.0;
        let (base_records, _) = generate(&base_spec).unwrap();
        let after = (t + 10).min(records[treated].rt.len() as i64 - 1);
        let a = records[treated].series_value("new_cases", after).unwrap();
        let b = base_records[treated].series_value("new_cases", after).unwrap();
        assert!(a < b, "rate cut should reduce later incidence: {a} vs {b}");
    }
}
