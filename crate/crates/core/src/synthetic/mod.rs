//! Ground-truth scenario generation for estimator validation.
//!
//! A scenario draws per-region epidemics from the survival-convolution
//! model, assigns intervention times by a discrete-time logistic hazard in
//! observed covariates, and injects a known effect into the outcome series.
//! Decisions happen on spaced tick days, so for any window size smaller
//! than the spacing the grouped treatment indicator of the design stage has
//! exactly the logistic propensity the estimator fits: with every violation
//! switch off, the generated data satisfy the estimator's identification
//! assumptions by construction.

mod generate;
mod study;

pub use generate::{generate, ScenarioTruth};
pub use study::{coverage_study, hte_group_study, CoverageStudy, HteGroupStudy};

use serde::{Deserialize, Serialize};

use crate::design::DesignOptions;
use crate::error::{Error, Result};

/// Full description of a synthetic world; deserializable from a TOML file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_regions: usize,
    pub horizon: usize,
    pub intervention_name: String,
    /// Exponential infectious-survival hazard per day.
    pub survival_rate: f64,
    /// Standard deviation of iid day-level noise on the reproduction-number
    /// series, mimicking estimation error in the outcome measure.
    pub rt_noise_sd: f64,
    pub serial_mean: f64,
    pub serial_sd: f64,
    pub rate: RateGenSpec,
    pub covariates: Vec<CovariateGenSpec>,
    pub assignment: AssignmentSpec,
    pub effect: EffectSpec,
    pub violations: ViolationSwitches,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n_regions: 40,
            horizon: 120,
            intervention_name: "npi".into(),
            survival_rate: 0.1,
            rt_noise_sd: 0.0,
            serial_mean: 4.7,
            serial_sd: 2.9,
            rate: RateGenSpec::default(),
            covariates: vec![CovariateGenSpec {
                name: "x1".into(),
                kind: CovariateKind::Normal,
                rate_loading: 0.25,
                assignment_coef: 0.3,
                effect_coef: 0.0,
            }],
            assignment: AssignmentSpec::default(),
            effect: EffectSpec::default(),
            violations: ViolationSwitches::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_regions < 2 {
            return Err(Error::InvalidInput("scenario needs at least 2 regions".into()));
        }
        if self.horizon < 40 {
            return Err(Error::InvalidInput("scenario horizon must be at least 40 days".into()));
        }
        let a = &self.assignment;
        if a.decision_spacing < 1
            || a.first_decision_day < 8
            || a.last_decision_day < a.first_decision_day
            || a.last_decision_day >= self.horizon as i64
        {
            return Err(Error::InvalidInput(
                "no assignment decisions possible: check decision days against the horizon".into(),
            ));
        }
        if self.rate.value_lo <= 0.0 || self.rate.value_hi < self.rate.value_lo {
            return Err(Error::InvalidInput("rate value range is empty".into()));
        }
        if self.rate.t0_min < 0 || self.rate.t0_max < self.rate.t0_min {
            return Err(Error::InvalidInput("t0 range is empty".into()));
        }
        Ok(())
    }

    /// True hazard-model covariates: the trailing-week mean of `rt` (when
    /// its coefficient is nonzero) plus every covariate entering the
    /// hazard. Fitting exactly these reproduces the generator's model.
    pub fn analysis_design_options(&self) -> DesignOptions {
        let mut h_names = Vec::new();
        if self.assignment.rt_week_coef != 0.0 {
            h_names.push("rt".to_string());
        }
        let x_names = self
            .covariates
            .iter()
            .filter(|c| c.assignment_coef != 0.0)
            .map(|c| c.name.clone())
            .collect();
        DesignOptions { h_names, x_names, ..DesignOptions::default() }
    }

    /// Region-level effect for given covariate draws.
    pub(crate) fn region_effect(&self, draws: &[(String, f64)]) -> f64 {
        let mut g = self.effect.base;
        for c in &self.covariates {
            if c.effect_coef != 0.0 {
                if let Some((_, v)) = draws.iter().find(|(n, _)| n == &c.name) {
                    g += c.effect_coef * v;
                }
            }
        }
        g
    }
}

/// Random piecewise-linear infection rate: knot values drawn uniformly and
/// damped by a geometric decline so epidemics trend downward on average.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateGenSpec {
    pub knot_spacing: i64,
    pub value_lo: f64,
    pub value_hi: f64,
    /// Geometric per-knot decline multiplier.
    pub decline: f64,
    /// Clamps for post-loading knot values.
    pub value_floor: f64,
    pub value_cap: f64,
    pub t0_min: i64,
    pub t0_max: i64,
}

impl Default for RateGenSpec {
    fn default() -> Self {
        Self {
            knot_spacing: 30,
            value_lo: 0.12,
            value_hi: 0.17,
            decline: 0.92,
            value_floor: 0.10,
            value_cap: 0.60,
            t0_min: 3,
            t0_max: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateGenSpec {
    pub name: String,
    #[serde(default)]
    pub kind: CovariateKind,
    /// Multiplies the log infection rate (confounding channel).
    #[serde(default)]
    pub rate_loading: f64,
    /// Coefficient in the assignment hazard.
    #[serde(default)]
    pub assignment_coef: f64,
    /// Moderating contribution to the injected effect.
    #[serde(default)]
    pub effect_coef: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    #[default]
    Normal,
    Binary {
        p: f64,
    },
}

/// Discrete-time logistic assignment hazard evaluated on tick days.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignmentSpec {
    pub intercept: f64,
    /// Coefficient on the trailing-week mean reproduction number.
    pub rt_week_coef: f64,
    pub first_decision_day: i64,
    pub decision_spacing: i64,
    pub last_decision_day: i64,
}

impl Default for AssignmentSpec {
    fn default() -> Self {
        Self {
            intercept: -2.2,
            rt_week_coef: 0.0,
            first_decision_day: 28,
            decision_spacing: 5,
            last_decision_day: 98,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectSpec {
    pub scale: EffectScale,
    /// Additive change injected per region (plus moderator contributions).
    pub base: f64,
}

impl Default for EffectSpec {
    fn default() -> Self {
        Self { scale: EffectScale::Rt, base: 0.0 }
    }
}

/// Where the effect is injected: directly on the reproduction-number series
/// (the primary validation path, since the estimand is defined on `R_t`
/// changes) or on the infection rate with re-simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectScale {
    Rt,
    Rate,
}

/// Deliberate assumption violations, all off by default.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViolationSwitches {
    /// An unobserved draw enters both the hazard and the rate trajectory.
    pub confounding_leak: bool,
    pub leak_assignment_coef: f64,
    pub leak_rate_loading: f64,
    /// The injected effect starts `delay_days` later than assumed.
    pub delayed_effect: bool,
    pub delay_days: i64,
    /// Every region absorbs part of the average treated effect as the
    /// treated fraction grows.
    pub interference: bool,
    pub interference_strength: f64,
}

impl Default for ViolationSwitches {
    fn default() -> Self {
        Self {
            confounding_leak: false,
            leak_assignment_coef: 1.2,
            leak_rate_loading: 0.5,
            delayed_effect: false,
            delay_days: 3,
            interference: false,
            interference_strength: 0.5,
        }
    }
}
