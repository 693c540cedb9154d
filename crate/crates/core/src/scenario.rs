//! Initial-value sets with common deposits and a grid of loan-to-deposit
//! ratios, sweeps over them, and behaviour checks of the resulting paths.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::integrator::{integrate, IntegratorConfig, Termination, Trajectory};
use crate::model::{BankModel, BankState, ModelError, RateSet, Region};
use crate::regulation::{reserve_series, RegulationParams, ReserveReport};

/// Correlation threshold for the demand-slope check.
pub const DEFAULT_THETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario set: {0}")]
    InvalidSet(String),
    #[error("{0} increments have zero variance")]
    ZeroVariance(&'static str),
    #[error("need at least 3 samples for a diagnosis, got {0}")]
    TooFewSamples(usize),
    #[error("no trajectory to diagnose")]
    NoTrajectory,
    #[error("result sets do not share labels (first mismatch: {0})")]
    LabelMismatch(String),
}

/// `count` evenly spaced values from `start` to `end` inclusive, snapped to
/// 12 decimals so that decimal grids land on the nearest doubles.
pub fn ratio_grid(start: f64, end: f64, count: usize) -> Vec<f64> {
    let snap = |x: f64| (x * 1e12).round() / 1e12;
    match count {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n)
            .map(|i| snap(start + (end - start) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// 0.2, 0.4, ..., 2.0
pub fn default_ratio_grid() -> Vec<f64> {
    ratio_grid(0.2, 2.0, 10)
}

/// A, B, ..., Z, AA, AB, ...
pub fn label_for(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        n -= 1;
        out.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub name: String,
    pub d0: f64,
    pub ratios: Vec<f64>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub ratio: f64,
    pub initial: BankState,
}

impl ScenarioSet {
    pub fn build(name: &str, d0: f64, ratios: &[f64]) -> Result<Self, ScenarioError> {
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(ScenarioError::InvalidSet(format!(
                "D0 = {d0} must be positive"
            )));
        }
        if ratios.is_empty() {
            return Err(ScenarioError::InvalidSet("ratio list is empty".into()));
        }
        if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(ScenarioError::InvalidSet("ratios must be positive".into()));
        }
        if ratios.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ScenarioError::InvalidSet(
                "ratios must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            name: name.to_string(),
            d0,
            ratios: ratios.to_vec(),
            labels: (0..ratios.len()).map(label_for).collect(),
        })
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        self.labels
            .iter()
            .zip(&self.ratios)
            .map(|(label, &ratio)| Scenario {
                label: label.clone(),
                ratio,
                initial: BankState::new(0.0, self.d0, ratio * self.d0),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Valid => "valid",
            Verdict::Invalid => "invalid",
        })
    }
}

/// Whether loans fall as the loan rate rises and deposits rise with the
/// deposit rate, judged by correlating per-step increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorDiagnosis {
    pub loan_corr: f64,
    pub deposit_corr: f64,
    pub loan_ok: bool,
    pub deposit_ok: bool,
    pub verdict: Verdict,
}

fn increments(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = values.collect();
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

fn has_zero_variance(x: &[f64]) -> bool {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    ss <= (f64::EPSILON * scale).powi(2) * n
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

pub fn diagnose_behavior(
    trajectory: &Trajectory,
    rates: &RateSet,
    theta: f64,
) -> Result<BehaviorDiagnosis, ScenarioError> {
    let samples = &trajectory.samples;
    if samples.len() < 3 {
        return Err(ScenarioError::TooFewSamples(samples.len()));
    }
    let d_loans = increments(samples.iter().map(|s| s.loans));
    let d_deposits = increments(samples.iter().map(|s| s.deposits));
    let d_loan_rate = increments(samples.iter().map(|s| rates.loan.value(s.t)));
    let d_deposit_rate = increments(samples.iter().map(|s| rates.deposit.value(s.t)));
    for (name, series) in [
        ("loan", &d_loans),
        ("deposit", &d_deposits),
        ("loan-rate", &d_loan_rate),
        ("deposit-rate", &d_deposit_rate),
    ] {
        if has_zero_variance(series) {
            return Err(ScenarioError::ZeroVariance(name));
        }
    }
    let loan_corr = pearson(&d_loans, &d_loan_rate);
    let deposit_corr = pearson(&d_deposits, &d_deposit_rate);
    let loan_ok = loan_corr < -theta;
    let deposit_ok = deposit_corr > theta;
    Ok(BehaviorDiagnosis {
        loan_corr,
        deposit_corr,
        loan_ok,
        deposit_ok,
        verdict: if loan_ok && deposit_ok {
            Verdict::Valid
        } else {
            Verdict::Invalid
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub label: String,
    pub ratio: f64,
    pub initial: BankState,
    /// Region of the initial point at t = 0.
    pub region: Result<Region, ModelError>,
    pub trajectory: Option<Trajectory>,
    pub report: Option<ReserveReport>,
    pub diagnosis: Result<BehaviorDiagnosis, ScenarioError>,
    /// Integration or reserve failure that cut the scenario short.
    pub error: Option<String>,
}

impl ScenarioResult {
    pub fn verdict(&self) -> Verdict {
        match &self.diagnosis {
            Ok(d) => d.verdict,
            Err(_) => Verdict::Invalid,
        }
    }

    pub fn termination(&self) -> Option<Termination> {
        self.trajectory.as_ref().map(|t| t.termination)
    }

    /// True when the run did not reach its horizon.
    pub fn is_runtime_failure(&self) -> bool {
        self.error.is_some() || self.termination().is_none_or(|t| t.is_runtime_failure())
    }

    pub fn initial_ldr(&self) -> f64 {
        self.initial.loans / self.initial.deposits
    }
}

pub fn run_scenario(
    model: &BankModel,
    reg: &RegulationParams,
    scenario: &Scenario,
    config: &IntegratorConfig,
    theta: f64,
) -> ScenarioResult {
    let region = model.classify_region(&scenario.initial);
    let mut result = ScenarioResult {
        label: scenario.label.clone(),
        ratio: scenario.ratio,
        initial: scenario.initial,
        region,
        trajectory: None,
        report: None,
        diagnosis: Err(ScenarioError::NoTrajectory),
        error: None,
    };
    match integrate(model, scenario.initial, config) {
        Ok(trajectory) => {
            match reserve_series(&model.params, reg, &trajectory) {
                Ok(report) => result.report = Some(report),
                Err(e) => result.error = Some(e.to_string()),
            }
            result.diagnosis = diagnose_behavior(&trajectory, &model.rates, theta);
            result.trajectory = Some(trajectory);
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

/// Runs every scenario of `set` in parallel; results keep the set's order.
pub fn run_set(
    model: &BankModel,
    reg: &RegulationParams,
    set: &ScenarioSet,
    config: &IntegratorConfig,
    theta: f64,
) -> Vec<ScenarioResult> {
    set.scenarios()
        .par_iter()
        .map(|s| run_scenario(model, reg, s, config, theta))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub initial_ldr_a: f64,
    pub initial_ldr_b: f64,
    pub integrated_gwm_a: Option<f64>,
    pub integrated_gwm_b: Option<f64>,
    /// `integrated_gwm_b - integrated_gwm_a`
    pub difference: Option<f64>,
    pub lambda_range_a: Option<(f64, f64)>,
    pub lambda_range_b: Option<(f64, f64)>,
}

pub fn compare_sets(
    a: &[ScenarioResult],
    b: &[ScenarioResult],
) -> Result<Vec<ComparisonRow>, ScenarioError> {
    let labels_a: BTreeSet<&str> = a.iter().map(|r| r.label.as_str()).collect();
    let labels_b: BTreeSet<&str> = b.iter().map(|r| r.label.as_str()).collect();
    if let Some(odd) = labels_a.symmetric_difference(&labels_b).next() {
        return Err(ScenarioError::LabelMismatch(odd.to_string()));
    }
    Ok(a.iter()
        .map(|ra| {
            let rb = b.iter().find(|r| r.label == ra.label).unwrap();
            let gwm_a = ra.report.as_ref().map(|r| r.integrated_gwm);
            let gwm_b = rb.report.as_ref().map(|r| r.integrated_gwm);
            ComparisonRow {
                label: ra.label.clone(),
                initial_ldr_a: ra.initial_ldr(),
                initial_ldr_b: rb.initial_ldr(),
                integrated_gwm_a: gwm_a,
                integrated_gwm_b: gwm_b,
                difference: gwm_a.zip(gwm_b).map(|(x, y)| y - x),
                lambda_range_a: ra.report.as_ref().map(|r| r.lambda_range()),
                lambda_range_b: rb.report.as_ref().map(|r| r.lambda_range()),
            }
        })
        .collect())
}
