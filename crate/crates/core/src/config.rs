//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [params]            kappa1 kappa2 delta gamma r_b r_r2 k b g
//! [rates.deposit]     mean sin_amp cos_amp freq
//! [rates.loan]        (same keys)
//! [rates.interbank]   (same keys)
//! [regulation]        lambda_l lambda_u gamma_l gamma_u car_below_min
//! [integrator]        t_end dt singular_eps event_policy max_state
//! [scenario]          d0 ratios | ratio_grid, theta
//! ```
//!
//! Lists are comma separated, optionally bracketed: `d0 = [0.7, 6, 10]`.
//! `ratio_grid = start, end, count` is an alternative to an explicit
//! `ratios` list. Missing keys keep their defaults; unknown sections and keys
//! are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::integrator::{EventPolicy, IntegratorConfig};
use crate::model::{BankModel, ModelParams, RateSet, SinusoidalRate};
use crate::regulation::RegulationParams;
use crate::scenario::{default_ratio_grid, ratio_grid, ScenarioSet, DEFAULT_THETA};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Common initial deposits, one set per entry.
    pub d0: Vec<f64>,
    pub ratios: Vec<f64>,
    pub theta: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            d0: vec![0.7, 6.0, 10.0],
            ratios: default_ratio_grid(),
            theta: DEFAULT_THETA,
        }
    }
}

impl ScenarioConfig {
    /// Sets named `set1`, `set2`, ... in `d0` order.
    pub fn sets(&self) -> Result<Vec<ScenarioSet>, ConfigError> {
        self.d0
            .iter()
            .enumerate()
            .map(|(i, &d0)| {
                ScenarioSet::build(&format!("set{}", i + 1), d0, &self.ratios)
                    .map_err(|e| ConfigError::Validation(e.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub params: ModelParams,
    pub rates: RateSet,
    pub regulation: RegulationParams,
    pub integrator: IntegratorConfig,
    pub scenario: ScenarioConfig,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Params,
    Rate(RateSlot),
    Regulation,
    Integrator,
    Scenario,
}

#[derive(Clone, Copy, PartialEq)]
enum RateSlot {
    Deposit,
    Loan,
    Interbank,
}

fn parse_f64(value: &str, line: usize) -> Result<f64, ConfigError> {
    value.trim().parse::<f64>().map_err(|_| ConfigError::Parse {
        line,
        message: format!("`{}` is not a number", value.trim()),
    })
}

fn parse_list(value: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    let inner = value.trim();
    let inner = inner
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .unwrap_or(inner);
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|v| parse_f64(v, line)).collect()
}

fn parse_bool(value: &str, line: usize) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(ConfigError::Parse {
            line,
            message: format!("`{other}` is not a boolean"),
        }),
    }
}

impl RunConfig {
    pub fn model(&self) -> BankModel {
        BankModel::new(self.params, self.rates).with_singular_eps(self.integrator.singular_eps)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut section: Option<Section> = None;
        let mut ratios_set = false;
        let mut grid_set = false;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "params" => Section::Params,
                    "rates.deposit" => Section::Rate(RateSlot::Deposit),
                    "rates.loan" => Section::Rate(RateSlot::Loan),
                    "rates.interbank" => Section::Rate(RateSlot::Interbank),
                    "regulation" => Section::Regulation,
                    "integrator" => Section::Integrator,
                    "scenario" => Section::Scenario,
                    other => {
                        return Err(ConfigError::Parse {
                            line,
                            message: format!("unknown section [{other}]"),
                        })
                    }
                });
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("expected `key = value`, found `{content}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(current) = section else {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("key `{key}` appears before any section"),
                });
            };
            let unknown = || ConfigError::Parse {
                line,
                message: format!("unknown key `{key}`"),
            };
            let num = || parse_f64(value, line);

            match current {
                Section::Params => {
                    let p = &mut cfg.params;
                    let slot = match key {
                        "kappa1" => &mut p.kappa1,
                        "kappa2" => &mut p.kappa2,
                        "delta" => &mut p.delta,
                        "gamma" => &mut p.gamma,
                        "r_b" => &mut p.r_b,
                        "r_r2" => &mut p.r_r2,
                        "k" => &mut p.k,
                        "b" => &mut p.b,
                        "g" => &mut p.g,
                        _ => return Err(unknown()),
                    };
                    *slot = num()?;
                }
                Section::Rate(which) => {
                    let rate: &mut SinusoidalRate = match which {
                        RateSlot::Deposit => &mut cfg.rates.deposit,
                        RateSlot::Loan => &mut cfg.rates.loan,
                        RateSlot::Interbank => &mut cfg.rates.interbank,
                    };
                    let slot = match key {
                        "mean" => &mut rate.mean,
                        "sin_amp" => &mut rate.sin_amp,
                        "cos_amp" => &mut rate.cos_amp,
                        "freq" => &mut rate.freq,
                        _ => return Err(unknown()),
                    };
                    *slot = num()?;
                }
                Section::Regulation => {
                    let r = &mut cfg.regulation;
                    match key {
                        "lambda_l" => r.lambda_l = num()?,
                        "lambda_u" => r.lambda_u = num()?,
                        "gamma_l" => r.gamma_l = num()?,
                        "gamma_u" => r.gamma_u = num()?,
                        "car_below_min" => r.car_below_min = parse_bool(value, line)?,
                        _ => return Err(unknown()),
                    }
                }
                Section::Integrator => {
                    let c = &mut cfg.integrator;
                    match key {
                        "t_end" => c.t_end = num()?,
                        "dt" => c.dt = num()?,
                        "singular_eps" => c.singular_eps = num()?,
                        "max_state" => c.max_state = num()?,
                        "event_policy" => {
                            c.event_policy = value
                                .parse::<EventPolicy>()
                                .map_err(|message| ConfigError::Parse { line, message })?
                        }
                        _ => return Err(unknown()),
                    }
                }
                Section::Scenario => {
                    let s = &mut cfg.scenario;
                    match key {
                        "d0" => s.d0 = parse_list(value, line)?,
                        "theta" => s.theta = num()?,
                        "ratios" => {
                            s.ratios = parse_list(value, line)?;
                            ratios_set = true;
                        }
                        "ratio_grid" => {
                            let spec = parse_list(value, line)?;
                            let [start, end, count] = spec[..] else {
                                return Err(ConfigError::Parse {
                                    line,
                                    message: "ratio_grid needs `start, end, count`".into(),
                                });
                            };
                            if !(count >= 1.0 && count.fract() == 0.0) {
                                return Err(ConfigError::Parse {
                                    line,
                                    message: format!(
                                        "ratio_grid count {count} is not a positive integer"
                                    ),
                                });
                            }
                            s.ratios = ratio_grid(start, end, count as usize);
                            grid_set = true;
                        }
                        _ => return Err(unknown()),
                    }
                }
            }
        }
        if ratios_set && grid_set {
            return Err(ConfigError::Validation(
                "give either `ratios` or `ratio_grid`, not both".into(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Validation(e.to_string());
        self.params.validate().map_err(|e| invalid(&e))?;
        self.regulation.validate().map_err(|e| invalid(&e))?;
        self.integrator.validate().map_err(|e| invalid(&e))?;
        for (name, rate) in [
            ("deposit", &self.rates.deposit),
            ("loan", &self.rates.loan),
            ("interbank", &self.rates.interbank),
        ] {
            if ![rate.mean, rate.sin_amp, rate.cos_amp, rate.freq]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(ConfigError::Validation(format!(
                    "{name} rate coefficients must be finite"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.scenario.theta) {
            return Err(ConfigError::Validation(format!(
                "theta = {} must lie in [0, 1]",
                self.scenario.theta
            )));
        }
        if self.scenario.d0.is_empty() {
            return Err(ConfigError::Validation("scenario d0 list is empty".into()));
        }
        self.scenario.sets()?;
        Ok(())
    }

    /// Writes every key with its effective value; parsing the result gives
    /// back an identical configuration.
    pub fn to_config_string(&self) -> String {
        fn list(v: &[f64]) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        }
        let mut out = String::new();
        let p = &self.params;
        let _ = writeln!(out, "[params]");
        for (k, v) in [
            ("kappa1", p.kappa1),
            ("kappa2", p.kappa2),
            ("delta", p.delta),
            ("gamma", p.gamma),
            ("r_b", p.r_b),
            ("r_r2", p.r_r2),
            ("k", p.k),
            ("b", p.b),
            ("g", p.g),
        ] {
            let _ = writeln!(out, "{k} = {v:?}");
        }
        for (name, rate) in [
            ("deposit", &self.rates.deposit),
            ("loan", &self.rates.loan),
            ("interbank", &self.rates.interbank),
        ] {
            let _ = writeln!(out, "\n[rates.{name}]");
            let _ = writeln!(out, "mean = {:?}", rate.mean);
            let _ = writeln!(out, "sin_amp = {:?}", rate.sin_amp);
            let _ = writeln!(out, "cos_amp = {:?}", rate.cos_amp);
            let _ = writeln!(out, "freq = {:?}", rate.freq);
        }
        let r = &self.regulation;
        let _ = writeln!(out, "\n[regulation]");
        let _ = writeln!(out, "lambda_l = {:?}", r.lambda_l);
        let _ = writeln!(out, "lambda_u = {:?}", r.lambda_u);
        let _ = writeln!(out, "gamma_l = {:?}", r.gamma_l);
        let _ = writeln!(out, "gamma_u = {:?}", r.gamma_u);
        let _ = writeln!(out, "car_below_min = {}", r.car_below_min);
        let c = &self.integrator;
        let _ = writeln!(out, "\n[integrator]");
        let _ = writeln!(out, "t_end = {:?}", c.t_end);
        let _ = writeln!(out, "dt = {:?}", c.dt);
        let _ = writeln!(out, "singular_eps = {:?}", c.singular_eps);
        let _ = writeln!(out, "event_policy = {}", c.event_policy);
        let _ = writeln!(out, "max_state = {:?}", c.max_state);
        let s = &self.scenario;
        let _ = writeln!(out, "\n[scenario]");
        let _ = writeln!(out, "d0 = {}", list(&s.d0));
        let _ = writeln!(out, "ratios = {}", list(&s.ratios));
        let _ = writeln!(out, "theta = {:?}", s.theta);
        out
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RunConfig::parse(&text)
}
