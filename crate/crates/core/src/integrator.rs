//! Fixed-step RK4 integration of the bank model with locus-crossing events.
//!
//! Both marginal-profit denominators are monitored at every step boundary.
//! A sign change, a near-zero value, or a singular stage evaluation flags the
//! step, and the crossing is then localized by bisection on the sub-step
//! length. Near a locus the field grows like `1/alpha`, so a trial sub-step is
//! only trusted when none of its RK4 stages has itself crossed the locus; when
//! the clean part of the bracket holds no root, the search restarts half-way
//! into it, which is always closer to the locus.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{BankModel, BankState, Denominator, ModelError, DEFAULT_SINGULAR_EPS};

/// Largest |alpha| accepted at a localized event.
pub const EVENT_TOLERANCE: f64 = 1e-9;

const MAX_BISECTIONS: usize = 100;
const MAX_REFINE_PASSES: usize = 64;
/// Bisection keeps narrowing past the residual target until the bracket is this short.
const EVENT_TIME_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{which} marginal profit does not change sign over [{t_start}, {t_end}]")]
    NoSignChange {
        which: Denominator,
        t_start: f64,
        t_end: f64,
    },
    #[error("could not localize the {which} locus crossing in [{t_start}, {t_end}]")]
    NotLocalized {
        which: Denominator,
        t_start: f64,
        t_end: f64,
    },
    #[error("time {t} lies outside the trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventPolicy {
    /// Stop at the first locus crossing.
    Terminate,
    /// Record the crossing and keep stepping when the step result is usable.
    Annotate,
}

impl fmt::Display for EventPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventPolicy::Terminate => "terminate",
            EventPolicy::Annotate => "annotate",
        })
    }
}

impl FromStr for EventPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "terminate" | "terminate-on-event" => Ok(EventPolicy::Terminate),
            "annotate" | "annotate-and-continue" => Ok(EventPolicy::Annotate),
            other => Err(format!(
                "unknown event policy `{other}` (expected `terminate` or `annotate`)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Final time in years.
    pub t_end: f64,
    pub dt: f64,
    pub singular_eps: f64,
    pub event_policy: EventPolicy,
    /// Cap on |D| and |L|.
    pub max_state: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            t_end: 2.0,
            dt: 1e-4,
            singular_eps: DEFAULT_SINGULAR_EPS,
            event_policy: EventPolicy::Terminate,
            max_state: 1e6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt > 0.0 && self.dt < self.t_end && self.t_end.is_finite()) {
            return Err(IntegratorError::InvalidConfig(format!(
                "need 0 < dt < t_end (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        if !(self.singular_eps > 0.0) {
            return Err(IntegratorError::InvalidConfig(format!(
                "singular_eps = {} must be positive",
                self.singular_eps
            )));
        }
        if !(self.max_state > 0.0) {
            return Err(IntegratorError::InvalidConfig(format!(
                "max_state = {} must be positive",
                self.max_state
            )));
        }
        Ok(())
    }
}

/// A localized crossing of one of the singularity loci.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularEvent {
    pub which: Denominator,
    pub t_star: f64,
    pub deposits: f64,
    pub loans: f64,
    /// |alpha| of the flagged denominator at the event state.
    pub residual: f64,
}

impl SingularEvent {
    pub fn state(&self) -> BankState {
        BankState::new(self.t_star, self.deposits, self.loans)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    Singular,
    NonPositiveState,
    StateOverflow,
}

impl Termination {
    pub fn is_runtime_failure(&self) -> bool {
        !matches!(self, Termination::Completed)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Completed => "completed",
            Termination::Singular => "singular",
            Termination::NonPositiveState => "nonpositive-state",
            Termination::StateOverflow => "state-overflow",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Strictly increasing in time; the first entry is the initial state.
    pub samples: Vec<BankState>,
    pub events: Vec<SingularEvent>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn first(&self) -> &BankState {
        &self.samples[0]
    }

    pub fn last(&self) -> &BankState {
        self.samples
            .last()
            .expect("trajectory holds at least its initial state")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }
}

/// One classical RK4 step of a two-dimensional field.
pub fn rk4_step<E, F>(field: F, t: f64, y: [f64; 2], h: f64) -> Result<[f64; 2], E>
where
    F: Fn(f64, [f64; 2]) -> Result<[f64; 2], E>,
{
    let shift = |k: [f64; 2], c: f64| [y[0] + c * k[0], y[1] + c * k[1]];
    let k1 = field(t, y)?;
    let k2 = field(t + 0.5 * h, shift(k1, 0.5 * h))?;
    let k3 = field(t + 0.5 * h, shift(k2, 0.5 * h))?;
    let k4 = field(t + h, shift(k3, h))?;
    Ok([
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

pub fn step_rk4(model: &BankModel, state: &BankState, dt: f64) -> Result<BankState, ModelError> {
    let y = rk4_step(
        |t, y| model.vector_field(&BankState::new(t, y[0], y[1])),
        state.t,
        state.volumes(),
        dt,
    )?;
    Ok(BankState::new(state.t + dt, y[0], y[1]))
}

/// RK4 sub-step used during localization. Returns `None` when any stage
/// leaves the side of the `which` locus given by `side`, or the result is not
/// finite.
fn clean_step(
    model: &BankModel,
    state: &BankState,
    h: f64,
    which: Denominator,
    side: f64,
) -> Option<BankState> {
    let field = |t: f64, y: [f64; 2]| -> Result<[f64; 2], ()> {
        let alpha_d = model.alpha_deposit(y[0], y[1], t);
        let alpha_l = model.alpha_loan(y[0], y[1], t);
        let watched = match which {
            Denominator::Deposit => alpha_d,
            Denominator::Loan => alpha_l,
        };
        if !(watched * side > 0.0) || alpha_d == 0.0 || alpha_l == 0.0 {
            return Err(());
        }
        let f = model.field_from_alphas(&BankState::new(t, y[0], y[1]), alpha_d, alpha_l);
        if f.iter().all(|v| v.is_finite()) {
            Ok(f)
        } else {
            Err(())
        }
    };
    let y = rk4_step(field, state.t, state.volumes(), h).ok()?;
    if y.iter().all(|v| v.is_finite()) {
        Some(BankState::new(state.t + h, y[0], y[1]))
    } else {
        None
    }
}

fn event_at(model: &BankModel, state: &BankState, which: Denominator) -> SingularEvent {
    SingularEvent {
        which,
        t_star: state.t,
        deposits: state.deposits,
        loans: state.loans,
        residual: model
            .alpha(which, state.deposits, state.loans, state.t)
            .abs(),
    }
}

/// Localizes where the `which` marginal profit reaches zero between `start`
/// and time `t_end`, re-integrating from `start`.
pub fn refine_event(
    model: &BankModel,
    start: &BankState,
    t_end: f64,
    which: Denominator,
) -> Result<SingularEvent, IntegratorError> {
    let alpha = |s: &BankState| model.alpha(which, s.deposits, s.loans, s.t);
    let alpha0 = alpha(start);
    if alpha0.abs() <= EVENT_TOLERANCE {
        return Ok(event_at(model, start, which));
    }
    let side = alpha0.signum();
    let not_localized = || IntegratorError::NotLocalized {
        which,
        t_start: start.t,
        t_end,
    };

    if let Some(end) = clean_step(model, start, t_end - start.t, which, side) {
        let a = alpha(&end);
        if a * side > EVENT_TOLERANCE {
            return Err(IntegratorError::NoSignChange {
                which,
                t_start: start.t,
                t_end,
            });
        }
        if a.abs() <= EVENT_TOLERANCE && (t_end - start.t) <= EVENT_TIME_TOLERANCE {
            return Ok(event_at(model, &end, which));
        }
    }

    let mut base = *start;
    for _ in 0..MAX_REFINE_PASSES {
        let (mut lo, mut hi) = (0.0_f64, t_end - base.t);
        let mut best: Option<BankState> = None;
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match clean_step(model, &base, mid, which, side) {
                Some(s) => {
                    let a = alpha(&s);
                    if a.abs() <= EVENT_TOLERANCE && best.is_none_or(|b| a.abs() < alpha(&b).abs())
                    {
                        best = Some(s);
                    }
                    if a * side > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                None => hi = mid,
            }
            if best.is_some() && hi - lo <= EVENT_TIME_TOLERANCE {
                break;
            }
        }
        if let Some(s) = best {
            return Ok(event_at(model, &s, which));
        }
        // The clean part of the bracket ends before the root: restart from
        // half-way into it.
        if lo <= 0.0 {
            return Err(not_localized());
        }
        base = clean_step(model, &base, 0.5 * lo, which, side).ok_or_else(not_localized)?;
    }
    Err(not_localized())
}

fn check_start(model: &BankModel, start: &BankState) -> Result<(), IntegratorError> {
    if !(start.t.is_finite() && start.deposits.is_finite() && start.loans.is_finite()) {
        return Err(IntegratorError::InvalidInitialState(
            "state must be finite".into(),
        ));
    }
    if start.deposits <= 0.0 || start.loans <= 0.0 {
        return Err(IntegratorError::InvalidInitialState(format!(
            "D = {} and L = {} must both be positive",
            start.deposits, start.loans
        )));
    }
    for which in Denominator::BOTH {
        if model
            .alpha(which, start.deposits, start.loans, start.t)
            .abs()
            <= model.singular_eps
        {
            return Err(IntegratorError::Model(ModelError::OnLocus {
                which,
                t: start.t,
                deposits: start.deposits,
                loans: start.loans,
            }));
        }
    }
    Ok(())
}

/// Integrates from `start` to `config.t_end` on the uniform grid
/// `start.t + i dt` (the last step is shortened to land on `t_end`).
pub fn integrate(
    model: &BankModel,
    start: BankState,
    config: &IntegratorConfig,
) -> Result<Trajectory, IntegratorError> {
    config.validate()?;
    let model = model.with_singular_eps(config.singular_eps);
    check_start(&model, &start)?;
    let span = config.t_end - start.t;
    if !(span > 0.0) {
        return Err(IntegratorError::InvalidInitialState(format!(
            "start time {} is not before t_end {}",
            start.t, config.t_end
        )));
    }
    let steps = ((span / config.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let eps = config.singular_eps;

    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(start);
    let mut events = Vec::new();
    let mut termination = Termination::Completed;

    for i in 1..=steps {
        let current = *samples.last().unwrap();
        let t_next = if i == steps {
            config.t_end
        } else {
            start.t + i as f64 * config.dt
        };
        let h = t_next - current.t;

        let mut flagged: Vec<Denominator> = Vec::new();
        let next = match step_rk4(&model, &current, h) {
            Ok(s) if s.deposits.is_finite() && s.loans.is_finite() => {
                Some(BankState::new(t_next, s.deposits, s.loans))
            }
            Ok(_) => None,
            Err(ModelError::Singular { which, .. }) => {
                flagged.push(which);
                None
            }
            Err(e) => return Err(e.into()),
        };
        match next {
            Some(s) => {
                for which in Denominator::BOTH {
                    let a0 = model.alpha(which, current.deposits, current.loans, current.t);
                    let a1 = model.alpha(which, s.deposits, s.loans, s.t);
                    if a1.abs() <= eps || a0.signum() != a1.signum() {
                        flagged.push(which);
                    }
                }
            }
            None if flagged.is_empty() => flagged.extend(Denominator::BOTH),
            None => {}
        }

        if !flagged.is_empty() {
            let mut earliest: Option<SingularEvent> = None;
            for &which in &flagged {
                match refine_event(&model, &current, t_next, which) {
                    Ok(ev) => {
                        if earliest.is_none_or(|e| ev.t_star < e.t_star) {
                            earliest = Some(ev);
                        }
                    }
                    Err(IntegratorError::NoSignChange { .. })
                    | Err(IntegratorError::NotLocalized { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            match earliest {
                Some(ev) => {
                    events.push(ev);
                    let usable = next.filter(|s| {
                        Denominator::BOTH
                            .iter()
                            .all(|&w| model.alpha(w, s.deposits, s.loans, s.t).abs() > eps)
                    });
                    let continue_with = match config.event_policy {
                        EventPolicy::Annotate => usable,
                        EventPolicy::Terminate => None,
                    };
                    if continue_with.is_none() {
                        if ev.t_star > current.t && ev.deposits > 0.0 && ev.loans > 0.0 {
                            samples.push(ev.state());
                        }
                        termination = Termination::Singular;
                        break;
                    }
                }
                None if next.is_none() => {
                    // Flagged by a singular stage but not localizable: report
                    // the last good state with its residual.
                    let which = flagged[0];
                    events.push(event_at(&model, &current, which));
                    termination = Termination::Singular;
                    break;
                }
                // Sign flip of both denominators that turned out spurious.
                None => {}
            }
        }

        let Some(s) = next else {
            termination = Termination::StateOverflow;
            break;
        };
        if s.deposits <= 0.0 || s.loans <= 0.0 {
            termination = Termination::NonPositiveState;
            break;
        }
        if s.deposits.abs() > config.max_state || s.loans.abs() > config.max_state {
            termination = Termination::StateOverflow;
            break;
        }
        samples.push(s);
    }

    Ok(Trajectory {
        samples,
        events,
        termination,
    })
}

/// Linear interpolation of the trajectory at each grid time.
pub fn resample(trajectory: &Trajectory, grid: &[f64]) -> Result<Vec<BankState>, IntegratorError> {
    let samples = &trajectory.samples;
    let (start, end) = (trajectory.first().t, trajectory.last().t);
    grid.iter()
        .map(|&t| {
            if !(t >= start && t <= end) {
                return Err(IntegratorError::OutOfSpan { t, start, end });
            }
            let idx = samples.partition_point(|s| s.t < t);
            let upper = samples[idx];
            if upper.t == t || idx == 0 {
                return Ok(BankState::new(t, upper.deposits, upper.loans));
            }
            let lower = samples[idx - 1];
            let w = (t - lower.t) / (upper.t - lower.t);
            Ok(BankState::new(
                t,
                lower.deposits + w * (upper.deposits - lower.deposits),
                lower.loans + w * (upper.loans - lower.loans),
            ))
        })
        .collect()
}
