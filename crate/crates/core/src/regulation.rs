//! Reserve requirement (GWM): primary and secondary reserves plus the
//! LDR-linked disincentive reserve.

use thiserror::Error;

use crate::integrator::Trajectory;
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegulationError {
    #[error("deposit volume {0} must be positive")]
    NonPositiveDeposit(f64),
    #[error("invalid regulation parameters: {0}")]
    InvalidParams(String),
    #[error("trajectory has no samples")]
    EmptyTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulationParams {
    /// Lower LDR target.
    pub lambda_l: f64,
    /// Upper LDR target.
    pub lambda_u: f64,
    /// Disincentive factor below the lower target.
    pub gamma_l: f64,
    /// Disincentive factor above the upper target.
    pub gamma_u: f64,
    /// Capital adequacy ratio below its minimum; the upper penalty applies only then.
    pub car_below_min: bool,
}

impl Default for RegulationParams {
    fn default() -> Self {
        Self {
            lambda_l: 0.78,
            lambda_u: 1.0,
            gamma_l: 0.1,
            gamma_u: 0.2,
            car_below_min: true,
        }
    }
}

impl RegulationParams {
    pub fn validate(&self) -> Result<(), RegulationError> {
        if !(self.lambda_l > 0.0 && self.lambda_l < self.lambda_u && self.lambda_u.is_finite()) {
            return Err(RegulationError::InvalidParams(format!(
                "need 0 < lambda_l < lambda_u (lambda_l = {}, lambda_u = {})",
                self.lambda_l, self.lambda_u
            )));
        }
        if !(self.gamma_l >= 0.0 && self.gamma_u >= 0.0) {
            return Err(RegulationError::InvalidParams(format!(
                "disincentive factors must be non-negative (gamma_l = {}, gamma_u = {})",
                self.gamma_l, self.gamma_u
            )));
        }
        Ok(())
    }

    /// LDR-linked reserve for loan-to-deposit ratio `lambda` and deposits `deposits`.
    /// The band `[lambda_l, lambda_u]` is closed.
    pub fn gwm_ldr(&self, lambda: f64, deposits: f64) -> f64 {
        if lambda < self.lambda_l {
            self.gamma_l * (self.lambda_l - lambda) * deposits
        } else if lambda <= self.lambda_u || !self.car_below_min {
            0.0
        } else {
            self.gamma_u * (lambda - self.lambda_u) * deposits
        }
    }
}

/// Loan-to-deposit ratio L/D.
pub fn ldr(deposits: f64, loans: f64) -> Result<f64, RegulationError> {
    if deposits > 0.0 {
        Ok(loans / deposits)
    } else {
        Err(RegulationError::NonPositiveDeposit(deposits))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reserves {
    pub primary: f64,
    pub secondary: f64,
    pub gwm_ldr: f64,
    pub total: f64,
}

pub fn reserves(
    params: &ModelParams,
    reg: &RegulationParams,
    deposits: f64,
    loans: f64,
) -> Result<Reserves, RegulationError> {
    let lambda = ldr(deposits, loans)?;
    let primary = params.kappa1 * deposits;
    let secondary = params.kappa2 * deposits;
    let gwm_ldr = reg.gwm_ldr(lambda, deposits);
    Ok(Reserves {
        primary,
        secondary,
        gwm_ldr,
        total: gwm_ldr + primary + secondary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReserveRow {
    pub t: f64,
    pub lambda: f64,
    pub gwm_ldr: f64,
    pub primary: f64,
    pub secondary: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReserveReport {
    pub rows: Vec<ReserveRow>,
    /// Time integral of the LDR reserve (currency x years).
    pub integrated_gwm: f64,
}

impl ReserveReport {
    /// Smallest and largest LDR over the run.
    pub fn lambda_range(&self) -> (f64, f64) {
        self.rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.lambda), hi.max(r.lambda))
            })
    }
}

/// Trapezoidal rule over possibly non-uniform sample times.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

pub fn reserve_series(
    params: &ModelParams,
    reg: &RegulationParams,
    trajectory: &Trajectory,
) -> Result<ReserveReport, RegulationError> {
    if trajectory.samples.is_empty() {
        return Err(RegulationError::EmptyTrajectory);
    }
    let rows = trajectory
        .samples
        .iter()
        .map(|s| {
            let r = reserves(params, reg, s.deposits, s.loans)?;
            Ok(ReserveRow {
                t: s.t,
                lambda: s.loans / s.deposits,
                gwm_ldr: r.gwm_ldr,
                primary: r.primary,
                secondary: r.secondary,
                total: r.total,
            })
        })
        .collect::<Result<Vec<_>, RegulationError>>()?;
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let gwm: Vec<f64> = rows.iter().map(|r| r.gwm_ldr).collect();
    let integrated_gwm = trapezoid(&times, &gwm);
    Ok(ReserveReport {
        rows,
        integrated_gwm,
    })
}
