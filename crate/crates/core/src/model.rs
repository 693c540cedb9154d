//! Bank model: interest-rate drivers, balance sheet, profit, and the
//! deposit/loan vector field together with its singularity loci.

use std::f64::consts::TAU;
use std::fmt;

use thiserror::Error;

/// Denominator guard below which the vector field is treated as singular.
pub const DEFAULT_SINGULAR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("vector field is singular: |{which} marginal profit| = {value:e} is within the guard")]
    Singular { which: Denominator, value: f64 },
    #[error(
        "rates do not share a frequency (deposit {deposit}, loan {loan}, interbank {interbank})"
    )]
    FrequencyMismatch {
        deposit: f64,
        loan: f64,
        interbank: f64,
    },
    #[error("state (D={deposits}, L={loans}) lies on the {which} locus at t={t}")]
    OnLocus {
        which: Denominator,
        t: f64,
        deposits: f64,
        loans: f64,
    },
}

/// Which marginal-profit denominator of the vector field is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Denominator {
    Deposit,
    Loan,
}

impl Denominator {
    pub const BOTH: [Denominator; 2] = [Denominator::Deposit, Denominator::Loan];
}

impl fmt::Display for Denominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Denominator::Deposit => "deposit",
            Denominator::Loan => "loan",
        })
    }
}

/// Structural constants of the bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Primary reserve as a fraction of deposits.
    pub kappa1: f64,
    /// Secondary reserve as a fraction of deposits.
    pub kappa2: f64,
    /// Treasury bills as a fraction of deposits.
    pub delta: f64,
    /// Equity as a fraction of loans.
    pub gamma: f64,
    /// Treasury-bill rate.
    pub r_b: f64,
    /// Rate paid on the secondary reserve.
    pub r_r2: f64,
    /// Cost curvature, C(D, L) = k (D + L)^2 / 2.
    pub k: f64,
    /// Deposit sensitivity to the deposit rate, dD/dr_D.
    pub b: f64,
    /// Loan sensitivity to the loan rate, dL/dr_L.
    pub g: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            kappa1: 0.08,
            kappa2: 0.025,
            delta: 0.04,
            gamma: 0.08,
            r_b: 0.065,
            r_r2: 0.05,
            k: 0.01,
            b: 1.0,
            g: -1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("r_b", self.r_b),
            ("r_r2", self.r_r2),
            ("k", self.k),
            ("b", self.b),
            ("g", self.g),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ModelError::InvalidParams(format!("{name} must be finite")));
        }
        if self.kappa1 < 0.0 || self.kappa2 < 0.0 || self.delta < 0.0 {
            return Err(ModelError::InvalidParams(
                "kappa1, kappa2 and delta must be non-negative".into(),
            ));
        }
        if self.kappa1 + self.kappa2 + self.delta >= 1.0 {
            return Err(ModelError::InvalidParams(format!(
                "kappa1 + kappa2 + delta = {} must be below 1",
                self.kappa1 + self.kappa2 + self.delta
            )));
        }
        if !(self.b > 0.0 && self.b <= 1.0) {
            return Err(ModelError::InvalidParams(format!(
                "b = {} must lie in (0, 1]",
                self.b
            )));
        }
        if !(-1.0..0.0).contains(&self.g) {
            return Err(ModelError::InvalidParams(format!(
                "g = {} must lie in [-1, 0)",
                self.g
            )));
        }
        if self.k <= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "k = {} must be positive",
                self.k
            )));
        }
        if self.gamma < 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "gamma = {} must be non-negative",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Share of deposits left for the interbank market after reserves and bills.
    pub fn free_deposit_share(&self) -> f64 {
        1.0 - self.kappa1 - self.kappa2 - self.delta
    }

    /// Management cost `k D L + k L^2/2 + k D^2/2`.
    pub fn cost(&self, deposits: f64, loans: f64) -> f64 {
        self.k * (deposits * loans + 0.5 * (deposits * deposits + loans * loans))
    }

    /// Marginal cost, identical in the deposit and loan directions.
    pub fn cost_marginal(&self, deposits: f64, loans: f64) -> f64 {
        self.k * (deposits + loans)
    }

    /// Net interbank position M that closes the balance sheet.
    pub fn interbank_position(&self, deposits: f64, loans: f64) -> f64 {
        self.free_deposit_share() * deposits + loans * (self.gamma - 1.0)
    }

    pub fn balance_sheet(&self, state: &BankState) -> BalanceSheet {
        let (d, l) = (state.deposits, state.loans);
        BalanceSheet {
            deposits: d,
            loans: l,
            interbank: self.interbank_position(d, l),
            primary_reserve: self.kappa1 * d,
            secondary_reserve: self.kappa2 * d,
            treasury_bills: self.delta * d,
            equity: self.gamma * l,
        }
    }
}

/// `mean + sin_amp sin(2 pi freq t) + cos_amp cos(2 pi freq t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidalRate {
    pub mean: f64,
    pub sin_amp: f64,
    pub cos_amp: f64,
    /// Cycles per unit time.
    pub freq: f64,
}

impl SinusoidalRate {
    pub fn new(mean: f64, sin_amp: f64, cos_amp: f64, freq: f64) -> Self {
        Self {
            mean,
            sin_amp,
            cos_amp,
            freq,
        }
    }

    /// A rate frozen at `mean` (unit frequency, zero amplitudes).
    pub fn constant(mean: f64) -> Self {
        Self::new(mean, 0.0, 0.0, 1.0)
    }

    pub fn is_constant(&self) -> bool {
        self.sin_amp == 0.0 && self.cos_amp == 0.0
    }

    pub fn value(&self, t: f64) -> f64 {
        let phase = TAU * self.freq * t;
        self.mean + self.sin_amp * phase.sin() + self.cos_amp * phase.cos()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let omega = TAU * self.freq;
        let phase = omega * t;
        omega * (self.sin_amp * phase.cos() - self.cos_amp * phase.sin())
    }
}

/// Deposit rate r_D, loan rate r_L and interbank rate r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    pub deposit: SinusoidalRate,
    pub loan: SinusoidalRate,
    pub interbank: SinusoidalRate,
}

impl Default for RateSet {
    fn default() -> Self {
        Self {
            deposit: SinusoidalRate::new(0.04, 0.02, 0.0, 1.0),
            loan: SinusoidalRate::new(0.11, 0.0, 0.03, 1.0),
            interbank: SinusoidalRate::new(0.06, 0.01, 0.0, 1.0),
        }
    }
}

impl RateSet {
    /// All three rates held at their means.
    pub fn frozen(&self) -> Self {
        Self {
            deposit: SinusoidalRate::constant(self.deposit.mean),
            loan: SinusoidalRate::constant(self.loan.mean),
            interbank: SinusoidalRate::constant(self.interbank.mean),
        }
    }

    /// Common frequency of the oscillating rates. Constant rates carry no
    /// frequency information and are ignored.
    pub fn shared_freq(&self) -> Result<f64, ModelError> {
        let mut freq = None;
        for rate in [&self.deposit, &self.loan, &self.interbank] {
            if rate.is_constant() {
                continue;
            }
            match freq {
                None => freq = Some(rate.freq),
                Some(f) if f == rate.freq => {}
                Some(_) => {
                    return Err(ModelError::FrequencyMismatch {
                        deposit: self.deposit.freq,
                        loan: self.loan.freq,
                        interbank: self.interbank.freq,
                    })
                }
            }
        }
        Ok(freq.unwrap_or(self.deposit.freq))
    }
}

/// A point of the trajectory: time in years, deposit and loan volumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankState {
    pub t: f64,
    pub deposits: f64,
    pub loans: f64,
}

impl BankState {
    pub fn new(t: f64, deposits: f64, loans: f64) -> Self {
        Self { t, deposits, loans }
    }

    pub fn volumes(&self) -> [f64; 2] {
        [self.deposits, self.loans]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceSheet {
    pub deposits: f64,
    pub loans: f64,
    /// Net interbank position M (positive when lending).
    pub interbank: f64,
    pub primary_reserve: f64,
    pub secondary_reserve: f64,
    pub treasury_bills: f64,
    pub equity: f64,
}

impl BalanceSheet {
    /// L + M + R1 + R2 + B
    pub fn assets(&self) -> f64 {
        self.loans
            + self.interbank
            + self.primary_reserve
            + self.secondary_reserve
            + self.treasury_bills
    }

    /// D + K
    pub fn liabilities(&self) -> f64 {
        self.deposits + self.equity
    }
}

/// One singularity locus `k (D + L) = c0 + cs sin(2 pi freq t) + cc cos(2 pi freq t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocusCoefficients {
    pub c0: f64,
    pub cs: f64,
    pub cc: f64,
    pub freq: f64,
    pub k: f64,
}

impl LocusCoefficients {
    /// Right-hand side of the locus equation at `t`.
    pub fn rhs(&self, t: f64) -> f64 {
        let phase = TAU * self.freq * t;
        self.c0 + self.cs * phase.sin() + self.cc * phase.cos()
    }

    /// Total volume D + L that sits on the locus at `t`.
    pub fn boundary_volume(&self, t: f64) -> f64 {
        self.rhs(t) / self.k
    }

    /// Signed distance `rhs(t) - k (D + L)`; this is the marginal profit
    /// the locus belongs to.
    pub fn gap(&self, deposits: f64, loans: f64, t: f64) -> f64 {
        self.rhs(t) - self.k * (deposits + loans)
    }
}

/// Region of the (D, L) plane relative to the two loci.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Below both loci.
    Lower,
    /// Between the loci.
    Middle,
    /// Above both loci.
    Upper,
}

impl Region {
    pub fn index(&self) -> u8 {
        match self {
            Region::Lower => 1,
            Region::Middle => 2,
            Region::Upper => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loci {
    pub deposit: LocusCoefficients,
    pub loan: LocusCoefficients,
}

impl Loci {
    pub fn get(&self, which: Denominator) -> &LocusCoefficients {
        match which {
            Denominator::Deposit => &self.deposit,
            Denominator::Loan => &self.loan,
        }
    }

    pub fn classify(
        &self,
        deposits: f64,
        loans: f64,
        t: f64,
        singular_eps: f64,
    ) -> Result<Region, ModelError> {
        let s = self.deposit.k * (deposits + loans);
        let mut above = 0;
        for which in Denominator::BOTH {
            let rhs = self.get(which).rhs(t);
            if (s - rhs).abs() <= singular_eps {
                return Err(ModelError::OnLocus {
                    which,
                    t,
                    deposits,
                    loans,
                });
            }
            if s > rhs {
                above += 1;
            }
        }
        Ok(match above {
            0 => Region::Lower,
            1 => Region::Middle,
            _ => Region::Upper,
        })
    }
}

/// Model parameters and rate drivers, the full input of the vector field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankModel {
    pub params: ModelParams,
    pub rates: RateSet,
    pub singular_eps: f64,
}

impl Default for BankModel {
    fn default() -> Self {
        Self::new(ModelParams::default(), RateSet::default())
    }
}

impl BankModel {
    pub fn new(params: ModelParams, rates: RateSet) -> Self {
        Self {
            params,
            rates,
            singular_eps: DEFAULT_SINGULAR_EPS,
        }
    }

    pub fn with_singular_eps(mut self, eps: f64) -> Self {
        self.singular_eps = eps;
        self
    }

    /// Profit from the full balance sheet. R1 and K earn nothing.
    pub fn profit_structural(&self, sheet: &BalanceSheet, t: f64) -> f64 {
        let p = &self.params;
        let r = &self.rates;
        r.loan.value(t) * sheet.loans
            + r.interbank.value(t) * sheet.interbank
            + p.r_b * sheet.treasury_bills
            + p.r_r2 * sheet.secondary_reserve
            - r.deposit.value(t) * sheet.deposits
            - p.cost(sheet.deposits, sheet.loans)
    }

    /// Profit with the balance-sheet constraint substituted in.
    pub fn profit_reduced(&self, deposits: f64, loans: f64, t: f64) -> f64 {
        self.deposit_margin(t) * deposits + self.loan_margin(t) * loans
            - self.params.cost(deposits, loans)
    }

    /// Net return per unit of deposits before cost.
    fn deposit_margin(&self, t: f64) -> f64 {
        let p = &self.params;
        self.rates.interbank.value(t) * p.free_deposit_share() + p.r_b * p.delta + p.r_r2 * p.kappa2
            - self.rates.deposit.value(t)
    }

    /// Net return per unit of loans before cost.
    fn loan_margin(&self, t: f64) -> f64 {
        let r = self.rates.interbank.value(t);
        self.rates.loan.value(t) + r * self.params.gamma - r
    }

    /// Marginal profit of deposits, d(profit)/dD.
    pub fn alpha_deposit(&self, deposits: f64, loans: f64, t: f64) -> f64 {
        self.deposit_margin(t) - self.params.cost_marginal(deposits, loans)
    }

    /// Marginal profit of loans, d(profit)/dL.
    pub fn alpha_loan(&self, deposits: f64, loans: f64, t: f64) -> f64 {
        self.loan_margin(t) - self.params.cost_marginal(deposits, loans)
    }

    pub fn alpha(&self, which: Denominator, deposits: f64, loans: f64, t: f64) -> f64 {
        match which {
            Denominator::Deposit => self.alpha_deposit(deposits, loans, t),
            Denominator::Loan => self.alpha_loan(deposits, loans, t),
        }
    }

    /// `(dD/dt, dL/dt)` at `state`.
    pub fn vector_field(&self, state: &BankState) -> Result<[f64; 2], ModelError> {
        let (t, d, l) = (state.t, state.deposits, state.loans);
        let alpha_d = self.alpha_deposit(d, l, t);
        if !(alpha_d.abs() > self.singular_eps) {
            return Err(ModelError::Singular {
                which: Denominator::Deposit,
                value: alpha_d,
            });
        }
        let alpha_l = self.alpha_loan(d, l, t);
        if !(alpha_l.abs() > self.singular_eps) {
            return Err(ModelError::Singular {
                which: Denominator::Loan,
                value: alpha_l,
            });
        }
        Ok(self.field_from_alphas(state, alpha_d, alpha_l))
    }

    pub(crate) fn field_from_alphas(
        &self,
        state: &BankState,
        alpha_d: f64,
        alpha_l: f64,
    ) -> [f64; 2] {
        let p = &self.params;
        let dd = (p.b - state.deposits / alpha_d) * self.rates.deposit.derivative(state.t);
        let dl = (p.g - state.loans / alpha_l) * self.rates.loan.derivative(state.t);
        [dd, dl]
    }

    /// Coefficients of the loci on which each marginal profit vanishes.
    pub fn singularity_loci(&self) -> Result<Loci, ModelError> {
        let freq = self.rates.shared_freq()?;
        let p = &self.params;
        let (rd, rl, r) = (&self.rates.deposit, &self.rates.loan, &self.rates.interbank);
        let share = p.free_deposit_share();
        let deposit = LocusCoefficients {
            c0: r.mean * share + p.r_b * p.delta + p.r_r2 * p.kappa2 - rd.mean,
            cs: r.sin_amp * share - rd.sin_amp,
            cc: r.cos_amp * share - rd.cos_amp,
            freq,
            k: p.k,
        };
        let loan = LocusCoefficients {
            c0: rl.mean + r.mean * (p.gamma - 1.0),
            cs: rl.sin_amp + r.sin_amp * (p.gamma - 1.0),
            cc: rl.cos_amp + r.cos_amp * (p.gamma - 1.0),
            freq,
            k: p.k,
        };
        Ok(Loci { deposit, loan })
    }

    /// Region of `state` relative to the loci at its time.
    pub fn classify_region(&self, state: &BankState) -> Result<Region, ModelError> {
        self.singularity_loci()?
            .classify(state.deposits, state.loans, state.t, self.singular_eps)
    }

    /// `(b alpha_D - D, g alpha_L - L)`; a zero makes the matching field
    /// component vanish whatever the rate derivative.
    pub fn equilibrium_residual(&self, state: &BankState) -> (f64, f64) {
        let (t, d, l) = (state.t, state.deposits, state.loans);
        (
            self.params.b * self.alpha_deposit(d, l, t) - d,
            self.params.g * self.alpha_loan(d, l, t) - l,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rate_values() {
        let rates = RateSet::default();
        assert!(close(rates.loan.value(0.0), 0.14, 1e-15));
        assert!(close(rates.interbank.value(0.0), 0.06, 1e-15));
        assert!(close(rates.deposit.value(0.25), 0.06, 1e-15));
    }

    #[test]
    fn rate_derivatives() {
        let rates = RateSet::default();
        assert_eq!(rates.loan.derivative(0.0), 0.0);
        assert!(close(rates.deposit.derivative(0.0), 0.04 * PI, 1e-15));
        assert!(close(0.04 * PI, 0.125664, 1e-6));
        let flat = SinusoidalRate::constant(0.05);
        for t in [0.0, 0.3, 1.7] {
            assert_eq!(flat.derivative(t), 0.0);
        }
    }

    #[test]
    fn rate_derivative_matches_finite_difference() {
        let rate = SinusoidalRate::new(0.1, 0.03, -0.02, 1.5);
        let h = 1e-6;
        for i in 0..50 {
            let t = i as f64 * 0.037;
            let fd = (rate.value(t + h) - rate.value(t - h)) / (2.0 * h);
            assert!(close(rate.derivative(t), fd, 1e-8));
        }
    }

    #[test]
    fn cost_examples() {
        let p = ModelParams::default();
        assert!(close(p.cost(10.0, 8.0), 1.62, 1e-14));
        assert_eq!(p.cost(0.0, 0.0), 0.0);
        assert!(close(p.cost(1.0, 1.0), 0.02, 1e-16));
        assert!(close(p.cost_marginal(6.0, 1.8), 0.078, 1e-16));
        assert_eq!(p.cost_marginal(0.0, 0.0), 0.0);
        assert!(close(p.cost_marginal(1.0, 0.515), 0.01515, 1e-16));
    }

    #[test]
    fn interbank_examples() {
        let p = ModelParams::default();
        assert!(close(p.interbank_position(10.0, 8.0), 1.19, 1e-14));
        assert_eq!(p.interbank_position(0.0, 0.0), 0.0);
        let degenerate = ModelParams {
            kappa1: 0.0,
            kappa2: 0.0,
            delta: 0.0,
            gamma: 1.0,
            ..p
        };
        assert_eq!(degenerate.interbank_position(5.0, 3.0), 5.0);
    }

    #[test]
    fn balance_sheet_examples() {
        let p = ModelParams::default();
        let s = p.balance_sheet(&BankState::new(0.0, 10.0, 8.0));
        assert!(close(s.primary_reserve, 0.8, 1e-15));
        assert!(close(s.secondary_reserve, 0.25, 1e-15));
        assert!(close(s.treasury_bills, 0.4, 1e-15));
        assert!(close(s.equity, 0.64, 1e-15));
        assert!(close(s.interbank, 1.19, 1e-14));
        assert!(close(s.assets(), s.liabilities(), 1e-13));

        let s = p.balance_sheet(&BankState::new(0.0, 1.0, 0.0));
        assert_eq!(s.equity, 0.0);
        assert!(close(s.interbank, 0.855, 1e-15));
        assert!(close(s.assets(), s.liabilities(), 1e-15));
    }

    #[test]
    fn profit_examples() {
        let model = BankModel::default();
        let sheet = model.params.balance_sheet(&BankState::new(0.0, 10.0, 8.0));
        assert!(close(model.profit_reduced(10.0, 8.0, 0.0), -0.7901, 1e-13));
        assert!(close(model.profit_structural(&sheet, 0.0), -0.7901, 1e-13));
        assert_eq!(model.profit_reduced(0.0, 0.0, 0.3), 0.0);

        let zero = RateSet {
            deposit: SinusoidalRate::constant(0.0),
            loan: SinusoidalRate::constant(0.0),
            interbank: SinusoidalRate::constant(0.0),
        };
        let params = ModelParams {
            r_b: 0.0,
            r_r2: 0.0,
            ..ModelParams::default()
        };
        let model = BankModel::new(params, zero);
        let sheet = params.balance_sheet(&BankState::new(0.0, 1.0, 1.0));
        assert!(close(model.profit_structural(&sheet, 0.0), -0.02, 1e-16));
    }

    #[test]
    fn alpha_examples() {
        let m = BankModel::default();
        assert!(close(m.alpha_deposit(6.0, 0.0, 0.0), -0.04485, 1e-15));
        assert!(close(m.alpha_deposit(1.0, 0.515, 0.0), 0.0, 1e-15));
        assert!(close(m.alpha_loan(0.0, 0.0, 0.0), 0.0848, 1e-15));
        assert!(close(m.alpha_loan(4.0, 4.48, 0.0), 0.0, 1e-15));
    }

    #[test]
    fn vector_field_examples() {
        let m = BankModel::default();
        for (d, l) in [(6.0, 1.8), (10.0, 20.0), (0.7, 0.14)] {
            let f = m.vector_field(&BankState::new(0.0, d, l)).unwrap();
            assert_eq!(f[1], 0.0);
        }
        let f = m.vector_field(&BankState::new(0.0, 6.0, 1.8)).unwrap();
        // alpha_D = 0.01515 - 0.078
        let expected = (1.0 + 6.0 / 0.06285) * 0.04 * PI;
        assert!(close(f[0], expected, 1e-12));
        assert!(close(f[0], 12.122, 1e-3));
    }

    #[test]
    fn vector_field_symmetry() {
        // b = g (outside the validated range, field algebra only), D = L,
        // equal denominators and equal rate slopes.
        let rate = SinusoidalRate::new(0.05, 0.01, 0.0, 1.0);
        let params = ModelParams {
            b: 0.5,
            g: 0.5,
            ..ModelParams::default()
        };
        let model = BankModel::new(
            params,
            RateSet {
                deposit: rate,
                loan: rate,
                interbank: SinusoidalRate::constant(0.08),
            },
        );
        let state = BankState::new(0.1, 2.0, 2.0);
        let f = model.field_from_alphas(&state, -0.03, -0.03);
        assert_eq!(f[0], f[1]);
    }

    #[test]
    fn vector_field_reports_singular_denominator() {
        let m = BankModel::default();
        let err = m
            .vector_field(&BankState::new(0.0, 1.0, 0.515))
            .unwrap_err();
        assert!(matches!(
            err,
            ModelError::Singular {
                which: Denominator::Deposit,
                ..
            }
        ));
        let err = m.vector_field(&BankState::new(0.0, 4.0, 4.48)).unwrap_err();
        assert!(matches!(
            err,
            ModelError::Singular {
                which: Denominator::Loan,
                ..
            }
        ));
    }

    #[test]
    fn loci_golden() {
        let loci = BankModel::default().singularity_loci().unwrap();
        assert!(close(loci.deposit.c0, 1.515e-2, 1e-12));
        assert!(close(loci.deposit.cs, -1.145e-2, 1e-12));
        assert!(close(loci.deposit.cc, 0.0, 1e-12));
        assert!(close(loci.loan.c0, 5.48e-2, 1e-12));
        assert!(close(loci.loan.cs, -9.2e-3, 1e-12));
        assert!(close(loci.loan.cc, 3e-2, 1e-12));
        assert_eq!(loci.deposit.k, 0.01);
    }

    #[test]
    fn loci_constant_rates() {
        let m = BankModel::new(ModelParams::default(), RateSet::default().frozen());
        let loci = m.singularity_loci().unwrap();
        for c in [loci.deposit, loci.loan] {
            assert_eq!(c.cs, 0.0);
            assert_eq!(c.cc, 0.0);
        }
    }

    #[test]
    fn loci_reject_mismatched_frequency() {
        let mut rates = RateSet::default();
        rates.loan.freq = 2.0;
        let m = BankModel::new(ModelParams::default(), rates);
        assert!(matches!(
            m.singularity_loci(),
            Err(ModelError::FrequencyMismatch { .. })
        ));
    }

    #[test]
    fn region_examples() {
        let m = BankModel::default();
        let region = |d, l| m.classify_region(&BankState::new(0.0, d, l));
        assert_eq!(region(0.7, 0.14).unwrap(), Region::Lower);
        assert_eq!(region(6.0, 1.8).unwrap(), Region::Middle);
        assert_eq!(region(10.0, 20.0).unwrap(), Region::Upper);
        assert_eq!(Region::Upper.index(), 3);
        assert!(matches!(
            region(1.0, 0.515),
            Err(ModelError::OnLocus {
                which: Denominator::Deposit,
                ..
            })
        ));
    }

    #[test]
    fn equilibrium_residual_examples() {
        let m = BankModel::default();
        let (rd, rl) = m.equilibrium_residual(&BankState::new(0.0, 0.0, 0.0));
        assert!(close(rd, 0.01515, 1e-15));
        assert!(close(rl, -0.0848, 1e-15));

        // Put D on its nullcline: D = b alpha_D(D, L) => D (1 + b k) = b (margin - k L)
        let (l, t) = (0.3, 0.4);
        let margin = m.alpha_deposit(0.0, 0.0, t);
        let p = &m.params;
        let d = p.b * (margin - p.k * l) / (1.0 + p.b * p.k);
        let state = BankState::new(t, d, l);
        let (rd, _) = m.equilibrium_residual(&state);
        assert!(rd.abs() < 1e-15);
        let f = m.vector_field(&state).unwrap();
        assert!(f[0].abs() < 1e-14);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::default().validate().is_ok());
        let bad = ModelParams {
            kappa1: 0.5,
            kappa2: 0.4,
            delta: 0.2,
            ..ModelParams::default()
        };
        assert!(bad.validate().is_err());
        assert!(ModelParams {
            b: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ModelParams {
            g: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ModelParams {
            g: -1.0,
            ..Default::default()
        }
        .validate()
        .is_ok());
        assert!(ModelParams {
            k: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ModelParams {
            gamma: -0.1,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn params() -> impl Strategy<Value = ModelParams> {
        (
            (0.0..0.3f64, 0.0..0.2f64, 0.0..0.3f64, 0.0..0.3f64),
            (0.0..0.15f64, 0.0..0.15f64, 1e-3..0.05f64),
            (0.05..=1.0f64, -1.0..-0.05f64),
        )
            .prop_map(|((kappa1, kappa2, delta, gamma), (r_b, r_r2, k), (b, g))| {
                ModelParams {
                    kappa1,
                    kappa2,
                    delta,
                    gamma,
                    r_b,
                    r_r2,
                    k,
                    b,
                    g,
                }
            })
    }

    fn rate(lo: f64, hi: f64) -> impl Strategy<Value = SinusoidalRate> {
        (lo..hi, -0.03..0.03f64, -0.03..0.03f64)
            .prop_map(|(m, s, c)| SinusoidalRate::new(m, s, c, 1.0))
    }

    fn rates() -> impl Strategy<Value = RateSet> {
        (rate(0.01, 0.08), rate(0.05, 0.2), rate(0.02, 0.1)).prop_map(
            |(deposit, loan, interbank)| RateSet {
                deposit,
                loan,
                interbank,
            },
        )
    }

    fn shifted(model: &BankModel, which: Denominator, h: f64) -> BankModel {
        let mut m = *model;
        match which {
            Denominator::Deposit => m.rates.deposit.mean += h,
            Denominator::Loan => m.rates.loan.mean += h,
        }
        m
    }

    proptest! {
        #[test]
        fn balance_identity(p in params(), d in 0.01..50.0f64, l in 0.01..50.0f64) {
            let s = p.balance_sheet(&BankState::new(0.0, d, l));
            let (a, b) = (s.assets(), s.liabilities());
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        }

        #[test]
        fn profit_forms_agree(p in params(), r in rates(), d in 0.01..50.0f64, l in 0.01..50.0f64, t in 0.0..3.0f64) {
            let m = BankModel::new(p, r);
            let a = m.profit_structural(&p.balance_sheet(&BankState::new(t, d, l)), t);
            let b = m.profit_reduced(d, l, t);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300));
        }

        #[test]
        fn alphas_are_partial_derivatives(p in params(), r in rates(), d in 0.01..30.0f64, l in 0.01..30.0f64, t in 0.0..3.0f64) {
            let m = BankModel::new(p, r);
            let h = 1e-6;
            let fd_d = (m.profit_reduced(d + h, l, t) - m.profit_reduced(d - h, l, t)) / (2.0 * h);
            let fd_l = (m.profit_reduced(d, l + h, t) - m.profit_reduced(d, l - h, t)) / (2.0 * h);
            prop_assert!((fd_d - m.alpha_deposit(d, l, t)).abs() <= 1e-6);
            prop_assert!((fd_l - m.alpha_loan(d, l, t)).abs() <= 1e-6);
        }

        #[test]
        fn points_on_loci_zero_alpha(r in rates(), t in 0.0..3.0f64, share in 0.05..0.95f64) {
            let m = BankModel::new(ModelParams::default(), r);
            let loci = m.singularity_loci().unwrap();
            for which in Denominator::BOTH {
                let total = loci.get(which).boundary_volume(t);
                let (d, l) = (share * total, (1.0 - share) * total);
                prop_assert!(m.alpha(which, d, l, t).abs() <= 1e-10);
            }
        }

        #[test]
        fn field_matches_chain_rule(p in params(), r in rates(), d in 0.01..30.0f64, l in 0.01..30.0f64, t in 0.0..3.0f64) {
            let m = BankModel::new(p, r);
            let alpha_d = m.alpha_deposit(d, l, t);
            let alpha_l = m.alpha_loan(d, l, t);
            prop_assume!(alpha_d.abs() > 1e-3 && alpha_l.abs() > 1e-3);
            let h = 1e-6;
            let partial = |which: Denominator| {
                let (up, down) = (shifted(&m, which, h), shifted(&m, which, -h));
                let d_rate = (up.profit_reduced(d, l, t) - down.profit_reduced(d, l, t)) / (2.0 * h);
                let (dp, dm) = match which {
                    Denominator::Deposit => (m.profit_reduced(d + h, l, t), m.profit_reduced(d - h, l, t)),
                    Denominator::Loan => (m.profit_reduced(d, l + h, t), m.profit_reduced(d, l - h, t)),
                };
                d_rate / ((dp - dm) / (2.0 * h))
            };
            let f = m.vector_field(&BankState::new(t, d, l)).unwrap();
            let want_d = (p.b + partial(Denominator::Deposit)) * r.deposit.derivative(t);
            let want_l = (p.g - partial(Denominator::Loan)) * r.loan.derivative(t);
            let scale_d = want_d.abs().max(1e-6 * r.deposit.derivative(t).abs()).max(1e-300);
            let scale_l = want_l.abs().max(1e-6 * r.loan.derivative(t).abs()).max(1e-300);
            prop_assert!((f[0] - want_d).abs() <= 1e-5 * scale_d, "{} vs {}", f[0], want_d);
            prop_assert!((f[1] - want_l).abs() <= 1e-5 * scale_l, "{} vs {}", f[1], want_l);
        }

        #[test]
        fn cost_is_symmetric(p in params(), d in 0.0..50.0f64, l in 0.0..50.0f64) {
            prop_assert_eq!(p.cost(d, l), p.cost(l, d));
            prop_assert_eq!(p.cost_marginal(d, l), p.cost_marginal(l, d));
        }

        #[test]
        fn zero_residual_zeroes_component(r in rates(), d in 10.0..50.0f64, t in 0.0..3.0f64) {
            // L = g alpha_L(D, L) solved for L; positive once k D exceeds the loan margin.
            let m = BankModel::new(ModelParams::default(), r);
            let (k, g) = (m.params.k, m.params.g);
            let margin = m.alpha_loan(0.0, 0.0, t);
            let l = g * (margin - k * d) / (1.0 + g * k);
            let (_, res) = m.equilibrium_residual(&BankState::new(t, d, l));
            prop_assert!(res.abs() < 1e-12);
            let f = m.vector_field(&BankState::new(t, d, l)).unwrap();
            prop_assert!(f[1].abs() <= 1e-12 * r.loan.derivative(t).abs().max(1.0));
        }
    }
}
