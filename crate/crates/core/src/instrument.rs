//! Claims of the form `xi = P_S(nu) g(P_T(mu) / P_T(nu))`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{argument, Result};
use crate::market::{measure_pair, same_maturity, Curve, DiscreteMeasure, TenorStructure, MATURITY_TOL};

/// Forward payoff `g`, applied to the forward underlying `X^_T = P^_T(mu)`.
///
/// Derivatives use the left-closed convention at kinks: `g'(x) = 1{x > k}`
/// for a call struck at `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payoff {
    /// `(x - strike)^+`
    Call { strike: f64 },
    /// `(strike - x)^+`
    Put { strike: f64 },
    /// `slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `(x - lower)^+ - (x - upper)^+`
    CallSpread { lower: f64, upper: f64 },
}

impl Payoff {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Put { strike } => (strike - x).max(0.0),
            Payoff::Affine { slope, intercept } => slope * x + intercept,
            Payoff::CallSpread { lower, upper } => (x - lower).max(0.0) - (x - upper).max(0.0),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let step = |k: f64| if x > k { 1.0 } else { 0.0 };
        match *self {
            Payoff::Call { strike } => step(strike),
            Payoff::Put { strike } => step(strike) - 1.0,
            Payoff::Affine { slope, .. } => slope,
            Payoff::CallSpread { lower, upper } => step(lower) - step(upper),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Payoff::Affine { slope, .. } => slope.abs(),
            _ => 1.0,
        }
    }

    /// Strike of a plain call, if this is one.
    pub fn call_strike(&self) -> Option<f64> {
        match *self {
            Payoff::Call { strike } => Some(strike),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Payoff::Call { strike } | Payoff::Put { strike } => strike.is_finite() && strike >= 0.0,
            Payoff::Affine { slope, intercept } => slope.is_finite() && intercept.is_finite(),
            Payoff::CallSpread { lower, upper } => lower.is_finite() && upper.is_finite() && lower <= upper,
        };
        if ok {
            Ok(())
        } else {
            Err(argument(format!("invalid payoff parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstrumentKind {
    Exchange,
    BondCall,
    Caplet,
    Swaption,
    Generic,
}

impl InstrumentKind {
    pub fn name(&self) -> &'static str {
        match self {
            InstrumentKind::Exchange => "exchange",
            InstrumentKind::BondCall => "bond-call",
            InstrumentKind::Caplet => "caplet",
            InstrumentKind::Swaption => "swaption",
            InstrumentKind::Generic => "generic",
        }
    }
}

/// Payoff descriptor: basket `mu`, numeraire `nu`, exercise `T`, settlement `S`
/// and forward payoff `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSpec {
    kind: InstrumentKind,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    exercise: f64,
    settlement: f64,
    strike: f64,
    payoff: Payoff,
    tenor: Option<TenorStructure>,
}

impl InstrumentSpec {
    fn build(
        kind: InstrumentKind,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        exercise: f64,
        settlement: f64,
        strike: f64,
        payoff: Payoff,
        tenor: Option<TenorStructure>,
    ) -> Result<Self> {
        if !(exercise.is_finite() && exercise > 0.0) {
            return Err(argument(format!("exercise date {exercise} must be > 0")));
        }
        if settlement < exercise - MATURITY_TOL {
            return Err(argument(format!("settlement {settlement} precedes exercise {exercise}")));
        }
        if mu.is_empty() {
            return Err(argument("payoff basket mu is empty"));
        }
        mu.validate_support(exercise)?;
        nu.validate_numeraire(exercise)?;
        payoff.validate()?;
        Ok(Self { kind, mu, nu, exercise, settlement, strike, payoff, tenor })
    }

    /// Call on `P_T(U)` struck at `strike`, numeraire `P(T)`.
    pub fn bond_call(exercise: f64, bond_maturity: f64, strike: f64) -> Result<Self> {
        if bond_maturity < exercise {
            return Err(argument(format!(
                "bond maturity {bond_maturity} precedes exercise {exercise}"
            )));
        }
        Self::build(
            InstrumentKind::BondCall,
            DiscreteMeasure::dirac(bond_maturity),
            DiscreteMeasure::dirac(exercise),
            exercise,
            exercise,
            strike,
            Payoff::Call { strike },
            None,
        )
    }

    /// Caplet on `L(T, T, S)` struck at `rate`: `X^ = P(T)/P(S)` against
    /// `1 + rate (S - T)`.
    pub fn caplet(exercise: f64, settlement: f64, rate: f64) -> Result<Self> {
        if !(settlement > exercise) {
            return Err(argument(format!("caplet settlement {settlement} must follow exercise {exercise}")));
        }
        let k_eff = 1.0 + rate * (settlement - exercise);
        Self::build(
            InstrumentKind::Caplet,
            DiscreteMeasure::dirac(exercise),
            DiscreteMeasure::dirac(settlement),
            exercise,
            settlement,
            rate,
            Payoff::Call { strike: k_eff },
            None,
        )
    }

    /// Payer swaption on the swap rate of `tenor` struck at `rate`.
    pub fn swaption(tenor: TenorStructure, rate: f64) -> Result<Self> {
        let exercise = tenor.exercise();
        Self::build(
            InstrumentKind::Swaption,
            tenor.swap_measure(),
            tenor.annuity_measure(),
            exercise,
            exercise,
            rate,
            Payoff::Call { strike: rate },
            Some(tenor),
        )
    }

    /// `(P_T(mu) - strike P_T(nu))^+`.
    pub fn exchange(mu: DiscreteMeasure, nu: DiscreteMeasure, exercise: f64, strike: f64) -> Result<Self> {
        Self::build(
            InstrumentKind::Exchange,
            mu,
            nu,
            exercise,
            exercise,
            strike,
            Payoff::Call { strike },
            None,
        )
    }

    pub fn generic(
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        exercise: f64,
        settlement: f64,
        payoff: Payoff,
    ) -> Result<Self> {
        let strike = payoff.call_strike().unwrap_or(0.0);
        Self::build(InstrumentKind::Generic, mu, nu, exercise, settlement, strike, payoff, None)
    }

    pub fn kind(&self) -> InstrumentKind {
        self.kind
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn exercise(&self) -> f64 {
        self.exercise
    }

    pub fn settlement(&self) -> f64 {
        self.settlement
    }

    /// Quoted strike: price strike for bond and exchange options, rate strike
    /// for caplets and swaptions.
    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn tenor(&self) -> Option<&TenorStructure> {
        self.tenor.as_ref()
    }

    /// Sorted union of the supports of `mu` and `nu`.
    pub fn support(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.mu.maturities().collect();
        for m in self.nu.maturities() {
            if !out.iter().any(|&o| same_maturity(o, m)) {
                out.push(m);
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    /// `P(mu) / P(nu)` on any curve (equals `P^(mu)` on a forward curve).
    pub fn underlying<C: Curve + ?Sized>(&self, curve: &C) -> Result<f64> {
        Ok(measure_pair(curve, &self.mu)? / measure_pair(curve, &self.nu)?)
    }

    #[inline]
    pub fn forward_payoff(&self, x: f64) -> f64 {
        self.payoff.value(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn payoff_derivative_convention() {
        let c = Payoff::Call { strike: 1.0 };
        assert_eq!(c.derivative(1.0), 0.0);
        assert_eq!(c.derivative(1.0 + 1e-15), 1.0);
        let p = Payoff::Put { strike: 1.0 };
        assert_eq!(p.derivative(0.5), -1.0);
        assert_eq!(p.derivative(1.5), 0.0);
        let s = Payoff::CallSpread { lower: 1.0, upper: 2.0 };
        assert_eq!(s.value(3.0), 1.0);
        assert_eq!(s.derivative(1.5), 1.0);
        assert_eq!(s.derivative(2.5), 0.0);
    }

    #[test]
    fn instrument_measures() {
        let b = InstrumentSpec::bond_call(1.0, 2.0, 0.95).unwrap();
        assert_eq!(b.mu(), &DiscreteMeasure::dirac(2.0));
        assert_eq!(b.nu(), &DiscreteMeasure::dirac(1.0));
        assert_eq!(b.support(), vec![1.0, 2.0]);

        let c = InstrumentSpec::caplet(1.0, 1.5, 0.04).unwrap();
        assert_eq!(c.payoff().call_strike(), Some(1.0 + 0.04 * 0.5));

        let t = TenorStructure::new(vec![1.0, 1.5, 2.0], 1.0, 1.0).unwrap();
        let s = InstrumentSpec::swaption(t, 0.03).unwrap();
        assert_eq!(s.support(), vec![1.0, 1.5, 2.0]);
        assert_eq!(s.mu().weight_at(2.0), -1.0);
        assert_eq!(s.nu().weight_at(2.0), 0.5);
    }

    #[test]
    fn rejects_inconsistent_instruments() {
        assert!(InstrumentSpec::bond_call(2.0, 1.0, 0.9).is_err());
        assert!(InstrumentSpec::caplet(1.0, 1.0, 0.02).is_err());
        let nu = DiscreteMeasure::from_pairs(&[(1.0, -1.0)]).unwrap();
        assert!(InstrumentSpec::exchange(DiscreteMeasure::dirac(2.0), nu, 1.0, 1.0).is_err());
    }
}
