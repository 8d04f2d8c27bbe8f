//! Hedging strategies for `xi = P_S(nu) g(P_T(mu) / P_T(nu))`.
//!
//! A strategy at date `t` is a signed measure `phi_t` of bond holdings plus a
//! numeraire position `eta_t`; in forward units its value is
//! `V^_t = <phi_t, P^_t> + eta_t`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::analytic::{call_terms, effective_vol, GbmForwardModel, SigmaHat};
use crate::error::{argument, domain, Result};
use crate::instrument::{InstrumentKind, InstrumentSpec, Payoff};
use crate::market::{measure_pair, same_maturity, Atom, BondCurve, Curve, DiscreteMeasure, ForwardCurve};
use crate::math::{exp, sqrt};
use crate::nested::{conditional_expectation, conditional_expectation_with_law, InnerLaw, NestedConfig};
use crate::rng::{fill_normals, SeedSpec};
use crate::stats::Moments;
use crate::vol::VolSurface;

/// Relative finite-difference step for the delta of a generic payoff.
pub const DELTA_FD_STEP: f64 = 1e-4;

/// One strategy evaluation at one date.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyEstimate {
    pub time: f64,
    /// Bond holdings; atoms on `support(mu) u support(nu)`.
    pub phi: DiscreteMeasure,
    /// Standard errors aligned with `phi.atoms()` (zero for closed forms).
    pub phi_se: Vec<f64>,
    /// Forward price `V^_t` of the claim implied by the strategy's estimator.
    pub value: f64,
    pub value_se: f64,
    /// `V^_t - <phi_t, P^_t>`.
    pub eta: f64,
    pub eta_se: f64,
}

impl StrategyEstimate {
    fn closed_form(time: f64, phi: DiscreteMeasure, value: f64) -> Self {
        let n = phi.len();
        Self { time, phi, phi_se: vec![0.0; n], value, value_se: 0.0, eta: 0.0, eta_se: 0.0 }
    }

    pub fn se_at(&self, maturity: f64) -> f64 {
        self.phi
            .atoms()
            .iter()
            .position(|a| same_maturity(a.maturity, maturity))
            .map_or(0.0, |i| self.phi_se[i])
    }
}

/// Returns `state` expressed against the instrument's numeraire.
fn forward_state(state: &ForwardCurve, spec: &InstrumentSpec) -> Result<ForwardCurve> {
    if state.time() > spec.exercise() + crate::market::MATURITY_TOL {
        return Err(argument(format!(
            "state dated {} is after exercise {}",
            state.time(),
            spec.exercise()
        )));
    }
    let same = state.numeraire().len() == spec.nu().len()
        && state
            .numeraire()
            .atoms()
            .iter()
            .zip(spec.nu().atoms())
            .all(|(a, b)| same_maturity(a.maturity, b.maturity) && a.weight == b.weight);
    if same {
        Ok(state.clone())
    } else {
        state.renormalize(spec.nu())
    }
}

/// Per-maturity weights of `mu` and `nu` aligned with `spec.support()`.
struct Layout {
    support: Vec<f64>,
    mu: Vec<f64>,
    nu: Vec<f64>,
    start: Vec<f64>,
}

impl Layout {
    fn new(state: &ForwardCurve, spec: &InstrumentSpec) -> Result<Self> {
        let support = spec.support();
        let mu = support.iter().map(|&y| spec.mu().weight_at(y)).collect();
        let nu = support.iter().map(|&y| spec.nu().weight_at(y)).collect();
        let mut start = Vec::with_capacity(support.len());
        for &y in &support {
            let v = state.value(y)?;
            if !(v > 0.0) {
                return Err(domain(format!("forward bond price at {y} is {v}, must be > 0")));
            }
            start.push(v);
        }
        Ok(Self { support, mu, nu, start })
    }

    fn x(&self, p: &[f64]) -> f64 {
        self.mu.iter().zip(p).map(|(w, v)| w * v).sum()
    }

    /// Writes `phi_j` samples, then `V`, then `eta`, given `g(x)` and `g'(x)`.
    #[inline]
    fn fill(&self, p: &[f64], g: f64, gp: f64, out: &mut [f64]) {
        let x = self.x(p);
        let c = g - x * gp;
        let m = self.support.len();
        let mut held = 0.0;
        for j in 0..m {
            let r = p[j] / self.start[j];
            let phi = (self.mu[j] * gp + self.nu[j] * c) * r;
            out[j] = phi;
            held += self.start[j] * phi;
        }
        out[m] = g;
        out[m + 1] = g - held;
    }

    fn finish(&self, time: f64, mean: &[f64], se: &[f64]) -> StrategyEstimate {
        let m = self.support.len();
        let atoms = self.support.iter().zip(mean).map(|(&y, &w)| Atom::new(y, w)).collect();
        let phi = DiscreteMeasure::from_sorted_unchecked(atoms);
        let held: f64 = self.start.iter().zip(mean).map(|(s, w)| s * w).sum();
        StrategyEstimate {
            time,
            phi,
            phi_se: se[..m].to_vec(),
            value: mean[m],
            value_se: se[m],
            eta: mean[m] - held,
            eta_se: se[m + 1],
        }
    }
}

/// Clark–Ocone strategy:
/// `phi_t = E^[g'(X^_T) P^_T(y)/P^_t(y)] mu + E^[(g - X^_T g')(X^_T) P^_T(y)/P^_t(y)] nu`,
/// with the conditional expectations estimated by inner Monte Carlo from the
/// time-`t` state alone.
pub fn clark_ocone_strategy(
    state: &ForwardCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<StrategyEstimate> {
    let state = forward_state(state, spec)?;
    let layout = Layout::new(&state, spec)?;
    let payoff = *spec.payoff();
    let m = layout.support.len();
    let est = conditional_expectation(vol, &state, spec.exercise(), &layout.support, config, seeds, m + 2, |p, out| {
        let x = layout.x(p);
        layout.fill(p, payoff.value(x), payoff.derivative(x), out);
    })?;
    Ok(layout.finish(state.time(), &est.mean, &est.se))
}

/// As [`clark_ocone_strategy`] with a prebuilt inner law over `spec.support()`.
pub fn clark_ocone_strategy_with_law(
    state: &ForwardCurve,
    spec: &InstrumentSpec,
    law: &InnerLaw,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<StrategyEstimate> {
    let state = forward_state(state, spec)?;
    let layout = Layout::new(&state, spec)?;
    check_law(law, &layout.support, spec.exercise())?;
    let payoff = *spec.payoff();
    let m = layout.support.len();
    let est = conditional_expectation_with_law(law, &state, config, seeds, m + 2, |p, out| {
        let x = layout.x(p);
        layout.fill(p, payoff.value(x), payoff.derivative(x), out);
    })?;
    Ok(layout.finish(state.time(), &est.mean, &est.se))
}

fn check_law(law: &InnerLaw, support: &[f64], horizon: f64) -> Result<()> {
    let ok = law.maturities().len() == support.len()
        && law.maturities().iter().zip(support).all(|(a, b)| same_maturity(*a, *b))
        && same_maturity(law.horizon(), horizon);
    if ok {
        Ok(())
    } else {
        Err(argument("inner law does not match the instrument support and exercise date"))
    }
}

/// The specialized strategies for built-in instruments: closed forms for bond
/// calls and caplets (lognormal `P^(mu)` with the effective volatility), inner
/// Monte Carlo of `E^[1{X^_T > k} P^_T(y)/P^_t(y)] (mu - k nu)` for exchange
/// options and swaptions.
pub fn instrument_strategy(
    state: &ForwardCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<StrategyEstimate> {
    let state = forward_state(state, spec)?;
    match spec.kind() {
        InstrumentKind::Generic => Err(argument(
            "generic instruments have no specialized strategy; use clark_ocone_strategy",
        )),
        InstrumentKind::BondCall | InstrumentKind::Caplet => {
            let sigma = effective_vol::<BondCurve>(vol, spec, None)?;
            let model = GbmForwardModel::new(sigma, 1.0)?;
            let v = model.integrated_vol(state.time(), spec.exercise())?;
            let x = spec.underlying(&state)?;
            let k = spec.payoff().call_strike().expect("built-in kinds are calls");
            let (p, q) = call_terms(k, x, v);
            let phi = spec.mu().scaled(p).plus_scaled(-k * q, spec.nu());
            Ok(StrategyEstimate::closed_form(state.time(), phi, x * p - k * q))
        }
        InstrumentKind::Exchange | InstrumentKind::Swaption => {
            let layout = Layout::new(&state, spec)?;
            let k = spec.payoff().call_strike().expect("built-in kinds are calls");
            let m = layout.support.len();
            let est =
                conditional_expectation(vol, &state, spec.exercise(), &layout.support, config, seeds, m + 2, |p, out| {
                    let x = layout.x(p);
                    let hit = if x > k { 1.0 } else { 0.0 };
                    let mut held = 0.0;
                    for j in 0..m {
                        let phi = hit * p[j] / layout.start[j] * (layout.mu[j] - k * layout.nu[j]);
                        out[j] = phi;
                        held += layout.start[j] * phi;
                    }
                    out[m] = hit * (x - k);
                    out[m + 1] = out[m] - held;
                })?;
            Ok(layout.finish(state.time(), &est.mean, &est.se))
        }
    }
}

/// Delta strategy `phi_t = dC/dx mu + (C - X^_t dC/dx) nu` under the lognormal
/// forward model. Calls use `dC/dx = Phi+`; other payoffs price `C` by Monte
/// Carlo on the lognormal law and differentiate by central differences with
/// common random numbers.
pub fn delta_strategy(
    state: &ForwardCurve,
    spec: &InstrumentSpec,
    model: &GbmForwardModel,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<StrategyEstimate> {
    let state = forward_state(state, spec)?;
    let v = model.integrated_vol(state.time(), spec.exercise())?;
    let x = spec.underlying(&state)?;
    if !(x > 0.0) {
        return Err(domain(format!("lognormal forward model needs X^_t > 0, got {x}")));
    }
    if let Some(k) = spec.payoff().call_strike() {
        let (p, q) = call_terms(k, x, v);
        let phi = spec.mu().scaled(p).plus_scaled(-k * q, spec.nu());
        return Ok(StrategyEstimate::closed_form(state.time(), phi, x * p - k * q));
    }
    let lp = lognormal_price_delta(spec.payoff(), x, v, config, seeds)?;
    let phi = spec.mu().scaled(lp.delta).plus_scaled(lp.price - x * lp.delta, spec.nu());
    let mut out = StrategyEstimate::closed_form(state.time(), phi, lp.price);
    out.value_se = lp.price_se;
    out.phi_se = out
        .phi
        .atoms()
        .iter()
        .map(|a| {
            let (m, n) = (spec.mu().weight_at(a.maturity), spec.nu().weight_at(a.maturity));
            m.abs() * lp.delta_se + n.abs() * (lp.price_se + x * lp.delta_se)
        })
        .collect();
    Ok(out)
}

/// Forward price `C^(t, x)` and `dC/dx` when `X^_T = x exp(v Z - v^2/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalGreeks {
    pub price: f64,
    pub price_se: f64,
    pub delta: f64,
    pub delta_se: f64,
}

/// Closed form for calls; otherwise antithetic Monte Carlo with a central
/// difference of relative step [`DELTA_FD_STEP`] on common random numbers.
pub fn lognormal_price_delta(
    payoff: &Payoff,
    x: f64,
    v: f64,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<LognormalGreeks> {
    if let Some(k) = payoff.call_strike() {
        let (p, q) = call_terms(k, x, v);
        return Ok(LognormalGreeks { price: x * p - k * q, price_se: 0.0, delta: p, delta_se: 0.0 });
    }
    if v == 0.0 {
        let h = DELTA_FD_STEP * x;
        let delta = (payoff.value(x + h) - payoff.value(x - h)) / (2.0 * h);
        return Ok(LognormalGreeks { price: payoff.value(x), price_se: 0.0, delta, delta_se: 0.0 });
    }
    config.validate()?;
    let h = DELTA_FD_STEP * x;
    let n = config.inner_paths.div_ceil(2);
    let mut rng = seeds.path_rng(0);
    let mut z = [0.0];
    let (mut price, mut slope) = (Moments::default(), Moments::default());
    for _ in 0..n {
        fill_normals(&mut rng, &mut z);
        let (mut c, mut d) = (0.0, 0.0);
        for s in [1.0, -1.0] {
            let f = exp(s * v * z[0] - 0.5 * v * v);
            c += 0.5 * payoff.value(x * f);
            d += 0.5 * (payoff.value((x + h) * f) - payoff.value((x - h) * f)) / (2.0 * h);
        }
        price.push(c);
        slope.push(d);
    }
    Ok(LognormalGreeks { price: price.mean(), price_se: price.se(), delta: slope.mean(), delta_se: slope.se() })
}

/// Jamshidian's grouping of the swaption delta strategy as legs
/// `Phi+ d_{T_i} - Phi+ d_{T_j} - k Phi- sum_k tau_k d_{T_{k+1}}`, kept
/// unmerged (so `T_j` may appear twice).
pub fn jamshidian_legs(
    state: &ForwardCurve,
    spec: &InstrumentSpec,
    model: &GbmForwardModel,
) -> Result<Vec<(f64, f64)>> {
    let tenor = match (spec.kind(), spec.tenor()) {
        (InstrumentKind::Swaption, Some(t)) => t,
        _ => return Err(argument("Jamshidian legs are defined for swaptions only")),
    };
    let state = forward_state(state, spec)?;
    let v = model.integrated_vol(state.time(), spec.exercise())?;
    let x = spec.underlying(&state)?;
    if !(x > 0.0) {
        return Err(domain(format!("lognormal swap model needs a positive swap rate, got {x}")));
    }
    let k = spec.strike();
    let (p, q) = call_terms(k, x, v);
    let dates = tenor.maturities();
    let mut legs = vec![(dates[0], p), (dates[dates.len() - 1], -p)];
    for w in dates.windows(2) {
        legs.push((w[1], -k * q * (w[1] - w[0])));
    }
    Ok(legs)
}

/// `sum w P(y)` over unmerged legs.
pub fn legs_value<C: Curve + ?Sized>(curve: &C, legs: &[(f64, f64)]) -> Result<f64> {
    legs.iter().map(|&(y, w)| curve.value(y).map(|p| w * p)).sum()
}

/// Forward value `<phi, P^_t> + eta`; multiply by `P_t(nu)` for cash.
pub fn hedge_value(state: &ForwardCurve, phi: &DiscreteMeasure, eta: f64) -> Result<f64> {
    Ok(measure_pair(state, phi)? + eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// Closed-form or finite-difference delta under the lognormal forward model.
    Delta,
    /// Nested Monte Carlo Clark–Ocone portfolio.
    ClarkOcone,
    /// Specialized per-instrument formulas.
    Instrument,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Delta => "delta",
            StrategyKind::ClarkOcone => "clark-ocone",
            StrategyKind::Instrument => "instrument",
        }
    }
}

/// Everything needed to evaluate one strategy family at arbitrary states.
#[derive(Debug, Clone)]
pub struct Hedger {
    spec: InstrumentSpec,
    vol: VolSurface,
    kind: StrategyKind,
    config: NestedConfig,
    model: Option<GbmForwardModel>,
}

impl Hedger {
    /// `curve0` freezes swaption weights for the delta model.
    pub fn new<C: Curve + ?Sized>(
        spec: InstrumentSpec,
        vol: VolSurface,
        kind: StrategyKind,
        config: NestedConfig,
        curve0: Option<&C>,
    ) -> Result<Self> {
        let model = match kind {
            StrategyKind::Delta => Some(GbmForwardModel::new(effective_vol(&vol, &spec, curve0)?, 1.0)?),
            _ => None,
        };
        Ok(Self { spec, vol, kind, config, model })
    }

    /// Delta hedger with an explicit lognormal model.
    pub fn with_model(spec: InstrumentSpec, vol: VolSurface, model: GbmForwardModel, config: NestedConfig) -> Self {
        Self { spec, vol, kind: StrategyKind::Delta, config, model: Some(model) }
    }

    pub fn spec(&self) -> &InstrumentSpec {
        &self.spec
    }

    pub fn vol(&self) -> &VolSurface {
        &self.vol
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn config(&self) -> &NestedConfig {
        &self.config
    }

    pub fn model(&self) -> Option<&GbmForwardModel> {
        self.model.as_ref()
    }

    pub fn sigma(&self) -> Option<&SigmaHat> {
        self.model.as_ref().map(GbmForwardModel::sigma)
    }

    pub fn evaluate(&self, state: &ForwardCurve, seeds: &SeedSpec) -> Result<StrategyEstimate> {
        match self.kind {
            StrategyKind::Delta => {
                let model = self.model.as_ref().expect("delta hedger has a model");
                delta_strategy(state, &self.spec, model, &self.config, seeds)
            }
            StrategyKind::ClarkOcone => clark_ocone_strategy(state, &self.spec, &self.vol, &self.config, seeds),
            StrategyKind::Instrument => instrument_strategy(state, &self.spec, &self.vol, &self.config, seeds),
        }
    }

    /// As [`Hedger::evaluate`], reusing `law` for Clark–Ocone evaluations.
    pub fn evaluate_with_law(
        &self,
        state: &ForwardCurve,
        law: Option<&InnerLaw>,
        seeds: &SeedSpec,
    ) -> Result<StrategyEstimate> {
        match (self.kind, law) {
            (StrategyKind::ClarkOcone, Some(law)) => {
                clark_ocone_strategy_with_law(state, &self.spec, law, &self.config, seeds)
            }
            _ => self.evaluate(state, seeds),
        }
    }
}

/// Strategies along one path at the rebalance dates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HedgeLedger {
    pub dates: Vec<f64>,
    pub strategies: Vec<DiscreteMeasure>,
    pub eta: Vec<f64>,
    pub phi_se: Vec<Vec<f64>>,
    pub eta_se: Vec<f64>,
    pub values: Vec<f64>,
    pub value_se: Vec<f64>,
}

impl HedgeLedger {
    pub fn push(&mut self, e: StrategyEstimate) {
        self.dates.push(e.time);
        self.strategies.push(e.phi);
        self.eta.push(e.eta);
        self.phi_se.push(e.phi_se);
        self.eta_se.push(e.eta_se);
        self.values.push(e.value);
        self.value_se.push(e.value_se);
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Standard error of `<phi, P^_t>` treating atom errors as independent (an
/// upper bound is not needed here; the figure is diagnostic).
pub fn holding_se(state: &ForwardCurve, estimate: &StrategyEstimate) -> Result<f64> {
    let mut var = 0.0;
    for (a, se) in estimate.phi.atoms().iter().zip(&estimate.phi_se) {
        let p = state.value(a.maturity)?;
        var += (p * se) * (p * se);
    }
    Ok(sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::phi_terms;
    use crate::market::{forward_normalize, TenorStructure};

    fn curve(t: f64) -> BondCurve {
        BondCurve::new(t, [1.0, 1.5, 2.0].iter().map(|&y| (y, libm::exp(-0.03 * y))).collect()).unwrap()
    }

    #[test]
    fn delta_call_weights() {
        let spec = InstrumentSpec::bond_call(1.0, 2.0, 1.0).unwrap();
        // Pick a curve with P(2)/P(1) = 1 so that x = k = 1.
        let c = BondCurve::new(0.0, vec![(1.0, 0.9), (2.0, 0.9)]).unwrap();
        let st = forward_normalize(&c, spec.nu()).unwrap();
        let v = 0.2;
        let model = GbmForwardModel::new(SigmaHat::Constant(vec![v]), 1.0).unwrap();
        let e = delta_strategy(&st, &spec, &model, &NestedConfig::default(), &SeedSpec::new(0)).unwrap();
        assert!((e.phi.weight_at(2.0) - 0.539827837277029).abs() < 1e-12);
        assert!((e.phi.weight_at(1.0) + 0.460172162722971).abs() < 1e-12);
        assert_eq!(e.eta, 0.0);
    }

    #[test]
    fn swaption_delta_half_weights() {
        let dates = vec![1.0, 1.5, 2.0];
        let (p1, p15) = (1.0, 0.99);
        // Bonds with swap rate 0.02: p2 = (p1 - 0.5 k p15) / (1 + 0.5 k).
        let p2 = (p1 - 0.5 * 0.02 * p15) / (1.0 + 0.5 * 0.02);
        let c = BondCurve::new(0.0, vec![(1.0, p1), (1.5, p15), (2.0, p2)]).unwrap();
        let probe = InstrumentSpec::swaption(TenorStructure::new(dates.clone(), 1.0, 1.0).unwrap(), 0.02).unwrap();
        let st = forward_normalize(&c, probe.nu()).unwrap();
        // Strike exactly at the computed forward swap rate, so the zero-vol
        // terms take the half-weight convention.
        let k = probe.underlying(&st).unwrap();
        assert!((k - 0.02).abs() < 1e-15);
        let spec = InstrumentSpec::swaption(TenorStructure::new(dates, 1.0, 1.0).unwrap(), k).unwrap();
        let model = GbmForwardModel::new(SigmaHat::Constant(vec![0.0]), 1.0).unwrap();
        let e = delta_strategy(&st, &spec, &model, &NestedConfig::default(), &SeedSpec::new(0)).unwrap();
        assert_eq!(e.phi.weight_at(1.0), 0.5);
        assert!((e.phi.weight_at(2.0) + 0.505).abs() < 1e-15);
        assert!((e.phi.weight_at(1.5) + 0.005).abs() < 1e-15);
    }

    #[test]
    fn jamshidian_matches_delta_portfolio() {
        let tenor = TenorStructure::new(vec![1.0, 1.5, 2.0], 1.0, 1.0).unwrap();
        let spec = InstrumentSpec::swaption(tenor, 0.03).unwrap();
        let c = curve(0.0);
        let st = forward_normalize(&c, spec.nu()).unwrap();
        let model = GbmForwardModel::new(SigmaHat::Constant(vec![0.15]), 1.0).unwrap();
        let e = delta_strategy(&st, &spec, &model, &NestedConfig::default(), &SeedSpec::new(0)).unwrap();
        let legs = jamshidian_legs(&st, &spec, &model).unwrap();
        let a = hedge_value(&st, &e.phi, e.eta).unwrap();
        let b = legs_value(&st, &legs).unwrap();
        assert!((a - b).abs() < 1e-12);
        let (p, q) = phi_terms(0.03, spec.underlying(&st).unwrap(), model.integrated_vol(0.0, 1.0).unwrap()).unwrap();
        assert!((a - (spec.underlying(&st).unwrap() * p - 0.03 * q)).abs() < 1e-12);
    }

    #[test]
    fn instrument_limits() {
        let vol = VolSurface::ho_lee(0.01);
        let bc = InstrumentSpec::bond_call(1.0, 2.0, 0.0).unwrap();
        let st = forward_normalize(&curve(0.0), bc.nu()).unwrap();
        let e = instrument_strategy(&st, &bc, &vol, &NestedConfig::default(), &SeedSpec::new(0)).unwrap();
        assert_eq!(e.phi.weight_at(2.0), 1.0);
        assert_eq!(e.phi.weight_at(1.0), 0.0);

        let cap = InstrumentSpec::caplet(1.0, 1.5, 0.0).unwrap();
        // x / k_eff = P(1)/P(1.5) for k = 0 is close to 1; push it deep in the money.
        let deep = BondCurve::new(0.0, vec![(1.0, 1.0), (1.5, libm::exp(-10.0))]).unwrap();
        let st = forward_normalize(&deep, cap.nu()).unwrap();
        let e = instrument_strategy(&st, &cap, &vol, &NestedConfig::default(), &SeedSpec::new(0)).unwrap();
        assert!((e.phi.weight_at(1.0) - 1.0).abs() < 1e-12);
        assert!((e.phi.weight_at(1.5) + 1.0).abs() < 1e-12);

        let g = InstrumentSpec::generic(DiscreteMeasure::dirac(2.0), DiscreteMeasure::dirac(1.0), 1.0, 1.0, Payoff::Affine { slope: 1.0, intercept: 0.0 }).unwrap();
        assert!(instrument_strategy(&st, &g, &vol, &NestedConfig::default(), &SeedSpec::new(0)).is_err());
    }

    #[test]
    fn clark_ocone_trivial_payoffs() {
        let vol = VolSurface::ho_lee(0.02);
        let mu = DiscreteMeasure::from_pairs(&[(1.5, 1.0), (2.0, 0.5)]).unwrap();
        let nu = DiscreteMeasure::dirac(1.0);
        let cfg = NestedConfig::with_inner_paths(4000);
        let lin = InstrumentSpec::generic(mu.clone(), nu.clone(), 1.0, 1.0, Payoff::Affine { slope: 1.0, intercept: 0.0 }).unwrap();
        let st = forward_normalize(&curve(0.25), lin.nu()).unwrap();
        let e = clark_ocone_strategy(&st, &lin, &vol, &cfg, &SeedSpec::new(9)).unwrap();
        for a in e.phi.atoms() {
            let target = mu.weight_at(a.maturity);
            assert!((a.weight - target).abs() <= 3.0 * e.se_at(a.maturity) + 1e-12, "{e:?}");
        }
        assert!(e.eta.abs() < 1e-12);

        let cst = InstrumentSpec::generic(mu, nu.clone(), 1.0, 1.0, Payoff::Affine { slope: 0.0, intercept: 0.7 }).unwrap();
        let e = clark_ocone_strategy(&st, &cst, &vol, &cfg, &SeedSpec::new(9)).unwrap();
        assert!((e.phi.weight_at(1.0) - 0.7).abs() <= 3.0 * e.se_at(1.0) + 1e-12);
        assert_eq!(e.phi.weight_at(2.0), 0.0);
    }

    #[test]
    fn clark_ocone_is_measurable_in_the_state() {
        let vol = VolSurface::ho_lee(0.02);
        let spec = InstrumentSpec::bond_call(1.0, 2.0, 0.97).unwrap();
        let st = forward_normalize(&curve(0.5), spec.nu()).unwrap();
        let cfg = NestedConfig::with_inner_paths(2000);
        let a = clark_ocone_strategy(&st, &spec, &vol, &cfg, &SeedSpec::new(4)).unwrap();
        let b = clark_ocone_strategy(&st.clone(), &spec, &vol, &cfg, &SeedSpec::new(4)).unwrap();
        assert_eq!(a, b);
    }
}
