//! Monte Carlo prices of a claim by the two simulation routes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{argument, domain, Error, Result};
use crate::instrument::InstrumentSpec;
use crate::market::{forward_normalize, measure_pair, BondCurve, Curve, ForwardCurve};
use crate::par;
use crate::rng::SeedSpec;
use crate::simulation::{DiscountedExact, ForwardEuler, TimeGrid};
use crate::stats::Moments;
use crate::vol::VolSurface;

/// A claim price in forward and cash units with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    /// `E^[g(X^_T)]`, in units of the numeraire.
    pub forward: f64,
    pub forward_se: f64,
    /// `P_0(nu) E^[g(X^_T)]`.
    pub cash: f64,
    pub cash_se: f64,
    pub paths: usize,
}

fn check(paths: usize, steps: usize) -> Result<()> {
    if paths < 2 || steps == 0 {
        return Err(argument("pricing needs at least two paths and one step"));
    }
    Ok(())
}

/// Price from exact risk-neutral paths: `E[P~_T(nu) g(X_T)]`, divided by
/// `P_0(nu)` for the forward price.
pub fn price_exact(
    curve0: &BondCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    steps: usize,
    paths: usize,
    seeds: &SeedSpec,
) -> Result<PriceEstimate> {
    check(paths, steps)?;
    let numeraire0 = measure_pair(curve0, spec.nu())?;
    if !(numeraire0 > 0.0) {
        return Err(domain("initial numeraire value must be > 0"));
    }
    let grid = TimeGrid::uniform(curve0.time(), spec.exercise(), steps)?;
    let scheme = DiscountedExact::new(curve0, vol, &grid)?;
    let n = curve0.maturities().len();
    let values = par::try_map_range(paths, |p| {
        let mut out = vec![0.0; n];
        scheme.terminal(seeds, p as u64, &mut out);
        let curve = BondCurve::from_parts(spec.exercise(), curve0.maturities().to_vec(), out)?;
        let numeraire = measure_pair(&curve, spec.nu())?;
        Ok::<f64, Error>(numeraire * spec.forward_payoff(measure_pair(&curve, spec.mu())? / numeraire))
    })?;
    let cash = Moments::from_iter(values);
    Ok(PriceEstimate {
        forward: cash.mean() / numeraire0,
        forward_se: cash.se() / numeraire0,
        cash: cash.mean(),
        cash_se: cash.se(),
        paths,
    })
}

/// Price from forward-measure Euler paths: `E^[g(X^_T)]`, times `P_0(nu)`
/// (`numeraire0`) for the cash price.
pub fn price_euler(
    initial: &ForwardCurve,
    numeraire0: f64,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    steps: usize,
    paths: usize,
    seeds: &SeedSpec,
) -> Result<PriceEstimate> {
    check(paths, steps)?;
    let initial = if initial.numeraire() == spec.nu() { initial.clone() } else { initial.renormalize(spec.nu())? };
    let grid = TimeGrid::uniform(initial.time(), spec.exercise(), steps)?;
    let scheme = ForwardEuler::new(&initial, vol, &grid)?;
    let values = par::try_map_range(paths, |p| {
        let path = scheme.path(seeds, p as u64);
        let terminal = path.forward_curve(steps, spec.nu())?;
        Ok::<f64, Error>(spec.forward_payoff(spec.underlying(&terminal)?))
    })?;
    let fwd = Moments::from_iter(values);
    Ok(PriceEstimate {
        forward: fwd.mean(),
        forward_se: fwd.se(),
        cash: fwd.mean() * numeraire0,
        cash_se: fwd.se() * numeraire0,
        paths,
    })
}

/// Sample means and standard errors of `P^_T(y)` for each maturity in `ys`,
/// by both routes: reweighted exact paths and Euler paths.
pub fn martingale_means(
    curve0: &BondCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    ys: &[f64],
    steps: usize,
    paths: usize,
    seeds: &SeedSpec,
) -> Result<[Vec<(f64, f64)>; 2]> {
    check(paths, steps)?;
    let numeraire0 = measure_pair(curve0, spec.nu())?;
    let grid = TimeGrid::uniform(curve0.time(), spec.exercise(), steps)?;
    let exact = DiscountedExact::new(curve0, vol, &grid)?;
    let n = curve0.maturities().len();
    let rows = par::try_map_range(paths, |p| {
        let mut out = vec![0.0; n];
        exact.terminal(seeds, p as u64, &mut out);
        let curve = BondCurve::from_parts(spec.exercise(), curve0.maturities().to_vec(), out)?;
        // The density times P^_T(y) is P~_T(y) / P~_0(nu).
        ys.iter().map(|&y| Ok(curve.value(y)? / numeraire0)).collect::<Result<Vec<f64>>>()
    })?;
    let initial = forward_normalize(curve0, spec.nu())?;
    let euler = ForwardEuler::new(&initial, vol, &grid)?;
    let euler_seeds = seeds.child(0x6575, 0, 0);
    let euler_rows = par::try_map_range(paths, |p| {
        let path = euler.path(&euler_seeds, p as u64);
        let terminal = path.forward_curve(steps, spec.nu())?;
        ys.iter().map(|&y| terminal.value(y)).collect::<Result<Vec<f64>>>()
    })?;
    let summarize = |rows: &[Vec<f64>]| -> Vec<(f64, f64)> {
        (0..ys.len())
            .map(|k| {
                let m = Moments::from_iter(rows.iter().map(|r| r[k]));
                (m.mean(), m.se())
            })
            .collect()
    };
    Ok([summarize(&rows), summarize(&euler_rows)])
}
