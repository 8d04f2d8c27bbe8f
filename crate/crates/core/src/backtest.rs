//! Discrete rebalancing of hedging strategies along simulated paths, in
//! forward (numeraire) units.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::analytic::{call_terms, GbmForwardModel};
use crate::error::{argument, Result};
use crate::hedging::{lognormal_price_delta, HedgeLedger, Hedger, StrategyKind};
use crate::market::{find_node, same_maturity, Curve, DiscreteMeasure, ForwardCurve};
use crate::math::{exp, sqrt};
use crate::nested::{InnerLaw, InnerScheme};
use crate::par;
use crate::rng::{fill_normals, SeedSpec};
use crate::simulation::{CurvePath, ForwardEuler, TimeGrid};
use crate::stats::{log_log_slope, Moments};

const TAG_OUTER: u64 = 0x6274;
const TAG_INNER: u64 = 0x6269;

/// Grid index of every ledger date.
fn ledger_indices(path: &CurvePath, ledger: &HedgeLedger) -> Result<Vec<usize>> {
    if ledger.is_empty() {
        return Err(argument("empty hedge ledger"));
    }
    let mut out = Vec::with_capacity(ledger.len());
    for &t in &ledger.dates {
        let l = path
            .times()
            .iter()
            .position(|&s| same_maturity(s, t))
            .ok_or_else(|| argument(format!("ledger date {t} is not on the path grid")))?;
        out.push(l);
    }
    if out[0] != 0 || out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(argument("ledger dates must start at the path start and increase"));
    }
    Ok(out)
}

/// `<phi, P^_{l+1} - P^_l>` on a path.
fn gain(path: &CurvePath, phi: &DiscreteMeasure, l: usize) -> Result<f64> {
    let (a, b) = (path.row(l), path.row(l + 1));
    let mut s = 0.0;
    for atom in phi.atoms() {
        let j = find_node(path.maturities(), atom.maturity)?;
        s += atom.weight * (b[j] - a[j]);
    }
    Ok(s)
}

fn pair_row(path: &CurvePath, phi: &DiscreteMeasure, l: usize) -> Result<f64> {
    let row = path.row(l);
    let mut s = 0.0;
    for atom in phi.atoms() {
        s += atom.weight * row[find_node(path.maturities(), atom.maturity)?];
    }
    Ok(s)
}

/// `V^_{l+1} = V^_l + <phi, P^_{l+1} - P^_l>` with holdings held between ledger
/// dates. Returns the value at every grid date of a forward-unit path.
pub fn rollforward(path: &CurvePath, ledger: &HedgeLedger, v0: f64) -> Result<Vec<f64>> {
    let idx = ledger_indices(path, ledger)?;
    let mut values = Vec::with_capacity(path.steps() + 1);
    values.push(v0);
    let mut k = 0;
    for l in 0..path.steps() {
        while k + 1 < idx.len() && idx[k + 1] <= l {
            k += 1;
        }
        let v = values[l] + gain(path, &ledger.strategies[k], l)?;
        values.push(v);
    }
    Ok(values)
}

/// Gaps between mark-to-market `<phi_k, P^> + eta_k` and the rolled-forward
/// value at each ledger date.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfFinancingGaps {
    /// `|MtM_k - V^roll(t_k)|` with `V^roll` rolled from `MtM_0`.
    pub cumulative: Vec<f64>,
    /// One-rebalance defect `|MtM_k - MtM_{k-1} - <phi_{k-1}, P^(t_k) - P^(t_{k-1})>|`
    /// (zero at the first date).
    pub rebalance: Vec<f64>,
}

impl SelfFinancingGaps {
    pub fn max_cumulative(&self) -> f64 {
        self.cumulative.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_rebalance(&self) -> f64 {
        self.rebalance.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn self_financing_check(path: &CurvePath, ledger: &HedgeLedger) -> Result<SelfFinancingGaps> {
    let idx = ledger_indices(path, ledger)?;
    let mtm: Vec<f64> = idx
        .iter()
        .zip(&ledger.strategies)
        .zip(&ledger.eta)
        .map(|((&l, phi), eta)| pair_row(path, phi, l).map(|v| v + eta))
        .collect::<Result<_>>()?;
    let rolled = rollforward(path, ledger, mtm[0])?;
    let cumulative = idx.iter().zip(&mtm).map(|(&l, m)| (m - rolled[l]).abs()).collect();
    let mut rebalance = vec![0.0];
    for k in 1..idx.len() {
        let carried = mtm[k - 1] + (rolled[idx[k]] - rolled[idx[k - 1]]);
        rebalance.push((mtm[k] - carried).abs());
    }
    Ok(SelfFinancingGaps { cumulative, rebalance })
}

/// Where the backtest paths come from.
#[derive(Debug, Clone)]
pub enum World {
    /// Forward curves under the forward measure (log-Euler), driven by the
    /// hedger's volatility surface.
    Curve { initial: ForwardCurve },
    /// The forward price alone, as an exact geometric Brownian motion.
    Gbm { model: GbmForwardModel },
}

impl World {
    pub fn name(&self) -> &'static str {
        match self {
            World::Curve { .. } => "curve",
            World::Gbm { .. } => "gbm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub paths: usize,
    pub steps: Vec<usize>,
    pub rebalance_every: usize,
}

/// One step count of a replication study.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRow {
    pub steps: usize,
    pub dt: f64,
    pub paths: usize,
    pub price: f64,
    pub price_se: f64,
    pub mean_error: f64,
    pub sd_error: f64,
    pub se_error: f64,
    pub max_abs_error: f64,
    /// Per rebalance date: max over paths of the cumulative self-financing gap.
    pub gap_by_date: Vec<f64>,
    /// Per rebalance date: max over paths of `|eta|`.
    pub eta_by_date: Vec<f64>,
    /// Per rebalance date: max over paths of the reported `eta` standard error.
    pub eta_se_by_date: Vec<f64>,
    /// Mean of the claim over paths.
    pub claim_mean: f64,
    pub claim_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub strategy: StrategyKind,
    pub world: String,
    pub rebalance_every: usize,
    pub rows: Vec<BacktestRow>,
    /// Slope of `ln sd(error)` against `ln dt`.
    pub slope: Option<f64>,
}

struct PathOutcome {
    error: f64,
    claim: f64,
    v0: f64,
    gaps: Vec<f64>,
    eta: Vec<f64>,
    eta_se: Vec<f64>,
}

/// Rebalance grid indices for `steps` with thinning `every`.
fn rebalance_indices(steps: usize, every: usize) -> Vec<usize> {
    (0..steps).step_by(every.max(1)).collect()
}

/// Evaluates the hedger at the ledger dates of a curve path.
pub fn hedge_along_path(
    hedger: &Hedger,
    path: &CurvePath,
    every: usize,
    laws: Option<&[Option<InnerLaw>]>,
    seeds: &SeedSpec,
) -> Result<HedgeLedger> {
    let mut ledger = HedgeLedger::default();
    for l in rebalance_indices(path.steps(), every) {
        if path.times()[l] >= hedger.spec().exercise() {
            break;
        }
        let state = path.forward_curve(l, hedger.spec().nu())?;
        let law = laws.and_then(|v| v[l].as_ref());
        ledger.push(hedger.evaluate_with_law(&state, law, seeds)?);
    }
    Ok(ledger)
}

fn curve_outcome(hedger: &Hedger, path: &CurvePath, every: usize, laws: &[Option<InnerLaw>], seeds: &SeedSpec) -> Result<PathOutcome> {
    let ledger = hedge_along_path(hedger, path, every, Some(laws), seeds)?;
    let v0 = ledger.values[0];
    let values = rollforward(path, &ledger, v0)?;
    let gaps = self_financing_check(path, &ledger)?.cumulative;
    let terminal = path.forward_curve(path.steps(), hedger.spec().nu())?;
    let claim = hedger.spec().forward_payoff(hedger.spec().underlying(&terminal)?);
    Ok(PathOutcome {
        error: values[path.steps()] - claim,
        claim,
        v0,
        gaps,
        eta: ledger.eta.iter().map(|e| e.abs()).collect(),
        eta_se: ledger.eta_se.clone(),
    })
}

fn gbm_outcome(
    hedger: &Hedger,
    world: &GbmForwardModel,
    grid: &TimeGrid,
    step_sd: &[f64],
    every: usize,
    path_index: u64,
    outer: &SeedSpec,
    inner: &SeedSpec,
) -> Result<PathOutcome> {
    let model = hedger.model().ok_or_else(|| argument("GBM backtests need a delta hedger"))?;
    let spec = hedger.spec();
    let payoff = *spec.payoff();
    let mut rng = outer.path_rng(path_index);
    let mut z = [0.0];
    let mut x = world.x0();
    let mut value = 0.0;
    let mut delta = 0.0;
    let mut gaps = Vec::new();
    let mut v0 = 0.0;
    for l in 0..grid.steps() {
        let t = grid.times()[l];
        if l % every.max(1) == 0 {
            let v = model.integrated_vol(t, spec.exercise())?;
            let g = match payoff.call_strike() {
                Some(k) => {
                    let (p, q) = call_terms(k, x, v);
                    crate::hedging::LognormalGreeks { price: x * p - k * q, price_se: 0.0, delta: p, delta_se: 0.0 }
                }
                None => lognormal_price_delta(&payoff, x, v, hedger.config(), inner)?,
            };
            if l == 0 {
                value = g.price;
                v0 = g.price;
            }
            gaps.push((g.price - value).abs());
            delta = g.delta;
        }
        fill_normals(&mut rng, &mut z);
        let s = step_sd[l];
        let next = x * exp(s * z[0] - 0.5 * s * s);
        value += delta * (next - x);
        x = next;
    }
    let claim = payoff.value(x);
    let n = gaps.len();
    Ok(PathOutcome { error: value - claim, claim, v0, gaps, eta: vec![0.0; n], eta_se: vec![0.0; n] })
}

fn summarize(steps: usize, dt: f64, outcomes: &[PathOutcome]) -> BacktestRow {
    let err = Moments::from_iter(outcomes.iter().map(|o| o.error));
    let claim = Moments::from_iter(outcomes.iter().map(|o| o.claim));
    let price = Moments::from_iter(outcomes.iter().map(|o| o.v0));
    let dates = outcomes.iter().map(|o| o.gaps.len()).max().unwrap_or(0);
    let col_max = |f: &dyn Fn(&PathOutcome) -> &Vec<f64>| -> Vec<f64> {
        (0..dates)
            .map(|k| outcomes.iter().filter_map(|o| f(o).get(k)).cloned().fold(0.0, f64::max))
            .collect()
    };
    BacktestRow {
        steps,
        dt,
        paths: outcomes.len(),
        price: price.mean(),
        price_se: price.se(),
        mean_error: err.mean(),
        sd_error: err.sd(),
        se_error: err.se(),
        max_abs_error: outcomes.iter().map(|o| o.error.abs()).fold(0.0, f64::max),
        gap_by_date: col_max(&|o| &o.gaps),
        eta_by_date: col_max(&|o| &o.eta),
        eta_se_by_date: col_max(&|o| &o.eta_se),
        claim_mean: claim.mean(),
        claim_se: claim.se(),
    }
}

/// Hedges the claim on `config.paths` paths for every step count and reports
/// terminal replication errors `V^_T - xi^`. Path `p` uses inner seeds
/// shared across its dates and independent across paths.
pub fn replication_report(
    hedger: &Hedger,
    world: &World,
    config: &BacktestConfig,
    seeds: &SeedSpec,
) -> Result<BacktestReport> {
    if config.steps.is_empty() || config.steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(argument("step list must be nonempty and increasing"));
    }
    if config.paths < 2 {
        return Err(argument("a backtest needs at least two paths"));
    }
    let spec = hedger.spec();
    let every = config.rebalance_every.max(1);
    let mut rows = Vec::with_capacity(config.steps.len());
    for &steps in &config.steps {
        let outer = seeds.child(TAG_OUTER, steps as u64, 0);
        let outcomes: Vec<PathOutcome> = match world {
            World::Curve { initial } => {
                let initial = if initial.numeraire() == spec.nu() {
                    initial.clone()
                } else {
                    initial.renormalize(spec.nu())?
                };
                let grid = TimeGrid::uniform(initial.time(), spec.exercise(), steps)?;
                let scheme = ForwardEuler::new(&initial, hedger.vol(), &grid)?;
                let nested_exact = hedger.config().scheme == InnerScheme::ExactReweighted;
                let laws: Vec<Option<InnerLaw>> = (0..steps)
                    .map(|l| {
                        if hedger.kind() == StrategyKind::ClarkOcone && nested_exact && l % every == 0 {
                            InnerLaw::new(hedger.vol(), grid.times()[l], spec.exercise(), &spec.support()).map(Some)
                        } else {
                            Ok(None)
                        }
                    })
                    .collect::<Result<_>>()?;
                par::try_map_range(config.paths, |p| {
                    let path = scheme.path(&outer, p as u64);
                    curve_outcome(hedger, &path, every, &laws, &seeds.child(TAG_INNER, steps as u64, p as u64))
                })?
            }
            World::Gbm { model } => {
                let grid = TimeGrid::uniform(0.0, spec.exercise(), steps)?;
                let step_sd: Vec<f64> = (0..steps)
                    .map(|l| sqrt(model.sigma().variance(grid.times()[l], grid.times()[l + 1], 16).max(0.0)))
                    .collect();
                par::try_map_range(config.paths, |p| {
                    gbm_outcome(
                        hedger,
                        model,
                        &grid,
                        &step_sd,
                        every,
                        p as u64,
                        &outer,
                        &seeds.child(TAG_INNER, steps as u64, p as u64),
                    )
                })?
            }
        };
        let dt = (spec.exercise() - outcomes_start(world)) / steps as f64;
        rows.push(summarize(steps, dt, &outcomes));
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.dt, r.sd_error)).collect();
    Ok(BacktestReport {
        strategy: hedger.kind(),
        world: String::from(world.name()),
        rebalance_every: every,
        rows,
        slope: log_log_slope(&points),
    })
}

fn outcomes_start(world: &World) -> f64 {
    match world {
        World::Curve { initial } => initial.time(),
        World::Gbm { .. } => 0.0,
    }
}
