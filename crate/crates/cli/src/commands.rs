//! The four studies: `price`, `hedge`, `backtest` and `verify`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use curvehedge_core::analytic::{effective_vol, forward_call_price, phi_terms, GbmForwardModel, CONSISTENCY_TOL};
use curvehedge_core::backtest::{replication_report, BacktestConfig, World};
use curvehedge_core::hedging::{
    clark_ocone_strategy, delta_strategy, hedge_value, instrument_strategy, jamshidian_legs, legs_value, Hedger,
    StrategyKind,
};
use curvehedge_core::malliavin::{malliavin_derivative, pathwise_bump, representation_study};
use curvehedge_core::market::{forward_normalize, measure_pair, same_maturity, Curve, NORMALIZATION_TOL};
use curvehedge_core::nested::NestedConfig;
use curvehedge_core::pricing::{martingale_means, price_euler, price_exact};
use curvehedge_core::simulation::{DiscountedExact, ForwardEuler, TimeGrid};
use curvehedge_core::*;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, StrategyConfig, WorldConfig};
use crate::output::{num, Meta, Table};

/// Added to every `3 SE` tolerance so deterministic (zero-SE) quantities
/// compare equal up to rounding.
pub const SE_FLOOR: f64 = 1e-12;
/// Bump size of the pathwise finite difference.
pub const BUMP_EPS: f64 = 1e-5;
/// Relative tolerance of the Malliavin bump test.
pub const BUMP_TOL: f64 = 1e-2;
/// Bump errors below this are dominated by the `O(eps)` error of the finite
/// difference itself, so refinement is only required above it.
pub const BUMP_FLOOR: f64 = 1e-6;
/// Relative tolerance of the call-delta gradient check.
pub const GRADIENT_TOL: f64 = 1e-6;
/// Relative central-difference step of the gradient check.
pub const GRADIENT_STEP: f64 = 1e-5;
/// Accepted residual-SD refinement slopes: `0.5 +- 0.15`.
pub const SLOPE_CENTER: f64 = 0.5;
pub const SLOPE_HALF_WIDTH: f64 = 0.15;

const TAG_PRICE: u64 = 0x7072;
const TAG_HEDGE: u64 = 0x6864;
const TAG_BACKTEST: u64 = 0x6274;
const TAG_NORM: u64 = 0x6e6f;
const TAG_MART: u64 = 0x6d61;
const TAG_STATE: u64 = 0x7374;
const TAG_STRAT: u64 = 0x7367;
const TAG_RESID: u64 = 0x7273;
const TAG_BUMP: u64 = 0x6270;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Price,
    Hedge,
    Backtest,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::Hedge => "hedge",
            Command::Backtest => "backtest",
            Command::Verify => "verify",
        }
    }
}

/// Command-line values that replace config fields when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub inner_paths: Option<usize>,
    pub steps: Option<Vec<usize>>,
    pub out: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let run = &mut cfg.run;
        if let Some(s) = self.seed {
            run.seed = s;
        }
        if let Some(n) = self.paths {
            run.paths = n;
        }
        if let Some(n) = self.inner_paths {
            run.inner_paths = n;
        }
        if let Some(s) = &self.steps {
            run.steps = s.clone();
        }
        if let Some(o) = &self.out {
            run.out = o.clone();
        }
    }
}

/// One `verify` item.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: String, value: f64, tolerance: f64) -> Self {
        Self { pass: value <= tolerance, name, value, tolerance }
    }
}

/// Files written by a command and, for `verify`, the failed checks.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<Check>,
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let meta = Meta::new(command.name(), cfg);
    let dir = Path::new(&cfg.run.out);
    let mut outcome = Outcome::default();
    match command {
        Command::Price => outcome.files.push(price_table(cfg)?.write(dir, "price.csv", &meta)?),
        Command::Hedge => {
            let (ledger, summary) = hedge_tables(cfg)?;
            outcome.files.push(ledger.write(dir, "hedge.csv", &meta)?);
            outcome.files.push(summary.write(dir, "hedge_summary.csv", &meta)?);
        }
        Command::Backtest => {
            let (rows, gaps) = backtest_tables(cfg)?;
            outcome.files.push(rows.write(dir, "backtest.csv", &meta)?);
            outcome.files.push(gaps.write(dir, "backtest_gaps.csv", &meta)?);
        }
        Command::Verify => {
            let checks = verify_checks(cfg)?;
            let mut table = Table::new(&["check", "value", "tolerance", "pass"]);
            for c in &checks {
                table.row(vec![c.name.clone(), num(c.value), num(c.tolerance), c.pass.to_string()]);
            }
            outcome.files.push(table.write(dir, "verify.csv", &meta)?);
            outcome.failures = checks.into_iter().filter(|c| !c.pass).collect();
        }
    }
    Ok(outcome)
}

fn max_steps(cfg: &ExperimentConfig) -> usize {
    cfg.run.steps.iter().copied().max().unwrap_or(1)
}

/// Black forward price of a call-type instrument under its effective
/// volatility (exact for bond calls and caplets, frozen weights for swaptions).
pub fn black_forward(curve: &BondCurve, spec: &InstrumentSpec, vol: &VolSurface) -> Option<f64> {
    let k = spec.payoff().call_strike()?;
    let sigma = effective_vol(vol, spec, Some(curve)).ok()?;
    let x = spec.underlying(&forward_normalize(curve, spec.nu()).ok()?).ok()?;
    let v = GbmForwardModel::new(sigma, x).ok()?.integrated_vol(curve.time(), spec.exercise()).ok()?;
    forward_call_price(k, x, v).ok()
}

pub fn price_table(cfg: &ExperimentConfig) -> anyhow::Result<Table> {
    let (curve, vol, spec) = (cfg.bond_curve()?, cfg.vol_surface()?, cfg.instrument()?);
    let seeds = SeedSpec::new(cfg.run.seed).child(TAG_PRICE, 0, 0);
    let steps = max_steps(cfg);
    let numeraire0 = measure_pair(&curve, spec.nu())?;
    let initial = forward_normalize(&curve, spec.nu())?;
    let mut table = Table::new(&["method", "quantity", "value", "se"]);
    let mut push = |method: &str, fwd: f64, fwd_se: f64| {
        table.row(vec![method.into(), "forward".into(), num(fwd), num(fwd_se)]);
        table.row(vec![method.into(), "cash".into(), num(fwd * numeraire0), num(fwd_se * numeraire0)]);
    };
    if let Some(fwd) = black_forward(&curve, &spec, &vol) {
        push("black", fwd, 0.0);
    }
    let exact = price_exact(&curve, &spec, &vol, steps, cfg.run.paths, &seeds.child(0, 0, 0))?;
    push("mc-exact", exact.forward, exact.forward_se);
    let euler = price_euler(&initial, numeraire0, &spec, &vol, steps, cfg.run.paths, &seeds.child(1, 0, 0))?;
    push("mc-euler", euler.forward, euler.forward_se);
    let nested = clark_ocone_strategy(&initial, &spec, &vol, &cfg.nested(), &seeds.child(2, 0, 0))?;
    push("nested", nested.value, nested.value_se);
    table.note("steps", steps.to_string());
    table.note("paths", cfg.run.paths.to_string());
    table.note("inner_paths", cfg.run.inner_paths.to_string());
    Ok(table)
}

fn strategy_kind(s: StrategyConfig) -> StrategyKind {
    match s {
        StrategyConfig::Delta => StrategyKind::Delta,
        StrategyConfig::ClarkOcone => StrategyKind::ClarkOcone,
        StrategyConfig::Instrument => StrategyKind::Instrument,
    }
}

/// Strategies along one risk-neutral path at `run.hedge_dates` (default: the
/// valuation date), long format plus a per-date summary.
pub fn hedge_tables(cfg: &ExperimentConfig) -> anyhow::Result<(Table, Table)> {
    let (curve, vol, spec) = (cfg.bond_curve()?, cfg.vol_surface()?, cfg.instrument()?);
    let hedger = Hedger::new(spec.clone(), vol.clone(), strategy_kind(cfg.run.strategy), cfg.nested(), Some(&curve))?;
    let seeds = SeedSpec::new(cfg.run.seed).child(TAG_HEDGE, 0, 0);
    let grid = TimeGrid::uniform(curve.time(), spec.exercise(), max_steps(cfg))?;
    let path = DiscountedExact::new(&curve, &vol, &grid)?.path(&seeds, 0);
    let dates = if cfg.run.hedge_dates.is_empty() { vec![curve.time()] } else { cfg.run.hedge_dates.clone() };
    let mut ledger = Table::new(&["date", "maturity", "weight", "se"]);
    let mut summary = Table::new(&[
        "date",
        "value",
        "value_se",
        "eta",
        "eta_se",
        "numeraire_cash",
        "cash_value",
        "cash_value_se",
    ]);
    for (i, &t) in dates.iter().enumerate() {
        if t >= spec.exercise() {
            bail!("hedge date {t} must precede exercise {}", spec.exercise());
        }
        let l = grid
            .index_of(t)
            .with_context(|| format!("hedge date {t} is not on the {}-step simulation grid", grid.steps()))?;
        let state = path.forward_curve(l, spec.nu())?;
        let est = hedger.evaluate(&state, &seeds.child(1, i as u64, 0))?;
        for (atom, se) in est.phi.atoms().iter().zip(&est.phi_se) {
            ledger.row(vec![num(t), num(atom.maturity), num(atom.weight), num(*se)]);
        }
        // P_t(nu) = exp(r0 (t - t0)) P~_t(nu) under the flat short rate.
        let numeraire = (cfg.market.short_rate * (t - curve.time())).exp() * measure_pair(&path.bond_curve(l)?, spec.nu())?;
        summary.row(vec![
            num(t),
            num(est.value),
            num(est.value_se),
            num(est.eta),
            num(est.eta_se),
            num(numeraire),
            num(numeraire * est.value),
            num(numeraire * est.value_se),
        ]);
    }
    ledger.note("strategy", hedger.kind().name().into());
    ledger.note("steps", grid.steps().to_string());
    Ok((ledger, summary))
}

pub fn backtest_tables(cfg: &ExperimentConfig) -> anyhow::Result<(Table, Table)> {
    let (curve, vol, spec) = (cfg.bond_curve()?, cfg.vol_surface()?, cfg.instrument()?);
    let hedger = Hedger::new(spec.clone(), vol.clone(), strategy_kind(cfg.run.strategy), cfg.nested(), Some(&curve))?;
    let initial = forward_normalize(&curve, spec.nu())?;
    let world = match cfg.run.world {
        WorldConfig::Curve => World::Curve { initial },
        WorldConfig::Gbm => {
            let x0 = spec.underlying(&initial)?;
            World::Gbm { model: GbmForwardModel::new(effective_vol(&vol, &spec, Some(&curve))?, x0)? }
        }
    };
    let mut steps = cfg.run.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let config = BacktestConfig { paths: cfg.run.paths, steps, rebalance_every: cfg.run.rebalance_every };
    let report = replication_report(&hedger, &world, &config, &SeedSpec::new(cfg.run.seed).child(TAG_BACKTEST, 0, 0))?;
    let mut rows = Table::new(&[
        "steps",
        "dt",
        "paths",
        "price",
        "price_se",
        "mean_error",
        "sd_error",
        "se_error",
        "max_abs_error",
        "max_gap",
        "claim_mean",
        "claim_se",
    ]);
    let mut gaps = Table::new(&["steps", "date", "gap", "eta", "eta_se"]);
    for r in &report.rows {
        rows.row(vec![
            r.steps.to_string(),
            num(r.dt),
            r.paths.to_string(),
            num(r.price),
            num(r.price_se),
            num(r.mean_error),
            num(r.sd_error),
            num(r.se_error),
            num(r.max_abs_error),
            num(r.gap_by_date.iter().copied().fold(0.0, f64::max)),
            num(r.claim_mean),
            num(r.claim_se),
        ]);
        let start = spec.exercise() - r.dt * r.steps as f64;
        for (k, gap) in r.gap_by_date.iter().enumerate() {
            let date = start + (k * report.rebalance_every) as f64 * r.dt;
            gaps.row(vec![r.steps.to_string(), num(date), num(*gap), num(r.eta_by_date[k]), num(r.eta_se_by_date[k])]);
        }
    }
    for t in [&mut rows, &mut gaps] {
        t.note("strategy", report.strategy.name().into());
        t.note("world", report.world.clone());
        t.note("rebalance_every", report.rebalance_every.to_string());
    }
    rows.note("sd_slope", report.slope.map_or("none".into(), num));
    Ok((rows, gaps))
}

fn within_se(name: String, diff: f64, se: f64) -> Check {
    Check::at_most(name, diff.abs(), 3.0 * se + SE_FLOOR)
}

/// Relative error with `0/0 = 0`.
fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Max relative error between `<D_t P^_T(y), e_k>` and the pathwise bump over
/// the support and factors, at grid date `steps / 4` of one risk-neutral path.
pub fn bump_error(
    curve: &BondCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    steps: usize,
    seeds: &SeedSpec,
) -> anyhow::Result<f64> {
    let grid = TimeGrid::uniform(curve.time(), spec.exercise(), steps)?;
    let scheme = DiscountedExact::new(curve, vol, &grid)?;
    let path = scheme.path(seeds, 0);
    let l = steps / 4;
    let terminal = path.forward_curve(steps, spec.nu())?;
    let mut worst: f64 = 0.0;
    for y in spec.support() {
        let d = malliavin_derivative(&terminal, vol, grid.times()[l], y)?;
        for (k, &dk) in d.iter().enumerate() {
            let fd = pathwise_bump(&scheme, path.increments(), l, k, BUMP_EPS, spec.nu(), steps, y)?;
            worst = worst.max(relative(dk, fd));
        }
    }
    Ok(worst)
}

/// Max relative gap between `Phi+` and a central difference of the Black
/// call price over a 5 x 5 grid of forwards and integrated vols, strike 1.
pub fn gradient_error() -> anyhow::Result<f64> {
    let mut worst: f64 = 0.0;
    for x in [0.8, 0.9, 1.0, 1.1, 1.2] {
        for v in [0.05, 0.1, 0.2, 0.3, 0.4] {
            let h = GRADIENT_STEP * x;
            let fd = (forward_call_price(1.0, x + h, v)? - forward_call_price(1.0, x - h, v)?) / (2.0 * h);
            worst = worst.max(relative(phi_terms(1.0, x, v)?.0, fd));
        }
    }
    Ok(worst)
}

pub fn verify_checks(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Check>> {
    let (curve, vol, spec) = (cfg.bond_curve()?, cfg.vol_surface()?, cfg.instrument()?);
    let seeds = SeedSpec::new(cfg.run.seed);
    let steps = max_steps(cfg);
    let paths = cfg.run.paths;
    let nested = cfg.nested();
    let initial = forward_normalize(&curve, spec.nu())?;
    let grid = TimeGrid::uniform(curve.time(), spec.exercise(), steps)?;
    let euler = ForwardEuler::new(&initial, &vol, &grid)?;
    let mut checks = Vec::new();

    // Raw Euler rows, before any renormalization on read.
    let norm_seeds = seeds.child(TAG_NORM, 0, 0);
    let maturities = euler.maturities().to_vec();
    let nu_index: Vec<(usize, f64)> = spec
        .nu()
        .atoms()
        .iter()
        .map(|a| (maturities.iter().position(|&y| same_maturity(y, a.maturity)).unwrap(), a.weight))
        .collect();
    let deviation = (0..paths)
        .into_par_iter()
        .map(|p| {
            let path = euler.path(&norm_seeds, p as u64);
            (0..=steps)
                .map(|l| {
                    let row = path.row(l);
                    (nu_index.iter().map(|&(i, w)| w * row[i]).sum::<f64>() - 1.0).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    checks.push(Check::at_most("normalization".into(), deviation, NORMALIZATION_TOL));

    let ys = spec.support();
    let [exact_means, euler_means] = martingale_means(&curve, &spec, &vol, &ys, steps, paths, &seeds.child(TAG_MART, 0, 0))?;
    for (k, &y) in ys.iter().enumerate() {
        let p0 = initial.value(y)?;
        checks.push(within_se(format!("martingale-exact[{y}]"), exact_means[k].0 - p0, exact_means[k].1));
        checks.push(within_se(format!("martingale-euler[{y}]"), euler_means[k].0 - p0, euler_means[k].1));
    }

    let numeraire0 = measure_pair(&curve, spec.nu())?;
    let exact = price_exact(&curve, &spec, &vol, steps, paths, &seeds.child(TAG_PRICE, 0, 0))?;
    let eu = price_euler(&initial, numeraire0, &spec, &vol, steps, paths, &seeds.child(TAG_PRICE, 1, 0))?;
    let combined = exact.forward_se.hypot(eu.forward_se);
    checks.push(within_se("price-routes".into(), exact.forward - eu.forward, combined));
    let closed_form = matches!(spec.kind(), InstrumentKind::BondCall | InstrumentKind::Caplet);
    if closed_form {
        if let Some(black) = black_forward(&curve, &spec, &vol) {
            let tol = 3.0 * exact.forward_se + CONSISTENCY_TOL;
            checks.push(Check::at_most("price-black".into(), (black - exact.forward).abs(), tol));
        }
    }

    // Strategy checks at the initial state and two dates of one Euler path.
    let path = euler.path(&seeds.child(TAG_STATE, 0, 0), 0);
    let sigma = effective_vol(&vol, &spec, Some(&curve)).ok();
    for (i, l) in [0, steps / 3, 2 * steps / 3].into_iter().enumerate() {
        let state = path.forward_curve(l, spec.nu())?;
        let t = state.time();
        let s = seeds.child(TAG_STRAT, i as u64, 0);
        let co = clark_ocone_strategy(&state, &spec, &vol, &nested, &s)?;
        checks.push(within_se(format!("zero-eta[{t}]"), co.eta, co.eta_se));
        let model = match &sigma {
            Some(sig) => Some(GbmForwardModel::new(sig.clone(), spec.underlying(&state)?)?),
            None => None,
        };
        match (spec.kind(), &model) {
            (InstrumentKind::BondCall | InstrumentKind::Caplet, Some(model)) => {
                let delta = delta_strategy(&state, &spec, model, &nested, &s)?;
                for atom in delta.phi.atoms() {
                    let y = atom.maturity;
                    let diff = co.phi.weight_at(y) - atom.weight;
                    // Deep out of the money no inner sample may hit, leaving an
                    // estimated SE of 0; 1/N is the estimator's resolution.
                    let se = co.se_at(y).max(1.0 / nested.inner_paths as f64);
                    checks.push(within_se(format!("coincidence[{t};{y}]"), diff, se));
                }
            }
            (InstrumentKind::Swaption, Some(model)) => {
                let delta = delta_strategy(&state, &spec, model, &nested, &s)?;
                let legs = jamshidian_legs(&state, &spec, model)?;
                let gap = (hedge_value(&state, &delta.phi, delta.eta)? - legs_value(&state, &legs)?).abs();
                checks.push(Check::at_most(format!("swaption-legs[{t}]"), gap, 1e-12));
                let inst = instrument_strategy(&state, &spec, &vol, &nested, &s)?;
                checks.push(within_se(format!("swaption-eta[{t}]"), inst.eta, inst.eta_se));
                let dates = spec.tenor().map(|t| t.maturities().to_vec()).unwrap_or_default();
                let stray = inst.phi.maturities().filter(|&y| !dates.iter().any(|&d| same_maturity(d, y))).count()
                    + dates.iter().filter(|&&d| !inst.phi.contains(d)).count();
                checks.push(Check::at_most(format!("swaption-support[{t}]"), stray as f64, 0.0));
            }
            _ => {}
        }
    }

    checks.push(Check::at_most("gradient".into(), gradient_error()?, GRADIENT_TOL));

    let bump_seeds = seeds.child(TAG_BUMP, 0, 0);
    let coarse = cfg.run.steps.iter().copied().min().unwrap_or(steps);
    let fine = bump_error(&curve, &spec, &vol, steps, &bump_seeds)?;
    checks.push(Check::at_most(format!("malliavin-bump[{steps}]"), fine, BUMP_TOL));
    if coarse < steps {
        let rough = bump_error(&curve, &spec, &vol, coarse, &bump_seeds)?;
        checks.push(Check::at_most(format!("malliavin-bump-refines[{coarse}->{steps}]"), fine, rough.max(BUMP_FLOOR)));
    }

    let mut study_steps = cfg.run.steps.clone();
    study_steps.sort_unstable();
    study_steps.dedup();
    let residual_config = NestedConfig { inner_paths: cfg.run.residual_inner_paths, ..nested };
    let (rows, slope) = representation_study(
        &initial,
        &spec,
        &vol,
        &study_steps,
        cfg.run.residual_paths,
        &residual_config,
        &seeds.child(TAG_RESID, 0, 0),
    )?;
    for r in &rows {
        checks.push(within_se(format!("residual-mean[{}]", r.steps), r.mean, r.total_se()));
    }
    if study_steps.len() >= 2 {
        // Distance of the slope from the middle of the accepted range; a
        // deterministic residual (all SDs at rounding level) passes outright.
        let deterministic = rows.iter().all(|r| r.sd <= SE_FLOOR);
        let value = if deterministic { 0.0 } else { slope.map_or(f64::INFINITY, |s| (s - SLOPE_CENTER).abs()) };
        checks.push(Check::at_most("residual-slope".into(), value, SLOPE_HALF_WIDTH));
    }
    Ok(checks)
}
