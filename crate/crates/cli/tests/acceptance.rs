//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p curvehedge --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use curvehedge::commands::{bump_error, SE_FLOOR};
use curvehedge::config::{parse_config, ExperimentConfig};
use curvehedge_core::analytic::{effective_vol, margrabe_price, phi_terms, GbmForwardModel};
use curvehedge_core::backtest::{replication_report, rollforward, BacktestConfig, World};
use curvehedge_core::hedging::{
    clark_ocone_strategy, delta_strategy, hedge_value, instrument_strategy, jamshidian_legs, legs_value, HedgeLedger,
    Hedger, StrategyKind,
};
use curvehedge_core::malliavin::representation_study;
use curvehedge_core::market::{forward_normalize, measure_pair, same_maturity, Curve};
use curvehedge_core::math::norm_cdf;
use curvehedge_core::nested::NestedConfig;
use curvehedge_core::pricing::{martingale_means, price_euler, price_exact};
use curvehedge_core::rng::fill_normals;
use curvehedge_core::simulation::{DiscountedExact, ForwardEuler, TimeGrid};
use curvehedge_core::*;
use rayon::prelude::*;

type Verdict = anyhow::Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Verdict);

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn parts(cfg: &ExperimentConfig) -> (BondCurve, VolSurface, InstrumentSpec) {
    (cfg.bond_curve().unwrap(), cfg.vol_surface().unwrap(), cfg.instrument().unwrap())
}

/// `Phi(x)` by its Taylor series `1/2 + pdf(x) sum x^(2n+1) / (2n+1)!!`,
/// independent of the library's erfc-based CDF.
fn phi_series(x: f64) -> f64 {
    let (mut term, mut sum, mut n) = (x, x, 1.0);
    while term.abs() > 1e-18 {
        term *= x * x / (2.0 * n + 1.0);
        sum += term;
        n += 1.0;
    }
    0.5 + (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt() * sum
}

/// Max over every path, date and scheme of `|sum nu(y) P^_t(y) - 1|`, read
/// from the raw simulated rows.
fn normalization() -> Verdict {
    let start = Instant::now();
    let (curve, vol, spec) = parts(&config("swaption.json"));
    let nu = spec.nu().clone();
    let (paths, steps) = (10_000, 200);
    let grid = TimeGrid::uniform(0.0, spec.exercise(), steps)?;
    let initial = forward_normalize(&curve, &nu)?;
    let euler = ForwardEuler::new(&initial, &vol, &grid)?;
    let exact = DiscountedExact::new(&curve, &vol, &grid)?;
    let seeds = SeedSpec::new(11);
    let idx: Vec<(usize, f64)> = nu
        .atoms()
        .iter()
        .map(|a| (euler.maturities().iter().position(|&y| same_maturity(y, a.maturity)).unwrap(), a.weight))
        .collect();
    let worst = (0..paths)
        .into_par_iter()
        .map(|p| {
            let fwd = euler.path(&seeds, p as u64);
            let rn = exact.path(&seeds, p as u64);
            let mut m: f64 = 0.0;
            for l in 0..=steps {
                let raw: f64 = idx.iter().map(|&(i, w)| w * fwd.row(l)[i]).sum();
                let normalized = measure_pair(&rn.forward_curve(l, &nu).unwrap(), &nu).unwrap();
                m = m.max((raw - 1.0).abs()).max((normalized - 1.0).abs());
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    let elapsed = start.elapsed();
    Ok((
        worst <= 1e-12 && elapsed < Duration::from_secs(60),
        format!("max deviation {worst:e} (tol 1e-12), {paths} paths x {steps} steps, {elapsed:.1?} (limit 60s)"),
    ))
}

fn martingale() -> Verdict {
    let (curve, vol, spec) = parts(&config("bond_call_atm.json"));
    let (paths, steps) = (100_000, 50);
    let ys: Vec<f64> = curve.maturities().iter().copied().filter(|&y| y >= spec.exercise()).collect();
    let [exact, euler] = martingale_means(&curve, &spec, &vol, &ys, steps, paths, &SeedSpec::new(21))?;
    let initial = forward_normalize(&curve, spec.nu())?;
    let mut worst: f64 = 0.0;
    for (k, &y) in ys.iter().enumerate() {
        let p0 = initial.value(y)?;
        for (mean, se) in [exact[k], euler[k]] {
            let z = if se > 0.0 { (mean - p0).abs() / se } else if mean == p0 { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
        }
    }
    let numeraire0 = measure_pair(&curve, spec.nu())?;
    let a = price_exact(&curve, &spec, &vol, steps, paths, &SeedSpec::new(22))?;
    let b = price_euler(&initial, numeraire0, &spec, &vol, steps, paths, &SeedSpec::new(23))?;
    let z_price = (a.forward - b.forward).abs() / a.forward_se.hypot(b.forward_se);
    Ok((
        worst < 3.0 && z_price < 3.0,
        format!(
            "max |mean - P^_0|/SE {worst:.2} over {} maturities x 2 routes; call {:.6} vs {:.6}, {z_price:.2} combined SE",
            ys.len(),
            a.forward,
            b.forward
        ),
    ))
}

fn margrabe() -> Verdict {
    let (x, k, v) = (1.0, 1.0, 0.2);
    let oracle = phi_series(v / 2.0) - phi_series(-v / 2.0);
    let analytic = margrabe_price(x, k, 1.0, 1.0, v)?;
    let n = 1_000_000u64;
    let chunks = 100u64;
    let seeds = SeedSpec::new(31);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeds.path_rng(c);
            let mut z = [0.0];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n / chunks {
                fill_normals(&mut rng, &mut z);
                let payoff = (x * (v * z[0] - 0.5 * v * v).exp() - k).max(0.0);
                s += payoff;
                s2 += payoff * payoff;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / (n - 1) as f64).sqrt();
    let h = 1e-5;
    // Bump the asset with the numeraire held at 1 so that x stays consistent.
    let fd = (margrabe_price(x + h, k, 1.0, 1.0 + h, v)? - margrabe_price(x - h, k, 1.0, 1.0 - h, v)?) / (2.0 * h);
    let delta = phi_terms(k, x, v)?.0;
    let rel = (delta - fd).abs() / fd.abs();
    let pass = (analytic - 0.0796557).abs() < 5e-8
        && (analytic - oracle).abs() < 1e-12
        && (analytic - mean).abs() < 3.0 * se
        && rel <= 1e-6;
    Ok((
        pass,
        format!("closed form {analytic:.7} (oracle {oracle:.7}), MC {mean:.7} +- {se:.1e}, delta rel err {rel:.1e}"),
    ))
}

/// Clark–Ocone vs delta at 5 random (date, state) points per instrument.
fn coincidence() -> Verdict {
    let start = Instant::now();
    let config = NestedConfig::default();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for (i, name) in ["bond_call_atm.json", "caplet.json"].into_iter().enumerate() {
        let (curve, vol, spec) = parts(&self::config(name));
        let sigma = effective_vol(&vol, &spec, Some(&curve))?;
        let initial = forward_normalize(&curve, spec.nu())?;
        let steps = 200;
        let grid = TimeGrid::uniform(0.0, spec.exercise(), steps)?;
        let euler = ForwardEuler::new(&initial, &vol, &grid)?;
        let mut rng = SeedSpec::new(41 + i as u64).path_rng(0);
        for j in 0..5u64 {
            let mut z = [0.0];
            fill_normals(&mut rng, &mut z);
            let l = ((norm_cdf(z[0]) * steps as f64) as usize).min(steps - 1);
            let state = euler.path(&SeedSpec::new(43), j).forward_curve(l, spec.nu())?;
            let model = GbmForwardModel::new(sigma.clone(), spec.underlying(&state)?)?;
            let seeds = SeedSpec::new(44).child(i as u64, j, 0);
            let co = clark_ocone_strategy(&state, &spec, &vol, &config, &seeds)?;
            let delta = delta_strategy(&state, &spec, &model, &config, &seeds)?;
            for atom in delta.phi.atoms() {
                // With no in-the-money inner sample the estimated SE is 0;
                // 1/N is the resolution of an N-sample indicator mean.
                let se = co.se_at(atom.maturity).max(1.0 / config.inner_paths as f64);
                worst = worst.max((co.phi.weight_at(atom.maturity) - atom.weight).abs() / se);
            }
            points += 1;
        }
    }
    let elapsed = start.elapsed();
    Ok((
        worst < 3.0 && elapsed < Duration::from_secs(600),
        format!("{points} points, max |CO - delta|/SE {worst:.2}, {} inner paths, {elapsed:.1?}", config.inner_paths),
    ))
}

fn trivial_payoffs() -> Verdict {
    let cfg = config("bond_call_atm.json");
    let curve = cfg.bond_curve()?;
    let vol = VolSurface::new(curvehedge_core::vol::VolFamily::HoLee(vec![0.01, 0.004]))?;
    let mu = DiscreteMeasure::from_pairs(&[(2.0, 0.6), (2.5, 0.4)])?;
    let nu = DiscreteMeasure::dirac(1.0);
    let c = 0.7;
    let linear = InstrumentSpec::generic(mu.clone(), nu.clone(), 1.0, 1.0, Payoff::Affine { slope: 1.0, intercept: 0.0 })?;
    let constant = InstrumentSpec::generic(mu.clone(), nu.clone(), 1.0, 1.0, Payoff::Affine { slope: 0.0, intercept: c })?;
    let initial = forward_normalize(&curve, &nu)?;
    let grid = TimeGrid::uniform(0.0, 1.0, 50)?;
    let path = ForwardEuler::new(&initial, &vol, &grid)?.path(&SeedSpec::new(51), 0);
    let config = NestedConfig::default();
    let mut worst_z: f64 = 0.0;
    for l in [0, 20, 40] {
        let state = path.forward_curve(l, &nu)?;
        for (spec, target) in [(&linear, mu.clone()), (&constant, nu.scaled(c))] {
            let est = clark_ocone_strategy(&state, spec, &vol, &config, &SeedSpec::new(52 + l as u64))?;
            for y in spec.support() {
                let gap = (est.phi.weight_at(y) - target.weight_at(y)).abs();
                let z = if gap <= 1e-12 { 0.0 } else { gap / est.se_at(y) };
                worst_z = worst_z.max(z);
            }
        }
    }
    // Buy-and-hold rollforward of the exact strategies.
    let hold = |phi: DiscreteMeasure, v0: f64| -> anyhow::Result<f64> {
        let ledger = HedgeLedger {
            dates: vec![0.0],
            strategies: vec![phi],
            eta: vec![0.0],
            phi_se: vec![vec![]],
            eta_se: vec![0.0],
            values: vec![v0],
            value_se: vec![0.0],
        };
        Ok(*rollforward(&path, &ledger, v0)?.last().unwrap())
    };
    let terminal = path.forward_curve(50, &nu)?;
    let x0 = measure_pair(&initial, &mu)?;
    let err_linear = (hold(mu.clone(), x0)? - measure_pair(&terminal, &mu)?).abs();
    let err_const = (hold(nu.scaled(c), c)? - c).abs();
    Ok((
        worst_z < 3.0 && err_linear <= 1e-12 && err_const <= 1e-12,
        format!("max |phi - target|/SE {worst_z:.2}; rollforward errors {err_linear:.1e} (g=x), {err_const:.1e} (g=c)"),
    ))
}

fn residual() -> Verdict {
    let (curve, vol, spec) = parts(&config("bond_call_atm.json"));
    let initial = forward_normalize(&curve, spec.nu())?;
    let (rows, slope) = representation_study(
        &initial,
        &spec,
        &vol,
        &[25, 50, 100, 200],
        10_000,
        &NestedConfig::with_inner_paths(1000),
        &SeedSpec::new(61),
    )?;
    let worst = rows.iter().map(|r| r.mean.abs() / r.total_se()).fold(0.0, f64::max);
    let slope = slope.unwrap_or(f64::NAN);
    let sds: Vec<String> = rows.iter().map(|r| format!("{:.2e}", r.sd)).collect();
    Ok((
        worst < 3.0 && (0.35..=0.65).contains(&slope),
        format!("max |mean|/SE {worst:.2}, SD [{}], slope {slope:.3}", sds.join(", ")),
    ))
}

fn gbm_replication() -> Verdict {
    let (curve, vol, spec) = parts(&config("bond_call_atm.json"));
    let hedger = Hedger::new(spec.clone(), vol.clone(), StrategyKind::Delta, NestedConfig::default(), Some(&curve))?;
    let x0 = spec.underlying(&forward_normalize(&curve, spec.nu())?)?;
    let world = World::Gbm { model: GbmForwardModel::new(effective_vol(&vol, &spec, Some(&curve))?, x0)? };
    let config = BacktestConfig { paths: 10_000, steps: vec![25, 50, 100, 200], rebalance_every: 1 };
    let report = replication_report(&hedger, &world, &config, &SeedSpec::new(71))?;
    let slope = report.slope.unwrap_or(f64::NAN);
    let worst = report.rows.iter().map(|r| r.mean_error.abs() / r.se_error).fold(0.0, f64::max);
    Ok((
        (0.35..=0.65).contains(&slope) && worst < 3.0,
        format!("SD slope {slope:.3}, max |mean error|/SE {worst:.2}"),
    ))
}

fn swaption() -> Verdict {
    let (curve, vol, spec) = parts(&config("swaption.json"));
    let sigma = effective_vol(&vol, &spec, Some(&curve))?;
    let initial = forward_normalize(&curve, spec.nu())?;
    let steps = 50;
    let grid = TimeGrid::uniform(0.0, spec.exercise(), steps)?;
    let path = ForwardEuler::new(&initial, &vol, &grid)?.path(&SeedSpec::new(81), 0);
    let config = NestedConfig::default();
    let mut gap: f64 = 0.0;
    let mut eta_ok = true;
    for l in 0..steps {
        let state = path.forward_curve(l, spec.nu())?;
        let model = GbmForwardModel::new(sigma.clone(), spec.underlying(&state)?)?;
        let seeds = SeedSpec::new(82).child(0, l as u64, 0);
        let delta = delta_strategy(&state, &spec, &model, &config, &seeds)?;
        let legs = jamshidian_legs(&state, &spec, &model)?;
        gap = gap.max((hedge_value(&state, &delta.phi, delta.eta)? - legs_value(&state, &legs)?).abs());
        let inst = instrument_strategy(&state, &spec, &vol, &config, &seeds)?;
        // eta vanishes per inner sample, so its SE is zero up to rounding.
        eta_ok &= inst.eta.abs() < 3.0 * inst.eta_se + SE_FLOOR;
    }
    Ok((
        gap <= 1e-12 && eta_ok,
        format!("{steps} dates: max legs gap {gap:.1e}, every |eta| within 3 SE: {eta_ok}"),
    ))
}

fn bump() -> Verdict {
    let (curve, vol, spec) = parts(&config("caplet.json"));
    let mut fine_worst: f64 = 0.0;
    let mut improving = true;
    let mut detail = Vec::new();
    for s in 0..3 {
        let seeds = SeedSpec::new(91 + s);
        let errs: Vec<f64> =
            [50, 100, 200].iter().map(|&n| bump_error(&curve, &spec, &vol, n, &seeds)).collect::<anyhow::Result<_>>()?;
        improving &= errs.windows(2).all(|w| w[1] < w[0]);
        fine_worst = fine_worst.max(errs[2]);
        detail.push(format!("{:.1e}/{:.1e}/{:.1e}", errs[0], errs[1], errs[2]));
    }
    Ok((
        fine_worst <= 1e-2 && improving,
        format!("rel err at 50/100/200 steps: {} (tol 1e-2 at 200)", detail.join(", ")),
    ))
}

fn determinism() -> Verdict {
    let mut cfg = config("bond_call_atm.json");
    cfg.run.residual_paths = 100;
    cfg.run.residual_inner_paths = 1000;
    let dir = tempfile::tempdir()?;
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, curvehedge::config::emit(&cfg))?;
    let run = |threads: &str, out: &str| -> anyhow::Result<Vec<u8>> {
        let out_dir: PathBuf = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_curvehedge"))
            .args(["verify", "--config"])
            .arg(&cfg_path)
            .args(["--seed", "7", "--paths", "2000", "--inner-paths", "2000", "--threads", threads, "--out"])
            .arg(&out_dir)
            .output()?;
        anyhow::ensure!(status.status.code().is_some(), "verify was killed");
        Ok(std::fs::read(out_dir.join("verify.csv"))?)
    };
    let a = run("1", "a")?;
    let b = run("2", "b")?;
    let c = run("1", "c")?;
    Ok((a == b && a == c && !a.is_empty(), format!("verify.csv {} bytes, identical across --threads 1/2/1: {}", a.len(), a == b && a == c)))
}

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("normalization", normalization),
        ("martingale", martingale),
        ("margrabe", margrabe),
        ("coincidence", coincidence),
        ("trivial-payoffs", trivial_payoffs),
        ("representation-residual", residual),
        ("gbm-replication", gbm_replication),
        ("swaption-consistency", swaption),
        ("malliavin-bump", bump),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|n| n != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e:#}")));
        failed += usize::from(!pass);
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name}: {detail} [{:.1?}]", i + 1, start.elapsed());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
