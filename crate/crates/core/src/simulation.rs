//! Path generation for the bond curve.
//!
//! Two schemes share one noise layout (`d` normals per step, see [`crate::rng`]):
//!
//! * [`DiscountedExact`] evolves discounted bonds `P~_t(y)` under the
//!   risk-neutral measure with exact lognormal steps. It is the reference
//!   scheme; forward-measure expectations follow by reweighting with
//!   [`rn_weight`].
//! * [`ForwardEuler`] evolves the forward curve `P^_t = P_t / P_t(nu)` under
//!   the forward measure with log-Euler steps and exact renormalization.
//!
//! Within a step `zeta` is replaced by its step average `zeta_bar` (midpoint
//! rule on [`STEP_QUADRATURE_POINTS`](crate::vol::STEP_QUADRATURE_POINTS)
//! sub-points) and the compensator is `|zeta_bar|^2 dt / 2`, so every
//! discounted step is an exact martingale increment.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{argument, domain, Result};
use crate::market::{find_node, BondCurve, Curve, DiscreteMeasure, ForwardCurve, MATURITY_TOL};
use crate::math::{dot, exp, sqrt};
use crate::par;
use crate::rng::{fill_normals, SeedSpec};
use crate::vol::VolSurface;

/// Strictly increasing simulation dates.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(argument("a time grid needs at least one step"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(argument("time grid must be finite and strictly increasing"));
        }
        Ok(Self { times })
    }

    /// `steps` equal steps on `[start, end]`.
    pub fn uniform(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(argument("number of steps must be positive"));
        }
        if !(end > start) {
            return Err(argument(format!("grid end {end} must exceed start {start}")));
        }
        let dt = (end - start) / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|l| start + l as f64 * dt).collect();
        times[steps] = end;
        Self::new(times)
    }

    /// `steps` equal steps on `[0, exercise]`, continued with the same step
    /// length (last one shortened) up to `settlement`.
    pub fn with_settlement(exercise: f64, settlement: f64, steps: usize) -> Result<Self> {
        let mut grid = Self::uniform(0.0, exercise, steps)?;
        if settlement > exercise + MATURITY_TOL {
            let dt = exercise / steps as f64;
            let mut t = exercise;
            while settlement - t > MATURITY_TOL {
                t = (t + dt).min(settlement);
                if settlement - t <= MATURITY_TOL {
                    t = settlement;
                }
                grid.times.push(t);
            }
        }
        Ok(grid)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.times[step + 1] - self.times[step]
    }

    /// Index of the grid date matching `t` within the maturity tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        find_node(&self.times, t).ok()
    }

    /// Grid restricted to `[start, t]` where `t` must be a grid date.
    pub fn truncated_at(&self, t: f64) -> Result<Self> {
        let idx = self
            .index_of(t)
            .ok_or_else(|| argument(format!("{t} is not a grid date")))?;
        Self::new(self.times[..=idx].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMeasure {
    /// Discounted bond prices under the risk-neutral measure.
    RiskNeutral,
    /// Forward bond prices under the forward measure of the path's numeraire.
    Forward,
}

/// One simulated path: a curve state per grid date plus the driving increments.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePath {
    measure: PathMeasure,
    numeraire: Option<DiscreteMeasure>,
    maturities: Vec<f64>,
    times: Vec<f64>,
    values: Vec<f64>,
    factors: usize,
    dw: Vec<f64>,
    rn_weight: Option<f64>,
}

impl CurvePath {
    pub fn measure(&self) -> PathMeasure {
        self.measure
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    /// Curve values at date index `l` (discounted or forward, per [`Self::measure`]).
    pub fn row(&self, l: usize) -> &[f64] {
        let n = self.maturities.len();
        &self.values[l * n..(l + 1) * n]
    }

    pub fn terminal(&self) -> &[f64] {
        self.row(self.steps())
    }

    /// Brownian increment of step `l` (`W` for risk-neutral paths, `W^` for forward paths).
    pub fn dw(&self, l: usize) -> &[f64] {
        &self.dw[l * self.factors..(l + 1) * self.factors]
    }

    pub fn increments(&self) -> &[f64] {
        &self.dw
    }

    pub fn value_at(&self, l: usize, maturity: f64) -> Result<f64> {
        Ok(self.row(l)[find_node(&self.maturities, maturity)?])
    }

    /// Curve at date `l` in the path's own units.
    pub fn bond_curve(&self, l: usize) -> Result<BondCurve> {
        BondCurve::from_parts(self.times[l], self.maturities.clone(), self.row(l).to_vec())
    }

    /// Forward curve at date `l`. Risk-neutral paths are normalized by `nu`;
    /// forward paths must have been simulated with the same numeraire.
    pub fn forward_curve(&self, l: usize, nu: &DiscreteMeasure) -> Result<ForwardCurve> {
        match self.measure {
            PathMeasure::RiskNeutral => crate::market::forward_normalize(&self.bond_curve(l)?, nu),
            PathMeasure::Forward => {
                let own = self.numeraire.as_ref().expect("forward paths carry their numeraire");
                if own != nu {
                    return Err(argument("forward path was simulated under a different numeraire"));
                }
                Ok(ForwardCurve::from_parts_unchecked(
                    self.times[l],
                    own.clone(),
                    self.maturities.clone(),
                    self.row(l).to_vec(),
                ))
            }
        }
    }

    pub fn rn_weight(&self) -> Option<f64> {
        self.rn_weight
    }

    pub fn set_rn_weight(&mut self, w: f64) {
        self.rn_weight = Some(w);
    }
}

/// Step-averaged volatilities `zeta_bar` per step and maturity, plus the
/// compensators `|zeta_bar|^2 dt / 2`.
#[derive(Debug, Clone)]
pub(crate) struct StepVols {
    n: usize,
    d: usize,
    zbar: Vec<f64>,
    half_var: Vec<f64>,
    sqrt_dt: Vec<f64>,
    dt: Vec<f64>,
}

impl StepVols {
    pub(crate) fn new(vol: &VolSurface, grid: &TimeGrid, maturities: &[f64]) -> Self {
        let (n, d, m) = (maturities.len(), vol.factors(), grid.steps());
        let mut zbar = vec![0.0; m * n * d];
        let mut half_var = vec![0.0; m * n];
        for l in 0..m {
            let (t0, t1) = (grid.times()[l], grid.times()[l + 1]);
            for (j, &y) in maturities.iter().enumerate() {
                let z = &mut zbar[(l * n + j) * d..(l * n + j + 1) * d];
                vol.average_into(t0, t1, y, z);
                half_var[l * n + j] = 0.5 * dot(z, z) * (t1 - t0);
            }
        }
        let dt: Vec<f64> = (0..m).map(|l| grid.dt(l)).collect();
        let sqrt_dt = dt.iter().map(|&h| sqrt(h)).collect();
        Self { n, d, zbar, half_var, sqrt_dt, dt }
    }

    #[inline]
    pub(crate) fn zeta(&self, l: usize, j: usize) -> &[f64] {
        &self.zbar[(l * self.n + j) * self.d..(l * self.n + j + 1) * self.d]
    }
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        Err(argument("number of paths must be positive"))
    } else {
        Ok(())
    }
}

fn check_start(curve_time: f64, grid: &TimeGrid) -> Result<()> {
    if (curve_time - grid.start()).abs() > MATURITY_TOL {
        return Err(argument(format!(
            "grid starts at {} but the curve is dated {curve_time}",
            grid.start()
        )));
    }
    Ok(())
}

/// Exact lognormal scheme for discounted bonds under the risk-neutral measure:
/// `P~_{l+1}(y) = P~_l(y) exp(zeta_bar . dW - |zeta_bar|^2 dt / 2)`, one
/// `d`-dimensional increment per step shared by every maturity.
#[derive(Debug, Clone)]
pub struct DiscountedExact {
    grid: TimeGrid,
    maturities: Vec<f64>,
    initial: Vec<f64>,
    vols: StepVols,
}

impl DiscountedExact {
    pub fn new(curve0: &BondCurve, vol: &VolSurface, grid: &TimeGrid) -> Result<Self> {
        check_start(curve0.time(), grid)?;
        vol.check_bounded(grid.times(), curve0.maturities())?;
        Ok(Self {
            grid: grid.clone(),
            maturities: curve0.maturities().to_vec(),
            initial: curve0.values().to_vec(),
            vols: StepVols::new(vol, grid, curve0.maturities()),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    /// Draws the standard increments `dW` of path `index`.
    pub fn increments(&self, seeds: &SeedSpec, index: u64) -> Vec<f64> {
        draw_increments(&self.vols, self.grid.steps(), seeds, index)
    }

    pub fn path(&self, seeds: &SeedSpec, index: u64) -> CurvePath {
        self.path_from_increments(self.increments(seeds, index))
            .expect("increments have the grid's shape")
    }

    /// Rebuilds a path from given increments (used for pathwise bumps).
    pub fn path_from_increments(&self, dw: Vec<f64>) -> Result<CurvePath> {
        let (n, d, m) = (self.maturities.len(), self.vols.d, self.grid.steps());
        if dw.len() != m * d {
            return Err(argument(format!("expected {} increments, got {}", m * d, dw.len())));
        }
        let mut values = Vec::with_capacity((m + 1) * n);
        values.extend_from_slice(&self.initial);
        for l in 0..m {
            let step_dw = &dw[l * d..(l + 1) * d];
            for j in 0..n {
                let prev = values[l * n + j];
                let z = self.vols.zeta(l, j);
                let next = prev * exp(dot(z, step_dw) - self.vols.half_var[l * n + j]);
                values.push(next);
            }
        }
        Ok(CurvePath {
            measure: PathMeasure::RiskNeutral,
            numeraire: None,
            maturities: self.maturities.clone(),
            times: self.grid.times().to_vec(),
            values,
            factors: d,
            dw,
            rn_weight: None,
        })
    }

    /// Terminal discounted curve of path `index` without storing the path.
    pub fn terminal(&self, seeds: &SeedSpec, index: u64, out: &mut [f64]) {
        let (n, d) = (self.maturities.len(), self.vols.d);
        let mut rng = seeds.path_rng(index);
        let mut z = vec![0.0; d];
        let mut log_growth = vec![0.0; n];
        for l in 0..self.grid.steps() {
            fill_normals(&mut rng, &mut z);
            z.iter_mut().for_each(|x| *x *= self.vols.sqrt_dt[l]);
            for (j, g) in log_growth.iter_mut().enumerate() {
                *g += dot(self.vols.zeta(l, j), &z) - self.vols.half_var[l * n + j];
            }
        }
        for ((o, p0), g) in out.iter_mut().zip(&self.initial).zip(&log_growth) {
            *o = p0 * exp(*g);
        }
    }
}

fn draw_increments(vols: &StepVols, steps: usize, seeds: &SeedSpec, index: u64) -> Vec<f64> {
    let d = vols.d;
    let mut rng = seeds.path_rng(index);
    let mut dw = vec![0.0; steps * d];
    fill_normals(&mut rng, &mut dw);
    for l in 0..steps {
        dw[l * d..(l + 1) * d].iter_mut().for_each(|x| *x *= vols.sqrt_dt[l]);
    }
    dw
}

/// Simulates `n_paths` discounted-curve paths under the risk-neutral measure.
pub fn simulate_discounted_exact(
    curve0: &BondCurve,
    vol: &VolSurface,
    grid: &TimeGrid,
    seeds: &SeedSpec,
    n_paths: usize,
) -> Result<Vec<CurvePath>> {
    check_paths(n_paths)?;
    let scheme = DiscountedExact::new(curve0, vol, grid)?;
    Ok(par::map_range(n_paths, |i| scheme.path(seeds, i as u64)))
}

/// Forward-measure density on a risk-neutral path, in discounted form:
/// `P~_S(nu) / P~_0(nu)` with `S` the path horizon.
pub fn rn_weight(path: &CurvePath, nu: &DiscreteMeasure) -> Result<f64> {
    if path.measure() != PathMeasure::RiskNeutral {
        return Err(argument("the density applies to risk-neutral paths"));
    }
    let pair = |row: &[f64]| -> Result<f64> {
        nu.atoms()
            .iter()
            .map(|a| Ok(a.weight * row[find_node(path.maturities(), a.maturity)?]))
            .sum()
    };
    let start = pair(path.row(0))?;
    if !(start > 0.0) {
        return Err(domain(format!("initial numeraire value {start} must be > 0")));
    }
    Ok(pair(path.terminal())? / start)
}

/// Drift shift `sum_k nu_k P^_t(T_k) zeta_t(T_k)` between `W` and `W^`.
pub fn girsanov_drift(curve: &ForwardCurve, vol: &VolSurface, t: f64) -> Result<Vec<f64>> {
    let d = vol.factors();
    let mut out = vec![0.0; d];
    let mut z = vec![0.0; d];
    for a in curve.numeraire().atoms() {
        let p = curve.value(a.maturity)?;
        vol.eval_into(t, a.maturity, &mut z);
        for (o, zk) in out.iter_mut().zip(&z) {
            *o += a.weight * p * zk;
        }
    }
    Ok(out)
}

/// Log-Euler scheme for the forward curve under the forward measure:
/// `P^_{l+1}(y) = P^_l(y) exp(b . dW^ - |b|^2 dt / 2)` with
/// `b = sum_k nu_k P^_l(T_k) (zeta_bar(y) - zeta_bar(T_k))`, followed by
/// division by `sum_k nu_k P^_{l+1}(T_k)`.
#[derive(Debug, Clone)]
pub struct ForwardEuler {
    grid: TimeGrid,
    numeraire: DiscreteMeasure,
    nu_index: Vec<(usize, f64)>,
    maturities: Vec<f64>,
    initial: Vec<f64>,
    vols: StepVols,
}

impl ForwardEuler {
    pub fn new(initial: &ForwardCurve, vol: &VolSurface, grid: &TimeGrid) -> Result<Self> {
        check_start(initial.time(), grid)?;
        vol.check_bounded(grid.times(), initial.maturities())?;
        let nu = initial.numeraire().clone();
        let nu_index = nu
            .atoms()
            .iter()
            .map(|a| Ok((initial.index_of(a.maturity)?, a.weight)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            numeraire: nu,
            nu_index,
            maturities: initial.maturities().to_vec(),
            initial: initial.values().to_vec(),
            vols: StepVols::new(vol, grid, initial.maturities()),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn numeraire(&self) -> &DiscreteMeasure {
        &self.numeraire
    }

    pub fn increments(&self, seeds: &SeedSpec, index: u64) -> Vec<f64> {
        draw_increments(&self.vols, self.grid.steps(), seeds, index)
    }

    pub fn path(&self, seeds: &SeedSpec, index: u64) -> CurvePath {
        self.path_from_increments(self.increments(seeds, index))
            .expect("increments have the grid's shape")
    }

    pub fn path_from_increments(&self, dw: Vec<f64>) -> Result<CurvePath> {
        let (n, d, m) = (self.maturities.len(), self.vols.d, self.grid.steps());
        if dw.len() != m * d {
            return Err(argument(format!("expected {} increments, got {}", m * d, dw.len())));
        }
        let mut values = Vec::with_capacity((m + 1) * n);
        values.extend_from_slice(&self.initial);
        let mut shift = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut next = vec![0.0; n];
        for l in 0..m {
            let cur = &values[l * n..(l + 1) * n];
            let step_dw = &dw[l * d..(l + 1) * d];
            // shift = sum_k nu_k P^(T_k) zeta_bar(T_k); mass = sum_k nu_k P^(T_k)
            shift.iter_mut().for_each(|s| *s = 0.0);
            let mut mass = 0.0;
            for &(k, w) in &self.nu_index {
                let c = w * cur[k];
                mass += c;
                for (s, z) in shift.iter_mut().zip(self.vols.zeta(l, k)) {
                    *s += c * z;
                }
            }
            for j in 0..n {
                for ((bi, z), s) in b.iter_mut().zip(self.vols.zeta(l, j)).zip(&shift) {
                    *bi = mass * z - s;
                }
                next[j] = cur[j] * exp(dot(&b, step_dw) - 0.5 * dot(&b, &b) * self.vols.dt[l]);
            }
            let norm: f64 = self.nu_index.iter().map(|&(k, w)| w * next[k]).sum();
            values.extend(next.iter().map(|v| v / norm));
        }
        Ok(CurvePath {
            measure: PathMeasure::Forward,
            numeraire: Some(self.numeraire.clone()),
            maturities: self.maturities.clone(),
            times: self.grid.times().to_vec(),
            values,
            factors: d,
            dw,
            rn_weight: None,
        })
    }
}

/// Simulates `n_paths` forward-curve paths under the forward measure.
pub fn simulate_forward_euler(
    initial: &ForwardCurve,
    vol: &VolSurface,
    grid: &TimeGrid,
    seeds: &SeedSpec,
    n_paths: usize,
) -> Result<Vec<CurvePath>> {
    check_paths(n_paths)?;
    let scheme = ForwardEuler::new(initial, vol, grid)?;
    Ok(par::map_range(n_paths, |i| scheme.path(seeds, i as u64)))
}
