//! Inner Monte Carlo for conditional expectations `E^[f(P^_T) | F_t]` given
//! the time-`t` forward curve.
//!
//! The default scheme samples the terminal curve exactly. Conditionally on
//! `F_t`, discounted bonds satisfy
//! `P~_T(y) = P~_t(y) exp(Z_y - C_yy / 2)` under the risk-neutral measure,
//! with `Z ~ N(0, C)` and `C_jk = int_t^T zeta_s(y_j) . zeta_s(y_k) ds`.
//! Starting from `P~_t = P^_t` (so `P~_t(nu) = 1`), the forward-measure
//! density is `P~_T(nu)` and `P^_T = P~_T / P~_T(nu)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{argument, domain, Result};
use crate::market::{find_node, Curve, ForwardCurve};
use crate::math::{exp, sqrt};
use crate::par;
use crate::rng::{fill_normals, SeedSpec};
use crate::simulation::{ForwardEuler, TimeGrid};
use crate::stats::{Moments, ShiftedSums};
use crate::vol::VolSurface;

/// Simpson intervals for the conditional covariance.
pub const COVARIANCE_INTERVALS: usize = 128;

/// Smallest inner budget accepted by [`NestedConfig::validate`].
pub const MIN_INNER_PATHS: usize = 1000;

/// Inner samples per random stream.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerScheme {
    /// Exact terminal law under the risk-neutral measure, reweighted.
    ExactReweighted,
    /// Forward-measure log-Euler paths from `t` to `T`.
    ForwardEuler { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestedConfig {
    pub inner_paths: usize,
    pub antithetic: bool,
    pub scheme: InnerScheme,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self { inner_paths: 10_000, antithetic: true, scheme: InnerScheme::ExactReweighted }
    }
}

impl NestedConfig {
    pub fn with_inner_paths(inner_paths: usize) -> Self {
        Self { inner_paths, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_paths < MIN_INNER_PATHS {
            return Err(argument(format!(
                "inner paths {} below the minimum {MIN_INNER_PATHS}",
                self.inner_paths
            )));
        }
        if let InnerScheme::ForwardEuler { steps: 0 } = self.scheme {
            return Err(argument("inner Euler scheme needs at least one step"));
        }
        Ok(())
    }
}

/// Per-output sample means and standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// Number of inner paths actually used (rounded up to pairs when antithetic).
    pub samples: usize,
}

/// Lower factor `L` (`m x rank`, row-major) of the conditional covariance on
/// `[t, T]`, with compensators `|L_j|^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerLaw {
    t: f64,
    horizon: f64,
    maturities: Vec<f64>,
    factor: Vec<f64>,
    rank: usize,
    half_var: Vec<f64>,
}

impl InnerLaw {
    pub fn new(vol: &VolSurface, t: f64, horizon: f64, maturities: &[f64]) -> Result<Self> {
        if !(t <= horizon) {
            return Err(argument(format!("conditioning date {t} after horizon {horizon}")));
        }
        let m = maturities.len();
        let cov = covariance_matrix(vol, t, horizon, maturities);
        let (factor, rank) = pivoted_cholesky(&cov, m);
        let half_var = (0..m)
            .map(|j| 0.5 * factor[j * rank..(j + 1) * rank].iter().map(|x| x * x).sum::<f64>())
            .collect();
        Ok(Self { t, horizon, maturities: maturities.to_vec(), factor, rank, half_var })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Writes `P^_T` into `out` and returns the density `P~_T(nu)`, given
    /// `start = P^_t` with `sum nu_j start_j = 1` and standard normals `z`.
    #[inline]
    fn sample(&self, start: &[f64], nu: &[f64], z: &[f64], sign: f64, out: &mut [f64]) -> f64 {
        let r = self.rank;
        let mut w = 0.0;
        for j in 0..start.len() {
            let row = &self.factor[j * r..(j + 1) * r];
            let mut zj = 0.0;
            for k in 0..r {
                zj += row[k] * z[k];
            }
            let v = start[j] * exp(sign * zj - self.half_var[j]);
            out[j] = v;
            w += nu[j] * v;
        }
        for v in out.iter_mut() {
            *v /= w;
        }
        w
    }
}

/// Composite Simpson rule for `int_t^T zeta_s(y_j) . zeta_s(y_k) ds`.
fn covariance_matrix(vol: &VolSurface, t: f64, horizon: f64, maturities: &[f64]) -> Vec<f64> {
    let m = maturities.len();
    let d = vol.factors();
    let mut cov = vec![0.0; m * m];
    if horizon <= t {
        return cov;
    }
    let n = COVARIANCE_INTERVALS;
    let h = (horizon - t) / n as f64;
    let mut z = vec![0.0; m * d];
    for i in 0..=n {
        let s = t + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0;
        for (j, &y) in maturities.iter().enumerate() {
            vol.eval_into(s, y, &mut z[j * d..(j + 1) * d]);
        }
        for j in 0..m {
            for k in 0..=j {
                let mut acc = 0.0;
                for q in 0..d {
                    acc += z[j * d + q] * z[k * d + q];
                }
                cov[j * m + k] += w * acc;
            }
        }
    }
    for j in 0..m {
        for k in 0..j {
            cov[k * m + j] = cov[j * m + k];
        }
    }
    cov
}

/// Pivoted Cholesky of a positive semidefinite `m x m` matrix. Returns the
/// `m x rank` factor (row-major) and the rank.
pub(crate) fn pivoted_cholesky(c: &[f64], m: usize) -> (Vec<f64>, usize) {
    let mut diag: Vec<f64> = (0..m).map(|i| c[i * m + i]).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    let tol = max_diag * 1e-14;
    let mut full = vec![0.0; m * m];
    let mut used = vec![false; m];
    let mut rank = 0;
    for k in 0..m {
        let mut p = usize::MAX;
        let mut best = tol;
        for i in 0..m {
            if !used[i] && diag[i] > best {
                best = diag[i];
                p = i;
            }
        }
        if p == usize::MAX {
            break;
        }
        used[p] = true;
        let lpk = sqrt(diag[p]);
        full[p * m + k] = lpk;
        for i in 0..m {
            if used[i] {
                continue;
            }
            let mut s = c[i * m + p];
            for q in 0..k {
                s -= full[i * m + q] * full[p * m + q];
            }
            let lik = s / lpk;
            full[i * m + k] = lik;
            diag[i] -= lik * lik;
        }
        rank += 1;
    }
    let mut factor = vec![0.0; m * rank];
    for i in 0..m {
        factor[i * rank..(i + 1) * rank].copy_from_slice(&full[i * m..i * m + rank]);
    }
    (factor, rank)
}

/// Start values and numeraire weights aligned with `maturities`.
fn inner_inputs(state: &ForwardCurve, maturities: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut start = Vec::with_capacity(maturities.len());
    for &y in maturities {
        let v = state.value(y)?;
        if !(v > 0.0) {
            return Err(domain(format!("forward bond price at {y} is {v}, must be > 0")));
        }
        start.push(v);
    }
    let mut nu = vec![0.0; maturities.len()];
    for a in state.numeraire().atoms() {
        let j = find_node(maturities, a.maturity)?;
        nu[j] += a.weight;
    }
    Ok((start, nu))
}

/// Estimates `E^[f(P^_T) | F_t]` for `outputs` quantities, where `t` is the
/// state's date and `f` receives `P^_T` at `maturities` (which must contain
/// the numeraire support of `state`).
pub fn conditional_expectation<F>(
    vol: &VolSurface,
    state: &ForwardCurve,
    horizon: f64,
    maturities: &[f64],
    config: &NestedConfig,
    seeds: &SeedSpec,
    outputs: usize,
    f: F,
) -> Result<Estimate>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    config.validate()?;
    let (start, nu) = inner_inputs(state, maturities)?;
    match config.scheme {
        InnerScheme::ExactReweighted => {
            let law = InnerLaw::new(vol, state.time(), horizon, maturities)?;
            Ok(exact_estimate(&law, &start, &nu, config, seeds, outputs, &f))
        }
        InnerScheme::ForwardEuler { steps } => {
            euler_estimate(vol, state, &start, horizon, maturities, steps, config, seeds, outputs, &f)
        }
    }
}

/// As [`conditional_expectation`] with a prebuilt [`InnerLaw`], for callers
/// that revisit the same date many times.
pub fn conditional_expectation_with_law<F>(
    law: &InnerLaw,
    state: &ForwardCurve,
    config: &NestedConfig,
    seeds: &SeedSpec,
    outputs: usize,
    f: F,
) -> Result<Estimate>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    config.validate()?;
    if (state.time() - law.t).abs() > crate::market::MATURITY_TOL {
        return Err(argument(format!(
            "state dated {} does not match inner law dated {}",
            state.time(),
            law.t
        )));
    }
    let (start, nu) = inner_inputs(state, &law.maturities)?;
    Ok(exact_estimate(law, &start, &nu, config, seeds, outputs, &f))
}

fn sample_count(config: &NestedConfig) -> usize {
    if config.antithetic {
        config.inner_paths.div_ceil(2) * 2
    } else {
        config.inner_paths
    }
}

/// Runs `body(chunk, len, acc)` over fixed-size chunks and merges the moments
/// in chunk order, so results do not depend on the thread count.
fn chunked<B>(samples: usize, config: &NestedConfig, outputs: usize, body: B) -> Estimate
where
    B: Fn(usize, usize, &mut [ShiftedSums]) + Sync,
{
    let units = if config.antithetic { samples / 2 } else { samples };
    let per_chunk = if config.antithetic { CHUNK / 2 } else { CHUNK };
    let chunks = units.div_ceil(per_chunk);
    let parts = par::map_range(chunks, |c| {
        let len = per_chunk.min(units - c * per_chunk);
        let mut acc = vec![ShiftedSums::default(); outputs];
        body(c, len, &mut acc);
        acc.iter().map(ShiftedSums::moments).collect::<Vec<_>>()
    });
    let mut total = vec![Moments::default(); outputs];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Estimate {
        mean: total.iter().map(Moments::mean).collect(),
        se: total.iter().map(Moments::se).collect(),
        samples,
    }
}

fn exact_estimate<F>(
    law: &InnerLaw,
    start: &[f64],
    nu: &[f64],
    config: &NestedConfig,
    seeds: &SeedSpec,
    outputs: usize,
    f: &F,
) -> Estimate
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let m = start.len();
    let samples = sample_count(config);
    chunked(samples, config, outputs, |c, len, acc| {
        let mut rng = seeds.path_rng(c as u64);
        let mut z = vec![0.0; law.rank];
        let mut curve = vec![0.0; m];
        let mut a = vec![0.0; outputs];
        let mut b = vec![0.0; outputs];
        for _ in 0..len {
            fill_normals(&mut rng, &mut z);
            let w = law.sample(start, nu, &z, 1.0, &mut curve);
            f(&curve, &mut a);
            if config.antithetic {
                let w2 = law.sample(start, nu, &z, -1.0, &mut curve);
                f(&curve, &mut b);
                for k in 0..outputs {
                    acc[k].push(0.5 * (w * a[k] + w2 * b[k]));
                }
            } else {
                for k in 0..outputs {
                    acc[k].push(w * a[k]);
                }
            }
        }
    })
}

fn euler_estimate<F>(
    vol: &VolSurface,
    state: &ForwardCurve,
    start: &[f64],
    horizon: f64,
    maturities: &[f64],
    steps: usize,
    config: &NestedConfig,
    seeds: &SeedSpec,
    outputs: usize,
    f: &F,
) -> Result<Estimate>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let samples = sample_count(config);
    if horizon <= state.time() {
        let mut out = vec![0.0; outputs];
        f(start, &mut out);
        return Ok(Estimate { mean: out, se: vec![0.0; outputs], samples });
    }
    let restricted =
        ForwardCurve::from_parts(state.time(), state.numeraire().clone(), maturities.to_vec(), start.to_vec())?;
    let grid = TimeGrid::uniform(state.time(), horizon, steps)?;
    let scheme = ForwardEuler::new(&restricted, vol, &grid)?;
    let d = vol.factors();
    let sqrt_dt = sqrt(grid.dt(0));
    let est = chunked(samples, config, outputs, |c, len, acc| {
        let mut rng = seeds.path_rng(c as u64);
        let mut a = vec![0.0; outputs];
        let mut b = vec![0.0; outputs];
        for _ in 0..len {
            let mut dw = vec![0.0; steps * d];
            fill_normals(&mut rng, &mut dw);
            dw.iter_mut().for_each(|x| *x *= sqrt_dt);
            let neg: Vec<f64> = if config.antithetic { dw.iter().map(|x| -x).collect() } else { Vec::new() };
            let path = scheme.path_from_increments(dw).expect("increment layout matches the grid");
            f(path.terminal(), &mut a);
            if config.antithetic {
                let path = scheme.path_from_increments(neg).expect("increment layout matches the grid");
                f(path.terminal(), &mut b);
                for k in 0..outputs {
                    acc[k].push(0.5 * (a[k] + b[k]));
                }
            } else {
                for k in 0..outputs {
                    acc[k].push(a[k]);
                }
            }
        }
    });
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::DiscreteMeasure;

    fn state(t: f64) -> ForwardCurve {
        ForwardCurve::from_parts(
            t,
            DiscreteMeasure::dirac(1.0),
            vec![1.0, 2.0],
            vec![1.0, libm::exp(-0.03)],
        )
        .unwrap()
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let vol = VolSurface::ho_lee(0.01);
        let mats = [1.0, 1.5, 2.0];
        let c = covariance_matrix(&vol, 0.2, 1.0, &mats);
        let (l, r) = pivoted_cholesky(&c, 3);
        // One Ho-Lee factor spans a two-dimensional space of (const, s) integrands.
        assert_eq!(r, 2);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..r).map(|k| l[i * r + k] * l[j * r + k]).sum();
                assert!((s - c[i * 3 + j]).abs() < 1e-18);
            }
        }
    }

    #[test]
    fn simpson_is_exact_for_ho_lee() {
        let vol = VolSurface::ho_lee(0.01);
        let c = covariance_matrix(&vol, 0.0, 1.0, &[2.0]);
        assert!((c[0] - 1e-4 * 7.0 / 3.0).abs() < 1e-18);
    }

    #[test]
    fn martingale_and_numeraire() {
        let vol = VolSurface::ho_lee(0.02);
        let st = state(0.0);
        let cfg = NestedConfig::with_inner_paths(20_000);
        let est = conditional_expectation(&vol, &st, 1.0, &[1.0, 2.0], &cfg, &SeedSpec::new(5), 2, |p, o| {
            o[0] = p[1];
            o[1] = p[0];
        })
        .unwrap();
        assert!((est.mean[0] - st.value(2.0).unwrap()).abs() < 3.0 * est.se[0]);
        // P^_T(nu) = 1 on every sample; the mean is the density's average.
        assert!((est.mean[1] - 1.0).abs() < 3.0 * est.se[1]);
    }

    #[test]
    fn euler_scheme_agrees_with_exact() {
        let vol = VolSurface::ho_lee(0.02);
        let st = state(0.0);
        let x0 = st.value(2.0).unwrap();
        let payoff = move |p: &[f64], o: &mut [f64]| o[0] = (p[1] - x0).max(0.0);
        let exact = NestedConfig::with_inner_paths(20_000);
        let euler = NestedConfig { scheme: InnerScheme::ForwardEuler { steps: 20 }, ..exact };
        let a = conditional_expectation(&vol, &st, 1.0, &[1.0, 2.0], &exact, &SeedSpec::new(1), 1, payoff).unwrap();
        let b = conditional_expectation(&vol, &st, 1.0, &[1.0, 2.0], &euler, &SeedSpec::new(2), 1, payoff).unwrap();
        let se = libm::hypot(a.se[0], b.se[0]);
        assert!((a.mean[0] - b.mean[0]).abs() < 3.0 * se, "{a:?} {b:?}");
    }

    #[test]
    fn zero_vol_is_deterministic() {
        let vol = VolSurface::zero(1);
        let st = state(0.3);
        let est = conditional_expectation(&vol, &st, 1.0, &[1.0, 2.0], &NestedConfig::default(), &SeedSpec::new(3), 1, |p, o| {
            o[0] = p[1]
        })
        .unwrap();
        assert_eq!(est.se[0], 0.0);
        assert!((est.mean[0] - st.value(2.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn rejects_small_budgets() {
        let cfg = NestedConfig::with_inner_paths(10);
        assert!(cfg.validate().is_err());
    }
}
