//! Malliavin objects of the forward curve and the Clark–Ocone integrand.
//!
//! With deterministic `zeta`, the forward curve has
//! `D_t P^_u(y) = sigma^_t(P^_u, y)` for `t <= u`, where
//! `sigma^_t(P^, y) = P^(y) sum_z nu(z) P^(z) (zeta_t(y) - zeta_t(z))`.
//! The integrand `alpha^_t` of `xi^ = E^[xi^] + int <alpha^_t, dW^_t>` is
//! estimated term by term with the nested engine.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{argument, Result};
use crate::hedging::{clark_ocone_strategy, instrument_strategy};
use crate::instrument::{InstrumentKind, InstrumentSpec};
use crate::market::{Curve, DiscreteMeasure, ForwardCurve, MATURITY_TOL};
use crate::math::{dot, sqrt};
use crate::nested::{conditional_expectation_with_law, InnerLaw, NestedConfig};
use crate::par;
use crate::rng::SeedSpec;
use crate::simulation::{CurvePath, DiscountedExact, ForwardEuler, TimeGrid};
use crate::stats::{log_log_slope, Moments};
use crate::vol::VolSurface;

const TAG_OUTER: u64 = 0x6f75;
const TAG_INNER: u64 = 0x696e;
const TAG_REFERENCE: u64 = 0x7266;

/// Inner-path multiplier for nested reference prices.
pub const REFERENCE_BUDGET: usize = 1000;

/// `sigma^_t(P^, y)` with `nu` the curve's numeraire.
pub fn sigma_hat_field(curve: &ForwardCurve, vol: &VolSurface, t: f64, y: f64) -> Result<Vec<f64>> {
    let d = vol.factors();
    let py = curve.value(y)?;
    let zy = vol.eval(t, y);
    let mut out = vec![0.0; d];
    let mut zz = vec![0.0; d];
    for a in curve.numeraire().atoms() {
        let c = a.weight * curve.value(a.maturity)?;
        vol.eval_into(t, a.maturity, &mut zz);
        for k in 0..d {
            out[k] += c * (zy[k] - zz[k]);
        }
    }
    out.iter_mut().for_each(|o| *o *= py);
    Ok(out)
}

/// `D_t P^_u(y)`: the field with volatility at `t` and curve at `u >= t`.
pub fn malliavin_derivative(curve_u: &ForwardCurve, vol: &VolSurface, t: f64, y: f64) -> Result<Vec<f64>> {
    if t > curve_u.time() + MATURITY_TOL {
        return Err(argument(format!(
            "Malliavin derivative needs t <= u, got t={t}, u={}",
            curve_u.time()
        )));
    }
    sigma_hat_field(curve_u, vol, t, y)
}

/// `(P^eps_u(y) - P^_u(y)) / eps` after adding `eps` to factor `factor` of
/// the increment of step `step` on a risk-neutral path.
pub fn pathwise_bump(
    scheme: &DiscountedExact,
    dw: &[f64],
    step: usize,
    factor: usize,
    eps: f64,
    nu: &DiscreteMeasure,
    u_step: usize,
    y: f64,
) -> Result<f64> {
    let d = dw.len() / scheme.grid().steps();
    if step >= scheme.grid().steps() || factor >= d || u_step > scheme.grid().steps() {
        return Err(argument("bump indices outside the path"));
    }
    let base = scheme.path_from_increments(dw.to_vec())?;
    let mut bumped_dw = dw.to_vec();
    bumped_dw[step * d + factor] += eps;
    let bumped = scheme.path_from_increments(bumped_dw)?;
    let a = base.forward_curve(u_step, nu)?.value(y)?;
    let b = bumped.forward_curve(u_step, nu)?.value(y)?;
    Ok((b - a) / eps)
}

/// `alpha^_t` at one date with its three terms:
/// `E^[g' P^_T(y)] zeta_t(y) mu(dy)`, `-E^[X^_T g' P^_T(y)] zeta_t(y) nu(dy)`
/// and `E^[g (P^_T(y) - P^_t(y))] zeta_t(y) nu(dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    pub time: f64,
    pub value: Vec<f64>,
    pub se: Vec<f64>,
    pub terms: [Vec<f64>; 3],
    pub term_se: [Vec<f64>; 3],
}

/// `alpha^` along a path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlphaProcess {
    pub dates: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub terms: Vec<[Vec<f64>; 3]>,
}

/// Estimates `alpha^_t` from the state at `t` with a prebuilt inner law over
/// `spec.support()`.
pub fn alpha_with_law(
    state: &ForwardCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    law: &InnerLaw,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<AlphaEstimate> {
    let support = spec.support();
    let state = if state.numeraire() == spec.nu() { state.clone() } else { state.renormalize(spec.nu())? };
    let t = state.time();
    let d = vol.factors();
    let mu: Vec<f64> = support.iter().map(|&y| spec.mu().weight_at(y)).collect();
    let nu: Vec<f64> = support.iter().map(|&y| spec.nu().weight_at(y)).collect();
    let start: Vec<f64> = support.iter().map(|&y| state.value(y)).collect::<Result<_>>()?;
    let zeta: Vec<f64> = support.iter().flat_map(|&y| vol.eval(t, y)).collect();
    let payoff = *spec.payoff();
    let est = if d == 1 {
        // One factor: the same sums with scalar zeta, which keeps the inner loop tight.
        conditional_expectation_with_law(law, &state, config, seeds, 4, |p, out| {
            let x: f64 = mu.iter().zip(p).map(|(w, v)| w * v).sum();
            let (g, gp) = (payoff.value(x), payoff.derivative(x));
            let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
            for j in 0..p.len() {
                s1 += mu[j] * p[j] * zeta[j];
                s2 += nu[j] * p[j] * zeta[j];
                s3 += nu[j] * (p[j] - start[j]) * zeta[j];
            }
            let (t1, t2, t3) = (gp * s1, -x * gp * s2, g * s3);
            out[0] = t1 + t2 + t3;
            out[1] = t1;
            out[2] = t2;
            out[3] = t3;
        })?
    } else {
        conditional_expectation_with_law(law, &state, config, seeds, 4 * d, |p, out| {
            let x: f64 = mu.iter().zip(p).map(|(w, v)| w * v).sum();
            let (g, gp) = (payoff.value(x), payoff.derivative(x));
            out.fill(0.0);
            let (total, rest) = out.split_at_mut(d);
            let (t1, rest) = rest.split_at_mut(d);
            let (t2, t3) = rest.split_at_mut(d);
            for (j, z) in zeta.chunks_exact(d).enumerate() {
                let c1 = mu[j] * gp * p[j];
                let c2 = -nu[j] * x * gp * p[j];
                let c3 = nu[j] * g * (p[j] - start[j]);
                for (k, &zk) in z.iter().enumerate() {
                    t1[k] += c1 * zk;
                    t2[k] += c2 * zk;
                    t3[k] += c3 * zk;
                }
            }
            for k in 0..d {
                total[k] = t1[k] + t2[k] + t3[k];
            }
        })?
    };
    let part = |v: &[f64], i: usize| v[i * d..(i + 1) * d].to_vec();
    Ok(AlphaEstimate {
        time: t,
        value: part(&est.mean, 0),
        se: part(&est.se, 0),
        terms: [part(&est.mean, 1), part(&est.mean, 2), part(&est.mean, 3)],
        term_se: [part(&est.se, 1), part(&est.se, 2), part(&est.se, 3)],
    })
}

/// As [`alpha_with_law`], building the inner law for the state's date.
pub fn alpha_estimate(
    state: &ForwardCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<AlphaEstimate> {
    let law = InnerLaw::new(vol, state.time(), spec.exercise(), &spec.support())?;
    alpha_with_law(state, spec, vol, &law, config, seeds)
}

fn inner_laws(vol: &VolSurface, grid: &TimeGrid, spec: &InstrumentSpec) -> Result<Vec<InnerLaw>> {
    let support = spec.support();
    grid.times()[..grid.steps()]
        .iter()
        .map(|&t| InnerLaw::new(vol, t, spec.exercise(), &support))
        .collect()
}

fn check_path_horizon(path: &CurvePath, spec: &InstrumentSpec) -> Result<()> {
    let end = *path.times().last().expect("paths have dates");
    if (end - spec.exercise()).abs() > MATURITY_TOL {
        return Err(argument(format!(
            "path ends at {end}, the representation needs it to end at exercise {}",
            spec.exercise()
        )));
    }
    Ok(())
}

/// `alpha^` at every grid date before exercise of a forward-measure path.
/// Date `l` uses inner seeds `seeds.child(_, 0, l)`.
pub fn alpha_process(
    path: &CurvePath,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<AlphaProcess> {
    check_path_horizon(path, spec)?;
    let mut out = AlphaProcess::default();
    for l in 0..path.steps() {
        let state = path.forward_curve(l, spec.nu())?;
        let a = alpha_estimate(&state, spec, vol, config, &seeds.child(TAG_INNER, 0, l as u64))?;
        out.dates.push(a.time);
        out.values.push(a.value);
        out.se.push(a.se);
        out.terms.push(a.terms);
    }
    Ok(out)
}

/// Per-path residuals `R = xi^ - E^[xi^] - sum_l <alpha^_{t_l}, dW^_l>`.
/// `reference` is the value used for `E^[xi^]` and `reference_se` its standard
/// error (zero for closed forms); `claim_mean` is the sample mean of the
/// claims, for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    pub steps: usize,
    pub dt: f64,
    pub paths: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub reference: f64,
    pub reference_se: f64,
    pub claim_mean: f64,
}

impl ResidualStats {
    /// Standard error of `mean`, including the error of the reference price.
    pub fn total_se(&self) -> f64 {
        sqrt(self.se * self.se + self.reference_se * self.reference_se)
    }
}

/// Residual statistics given per-path claims, stochastic integrals and the
/// price `reference = (value, se)` standing in for `E^[xi^]`.
///
/// Centering on the sample mean of the claims instead would make the mean
/// residual equal minus the mean integral, whose noise is that of the claim
/// and not of the residual.
pub fn co_representation_residual(
    claims: &[f64],
    integrals: &[f64],
    reference: (f64, f64),
    steps: usize,
    dt: f64,
) -> Result<ResidualStats> {
    if claims.len() != integrals.len() || claims.is_empty() {
        return Err(argument("claims and integrals must be nonempty and of equal length"));
    }
    let claim_mean = Moments::from_iter(claims.iter().copied()).mean();
    let (reference, reference_se) = reference;
    let r = Moments::from_iter(claims.iter().zip(integrals).map(|(c, i)| (c - reference) - i));
    Ok(ResidualStats {
        steps,
        dt,
        paths: claims.len(),
        mean: r.mean(),
        sd: r.sd(),
        se: r.se(),
        reference,
        reference_se,
        claim_mean,
    })
}

/// `E^[xi^]` at the initial state: the closed form for bond calls and
/// caplets, otherwise a nested estimate with `REFERENCE_BUDGET` times the
/// inner paths. Returns the value and its standard error.
pub fn reference_price(
    initial: &ForwardCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<(f64, f64)> {
    match spec.kind() {
        InstrumentKind::BondCall | InstrumentKind::Caplet => {
            Ok((instrument_strategy(initial, spec, vol, config, seeds)?.value, 0.0))
        }
        _ => {
            let big = NestedConfig { inner_paths: config.inner_paths.saturating_mul(REFERENCE_BUDGET), ..*config };
            let est = clark_ocone_strategy(initial, spec, vol, &big, seeds)?;
            Ok((est.value, est.value_se))
        }
    }
}

/// Claim and `sum_l <alpha^_{t_l}, dW^_l>` along one forward-measure path.
pub fn path_integral(
    path: &CurvePath,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    laws: &[InnerLaw],
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<(f64, f64)> {
    check_path_horizon(path, spec)?;
    let mut integral = 0.0;
    for l in 0..path.steps() {
        let state = path.forward_curve(l, spec.nu())?;
        let a = alpha_with_law(&state, spec, vol, &laws[l], config, &seeds.child(TAG_INNER, 0, l as u64))?;
        integral += dot(&a.value, path.dw(l));
    }
    let terminal = path.forward_curve(path.steps(), spec.nu())?;
    let claim = spec.forward_payoff(spec.underlying(&terminal)?);
    Ok((claim, integral))
}

/// Residual statistics per step count on forward-measure Euler paths from
/// `initial` to exercise, plus the fitted slope of `ln sd` against `ln dt`.
pub fn representation_study(
    initial: &ForwardCurve,
    spec: &InstrumentSpec,
    vol: &VolSurface,
    steps_list: &[usize],
    outer_paths: usize,
    config: &NestedConfig,
    seeds: &SeedSpec,
) -> Result<(Vec<ResidualStats>, Option<f64>)> {
    if steps_list.is_empty() || outer_paths < 2 {
        return Err(argument("representation study needs step counts and at least two paths"));
    }
    let initial = if initial.numeraire() == spec.nu() { initial.clone() } else { initial.renormalize(spec.nu())? };
    let reference = reference_price(&initial, spec, vol, config, &seeds.child(TAG_REFERENCE, 0, 0))?;
    let mut rows = Vec::with_capacity(steps_list.len());
    for &steps in steps_list {
        let grid = TimeGrid::uniform(initial.time(), spec.exercise(), steps)?;
        let scheme = ForwardEuler::new(&initial, vol, &grid)?;
        let laws = inner_laws(vol, &grid, spec)?;
        let outer = seeds.child(TAG_OUTER, steps as u64, 0);
        let results = par::try_map_range(outer_paths, |p| {
            let path = scheme.path(&outer, p as u64);
            path_integral(&path, spec, vol, &laws, config, &seeds.child(TAG_INNER, steps as u64, p as u64))
        })?;
        let (claims, integrals): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
        rows.push(co_representation_residual(&claims, &integrals, reference, steps, grid.dt(0))?);
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.dt, r.sd)).collect();
    Ok((rows, log_log_slope(&points)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::Payoff;
    use crate::market::{forward_normalize, BondCurve};

    fn flat(t: f64) -> BondCurve {
        BondCurve::new(t, [1.0, 1.5, 2.0].iter().map(|&y| (y, libm::exp(-0.03 * y))).collect()).unwrap()
    }

    #[test]
    fn field_zeros() {
        let vol = VolSurface::ho_lee(0.01);
        let fc = forward_normalize(&flat(0.0), &DiscreteMeasure::dirac(1.0)).unwrap();
        assert_eq!(sigma_hat_field(&fc, &vol, 0.2, 1.0).unwrap(), vec![0.0]);
        let flat_vol = VolSurface::constant(vec![0.01, 0.02]).unwrap();
        for y in [1.0, 1.5, 2.0] {
            assert_eq!(sigma_hat_field(&fc, &flat_vol, 0.2, y).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn field_two_atom_brute_force() {
        let beta = 0.01;
        let vol = VolSurface::ho_lee(beta);
        let nu = DiscreteMeasure::from_pairs(&[(1.5, 0.5), (2.0, 0.5)]).unwrap();
        let fc = forward_normalize(&flat(0.0), &nu).unwrap();
        let t = 0.25;
        let z = |y: f64| -beta * (y - t);
        let p = |y: f64| fc.value(y).unwrap();
        let expected = p(1.0) * (0.5 * p(1.5) * (z(1.0) - z(1.5)) + 0.5 * p(2.0) * (z(1.0) - z(2.0)));
        assert!((sigma_hat_field(&fc, &vol, t, 1.0).unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn derivative_rejects_future_times() {
        let vol = VolSurface::ho_lee(0.01);
        let fc = forward_normalize(&flat(0.5), &DiscreteMeasure::dirac(1.0)).unwrap();
        assert!(malliavin_derivative(&fc, &vol, 0.6, 2.0).is_err());
        assert!(malliavin_derivative(&fc, &vol, 0.4, 2.0).is_ok());
    }

    #[test]
    fn constant_claim_has_null_integrand() {
        let vol = VolSurface::ho_lee(0.02);
        let spec = InstrumentSpec::generic(
            DiscreteMeasure::dirac(2.0),
            DiscreteMeasure::dirac(1.0),
            1.0,
            1.0,
            Payoff::Affine { slope: 0.0, intercept: 0.4 },
        )
        .unwrap();
        let fc = forward_normalize(&flat(0.3), spec.nu()).unwrap();
        let a = alpha_estimate(&fc, &spec, &vol, &NestedConfig::with_inner_paths(4000), &SeedSpec::new(2)).unwrap();
        assert!(a.value[0].abs() <= 3.0 * a.se[0] + 1e-15, "{a:?}");
        assert_eq!(a.terms[0], vec![0.0]);
        assert_eq!(a.terms[1], vec![0.0]);
    }

    #[test]
    fn zero_vol_residual_vanishes() {
        let vol = VolSurface::zero(1);
        let spec = InstrumentSpec::bond_call(1.0, 2.0, 0.96).unwrap();
        let fc = forward_normalize(&flat(0.0), spec.nu()).unwrap();
        let (rows, _) =
            representation_study(&fc, &spec, &vol, &[4, 8], 8, &NestedConfig::with_inner_paths(1000), &SeedSpec::new(1))
                .unwrap();
        for r in rows {
            assert_eq!(r.sd, 0.0);
            assert_eq!(r.mean, 0.0);
        }
    }
}
