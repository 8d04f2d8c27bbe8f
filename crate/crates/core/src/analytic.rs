//! Black–Scholes–Margrabe pricing when the forward price `X^_t = P^_t(mu)` is a
//! driftless geometric Brownian motion with deterministic volatility.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{argument, domain, Result};
use crate::instrument::{InstrumentKind, InstrumentSpec};
use crate::market::Curve;
use crate::math::{ln, norm_cdf, norm_sq, sqrt};
use crate::vol::VolSurface;

/// Quadrature points of [`integrated_vol`].
pub const INTEGRATED_VOL_POINTS: usize = 64;

/// Relative tolerance of the `x = Xt / Mt` consistency check in [`margrabe_price`].
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// Deterministic forward-price volatility `sigma^(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaHat {
    /// Constant vector.
    Constant(Vec<f64>),
    /// Scalar `intercept + slope * t`.
    Linear { intercept: f64, slope: f64 },
    /// `sum_m c_m (zeta_t(anchor) - zeta_t(m))` over `legs = [(m, c_m)]`.
    Spread { vol: VolSurface, anchor: f64, legs: Vec<(f64, f64)> },
}

impl SigmaHat {
    pub fn factors(&self) -> usize {
        match self {
            SigmaHat::Constant(c) => c.len(),
            SigmaHat::Linear { .. } => 1,
            SigmaHat::Spread { vol, .. } => vol.factors(),
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            SigmaHat::Constant(c) => out.copy_from_slice(c),
            SigmaHat::Linear { intercept, slope } => out[0] = intercept + slope * t,
            SigmaHat::Spread { vol, anchor, legs } => {
                let d = vol.factors();
                let mut a = vec![0.0; d];
                let mut b = vec![0.0; d];
                vol.eval_into(t, *anchor, &mut a);
                out.iter_mut().for_each(|o| *o = 0.0);
                for &(m, c) in legs {
                    vol.eval_into(t, m, &mut b);
                    for k in 0..d {
                        out[k] += c * (a[k] - b[k]);
                    }
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.factors()];
        self.eval_into(t, &mut out);
        out
    }

    /// `int_t0^t1 |sigma^(s)|^2 ds` by the composite midpoint rule.
    pub fn variance(&self, t0: f64, t1: f64, points: usize) -> f64 {
        let n = points.max(1);
        let h = (t1 - t0) / n as f64;
        let mut buf = vec![0.0; self.factors()];
        let mut sum = 0.0;
        for i in 0..n {
            self.eval_into(t0 + (i as f64 + 0.5) * h, &mut buf);
            sum += norm_sq(&buf);
        }
        sum * h
    }
}

/// Forward price model `dX^_t = X^_t sigma^(t) . dW^_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmForwardModel {
    sigma: SigmaHat,
    x0: f64,
}

impl GbmForwardModel {
    pub fn new(sigma: SigmaHat, x0: f64) -> Result<Self> {
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(domain(format!("initial forward price {x0} must be > 0")));
        }
        if sigma.factors() == 0 {
            return Err(argument("sigma needs at least one factor"));
        }
        Ok(Self { sigma, x0 })
    }

    pub fn sigma(&self) -> &SigmaHat {
        &self.sigma
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// `v(t, T)`.
    pub fn integrated_vol(&self, t: f64, horizon: f64) -> Result<f64> {
        integrated_vol(self, t, horizon)
    }
}

/// `v(t, T) = sqrt(int_t^T |sigma^(s)|^2 ds)`.
pub fn integrated_vol(model: &GbmForwardModel, t: f64, horizon: f64) -> Result<f64> {
    if t > horizon {
        return Err(argument(format!("integrated vol needs t <= T, got t={t}, T={horizon}")));
    }
    if t == horizon {
        return Ok(0.0);
    }
    Ok(sqrt(model.sigma.variance(t, horizon, INTEGRATED_VOL_POINTS).max(0.0)))
}

/// `(Phi(ln(x/k)/v + v/2), Phi(ln(x/k)/v - v/2))`, with indicator limits at `v = 0`.
pub fn phi_terms(kappa: f64, x: f64, v: f64) -> Result<(f64, f64)> {
    if !(x > 0.0 && x.is_finite()) || !(kappa > 0.0 && kappa.is_finite()) {
        return Err(domain(format!("phi terms need x > 0 and kappa > 0, got x={x}, kappa={kappa}")));
    }
    if !(v >= 0.0) {
        return Err(domain(format!("integrated volatility {v} must be >= 0")));
    }
    Ok(call_terms(kappa, x, v))
}

/// As [`phi_terms`] but also accepting `kappa <= 0`, where exercise is certain.
pub(crate) fn call_terms(kappa: f64, x: f64, v: f64) -> (f64, f64) {
    if kappa <= 0.0 {
        return (1.0, 1.0);
    }
    if v == 0.0 {
        let p = if x > kappa {
            1.0
        } else if x < kappa {
            0.0
        } else {
            0.5
        };
        return (p, p);
    }
    let m = ln(x / kappa) / v;
    (norm_cdf(m + 0.5 * v), norm_cdf(m - 0.5 * v))
}

/// Forward call price `C^(t, x) = x Phi+ - kappa Phi-`.
pub fn forward_call_price(kappa: f64, x: f64, v: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(domain(format!("forward price {x} must be > 0")));
    }
    if kappa < 0.0 {
        return Err(domain(format!("strike {kappa} must be >= 0")));
    }
    if !(v >= 0.0) {
        return Err(domain(format!("integrated volatility {v} must be >= 0")));
    }
    let (p, m) = call_terms(kappa, x, v);
    Ok(x * p - kappa * m)
}

/// Forward put price, by parity from [`forward_call_price`].
pub fn forward_put_price(kappa: f64, x: f64, v: f64) -> Result<f64> {
    Ok(forward_call_price(kappa, x, v)? - (x - kappa))
}

/// Cash price `Xt Phi+ - kappa Mt Phi-` of `(X_T - kappa M_T)^+`.
pub fn margrabe_price(x: f64, kappa: f64, numeraire: f64, asset: f64, v: f64) -> Result<f64> {
    if !(numeraire > 0.0) {
        return Err(domain(format!("numeraire value {numeraire} must be > 0")));
    }
    let implied = asset / numeraire;
    if (x - implied).abs() > CONSISTENCY_TOL * implied.abs().max(f64::MIN_POSITIVE) {
        return Err(argument(format!(
            "forward price {x} inconsistent with asset/numeraire = {implied}"
        )));
    }
    if kappa == 0.0 {
        return Ok(asset);
    }
    let (p, m) = {
        if !(v >= 0.0) {
            return Err(domain(format!("integrated volatility {v} must be >= 0")));
        }
        if !(x > 0.0) || kappa < 0.0 {
            return Err(domain(format!("need x > 0 and kappa >= 0, got x={x}, kappa={kappa}")));
        }
        call_terms(kappa, x, v)
    };
    Ok(asset * p - kappa * numeraire * m)
}

/// Deterministic `sigma^` under which `P^(mu)` is lognormal for the instrument.
///
/// Swaptions use the annuity and swap weights of `curve0`, frozen at its time
/// (a deterministic approximation of the stochastic swap-rate volatility).
pub fn effective_vol<C: Curve + ?Sized>(
    vol: &VolSurface,
    spec: &InstrumentSpec,
    curve0: Option<&C>,
) -> Result<SigmaHat> {
    let single = |m: &crate::market::DiscreteMeasure| -> Option<f64> {
        match m.atoms() {
            [a] => Some(a.maturity),
            _ => None,
        }
    };
    let spread = |anchor: f64, legs: Vec<(f64, f64)>| SigmaHat::Spread { vol: vol.clone(), anchor, legs };
    match spec.kind() {
        InstrumentKind::BondCall | InstrumentKind::Caplet => {
            let (a, b) = (single(spec.mu()).unwrap(), single(spec.nu()).unwrap());
            Ok(spread(a, vec![(b, 1.0)]))
        }
        InstrumentKind::Swaption => {
            let tenor = spec.tenor().ok_or_else(|| argument("swaption without tenor structure"))?;
            let curve = curve0.ok_or_else(|| argument("swaption effective vol needs an initial curve"))?;
            let dates = tenor.maturities();
            let (ti, tj) = (dates[0], dates[dates.len() - 1]);
            let p_mu = curve.value(ti)? - curve.value(tj)?;
            if p_mu.abs() < 1e-300 {
                return Err(domain("swap leg P(T_i) - P(T_j) vanishes on the initial curve"));
            }
            let mut p_nu = 0.0;
            for w in dates.windows(2) {
                p_nu += (w[1] - w[0]) * curve.value(w[1])?;
            }
            let mut legs = vec![(tj, curve.value(tj)? / p_mu)];
            for w in dates.windows(2) {
                legs.push((w[1], (w[1] - w[0]) * curve.value(w[1])? / p_nu));
            }
            Ok(spread(ti, legs))
        }
        InstrumentKind::Exchange | InstrumentKind::Generic => {
            match (single(spec.mu()), single(spec.nu())) {
                (Some(a), Some(b)) if spec.mu().atoms()[0].weight > 0.0 => Ok(spread(a, vec![(b, 1.0)])),
                _ => Err(argument(format!(
                    "no lognormal effective volatility for {} instrument with multi-atom or short basket",
                    spec.kind().name()
                ))),
            }
        }
    }
}
