//! Deterministic multi-factor bond volatility `zeta_t(y)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{argument, Result};
use crate::math::{dot, exp};

/// Sub-points of the midpoint rule used for time integrals of `zeta` over one step.
pub const STEP_QUADRATURE_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum VolFamily {
    /// `zeta_t(y) = c`, the same vector for every time and maturity.
    Constant(Vec<f64>),
    /// `zeta_t(y) = -beta (y - t)^+`, one factor per entry of `beta`.
    HoLee(Vec<f64>),
    /// `zeta_t(y) = -(sigma / a) (1 - exp(-a (y - t)^+))` per factor.
    Vasicek { sigma: Vec<f64>, mean_reversion: Vec<f64> },
    /// Time-constant vector per maturity bucket: a maturity takes the vector of
    /// the last node at or below it (the first node below the first bucket).
    PiecewiseMaturity(Vec<(f64, Vec<f64>)>),
}

/// `zeta_t(y)` valued in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSurface {
    family: VolFamily,
    factors: usize,
}

impl VolSurface {
    pub fn new(family: VolFamily) -> Result<Self> {
        let factors = match &family {
            VolFamily::Constant(c) => c.len(),
            VolFamily::HoLee(b) => b.len(),
            VolFamily::Vasicek { sigma, mean_reversion } => {
                if sigma.len() != mean_reversion.len() {
                    return Err(argument("vasicek sigma and mean reversion differ in length"));
                }
                if mean_reversion.iter().any(|a| !(*a >= 0.0)) {
                    return Err(argument("vasicek mean reversion must be >= 0"));
                }
                sigma.len()
            }
            VolFamily::PiecewiseMaturity(nodes) => {
                let d = nodes.first().map_or(0, |n| n.1.len());
                if nodes.iter().any(|n| n.1.len() != d) {
                    return Err(argument("piecewise volatility nodes must share a factor count"));
                }
                if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(argument("piecewise volatility nodes must be increasing in maturity"));
                }
                d
            }
        };
        if factors == 0 {
            return Err(argument("volatility needs at least one factor"));
        }
        let all_finite = match &family {
            VolFamily::Constant(c) | VolFamily::HoLee(c) => c.iter().all(|x| x.is_finite()),
            VolFamily::Vasicek { sigma, mean_reversion } => {
                sigma.iter().chain(mean_reversion).all(|x| x.is_finite())
            }
            VolFamily::PiecewiseMaturity(nodes) => {
                nodes.iter().all(|(m, v)| m.is_finite() && v.iter().all(|x| x.is_finite()))
            }
        };
        if !all_finite {
            return Err(argument("volatility parameters must be finite"));
        }
        Ok(Self { family, factors })
    }

    pub fn constant(values: Vec<f64>) -> Result<Self> {
        Self::new(VolFamily::Constant(values))
    }

    pub fn ho_lee(beta: f64) -> Self {
        Self { family: VolFamily::HoLee(vec![beta]), factors: 1 }
    }

    pub fn vasicek(sigma: f64, mean_reversion: f64) -> Result<Self> {
        Self::new(VolFamily::Vasicek { sigma: vec![sigma], mean_reversion: vec![mean_reversion] })
    }

    /// The zero surface (deterministic world).
    pub fn zero(factors: usize) -> Self {
        Self { family: VolFamily::Constant(vec![0.0; factors.max(1)]), factors: factors.max(1) }
    }

    pub fn family(&self) -> &VolFamily {
        &self.family
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    /// Writes `zeta_t(y)` into `out` (length `factors`).
    pub fn eval_into(&self, t: f64, y: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.factors);
        let tau = (y - t).max(0.0);
        match &self.family {
            VolFamily::Constant(c) => out.copy_from_slice(c),
            VolFamily::HoLee(beta) => {
                for (o, b) in out.iter_mut().zip(beta) {
                    *o = -b * tau;
                }
            }
            VolFamily::Vasicek { sigma, mean_reversion } => {
                for ((o, s), a) in out.iter_mut().zip(sigma).zip(mean_reversion) {
                    *o = if *a * tau < 1e-8 {
                        -s * tau * (1.0 - 0.5 * a * tau)
                    } else {
                        -(s / a) * (1.0 - exp(-a * tau))
                    };
                }
            }
            VolFamily::PiecewiseMaturity(nodes) => {
                let pos = nodes.partition_point(|n| n.0 <= y + crate::market::MATURITY_TOL);
                out.copy_from_slice(&nodes[pos.saturating_sub(1)].1);
            }
        }
    }

    pub fn eval(&self, t: f64, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.factors];
        self.eval_into(t, y, &mut out);
        out
    }

    /// Average of `zeta_s(y)` over `[t0, t1]` by the composite midpoint rule
    /// with [`STEP_QUADRATURE_POINTS`] sub-points.
    pub fn average_into(&self, t0: f64, t1: f64, y: f64, out: &mut [f64]) {
        let n = STEP_QUADRATURE_POINTS;
        let h = (t1 - t0) / n as f64;
        let mut buf = vec![0.0; self.factors];
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            self.eval_into(t0 + (i as f64 + 0.5) * h, y, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
    }

    /// `int_{t0}^{t1} zeta_s(y1) . zeta_s(y2) ds` by the composite midpoint rule.
    pub fn covariance(&self, t0: f64, t1: f64, y1: f64, y2: f64, points: usize) -> f64 {
        let n = points.max(1);
        let h = (t1 - t0) / n as f64;
        let mut a = vec![0.0; self.factors];
        let mut b = vec![0.0; self.factors];
        let mut sum = 0.0;
        for i in 0..n {
            let s = t0 + (i as f64 + 0.5) * h;
            self.eval_into(s, y1, &mut a);
            self.eval_into(s, y2, &mut b);
            sum += dot(&a, &b);
        }
        sum * h
    }

    /// Samples `zeta` on `times x maturities` and rejects non-finite values.
    pub fn check_bounded(&self, times: &[f64], maturities: &[f64]) -> Result<()> {
        let mut buf = vec![0.0; self.factors];
        for &t in times {
            for &y in maturities {
                self.eval_into(t, y, &mut buf);
                if buf.iter().any(|v| !v.is_finite()) {
                    return Err(argument(format!("volatility is not finite at t={t}, y={y}")));
                }
            }
        }
        Ok(())
    }

    /// True when `zeta_t(y)` does not depend on `y` on the given maturities.
    pub fn is_flat_in_maturity(&self, t: f64, maturities: &[f64]) -> bool {
        let Some(&first) = maturities.first() else { return true };
        let base = self.eval(t, first);
        maturities.iter().all(|&y| self.eval(t, y) == base)
    }
}
