//! Running moments with an associative merge, and log-log slope fits.

use crate::math::{ln, sqrt};

/// Count, mean and centered sum of squares (Welford updates, Chan merges).
/// Merging in a fixed order gives bit-identical results for a fixed batching.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    mean: f64,
    m2: f64,
}

/// Division-free accumulator for hot loops: sums about the first value.
#[derive(Clone, Copy, Debug, Default)]
pub struct ShiftedSums {
    n: u64,
    shift: f64,
    s1: f64,
    s2: f64,
}

impl ShiftedSums {
    #[inline]
    pub fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.shift = x;
        }
        self.n += 1;
        let d = x - self.shift;
        self.s1 += d;
        self.s2 += d * d;
    }

    pub fn moments(&self) -> Moments {
        Moments::from_shifted(self.n, self.shift, self.s1, self.s2)
    }
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        self.mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.n += other.n;
    }

    /// Moments of `n` values given their sums about `shift`.
    pub fn from_shifted(n: u64, shift: f64, s1: f64, s2: f64) -> Self {
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        Self { n, mean: shift + s1 / nf, m2: (s2 - s1 * s1 / nf).max(0.0) }
    }

    pub fn from_iter(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut m = Self::default();
        xs.into_iter().for_each(|x| m.push(x));
        m
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (zero below two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n as f64 - 1.0)).max(0.0)
    }

    pub fn sd(&self) -> f64 {
        sqrt(self.variance())
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            sqrt(self.variance() / self.n as f64)
        }
    }
}

/// Two-pass mean and sample standard deviation of a slice.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var))
}

/// Least-squares slope of `ln y` against `ln x`. `None` when fewer than two
/// points or any value is not strictly positive.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + ln(x), b + ln(y)));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = ln(x) - mx;
        sxy += dx * (ln(y) - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_equals_sequential() {
        let xs = [1.0, 2.5, -0.5, 4.0, 3.0];
        let all = Moments::from_iter(xs);
        let mut a = Moments::from_iter(xs[..2].iter().copied());
        a.merge(&Moments::from_iter(xs[2..].iter().copied()));
        assert_eq!(a.n, all.n);
        assert_eq!(Moments::from_iter([0.7; 5]).variance(), 0.0);
        assert!((a.mean() - all.mean()).abs() < 1e-15);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
        let (m, sd) = mean_sd(&xs);
        assert!((m - all.mean()).abs() < 1e-15);
        assert!((sd - all.sd()).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: [(f64, f64); 4] = [(1.0, 2.0), (2.0, 2.0 * 2f64.sqrt()), (4.0, 4.0), (8.0, 2.0 * 8f64.sqrt())];
        assert!((log_log_slope(&pts).unwrap() - 0.5).abs() < 1e-12);
        assert!(log_log_slope(&[(1.0, 0.0), (2.0, 1.0)]).is_none());
    }
}
