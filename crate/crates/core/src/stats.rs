//! Summary statistics over independent test blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn std_err(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn disjoint_below(&self, other: &Interval) -> bool {
        self.hi < other.lo
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Percentile bootstrap confidence interval for the mean.
pub fn bootstrap_ci<R: Rng + ?Sized>(xs: &[f64], resamples: usize, level: f64, rng: &mut R) -> Interval {
    let m = mean(xs);
    if xs.len() < 2 || resamples == 0 {
        return Interval { mean: m, lo: m, hi: m };
    }
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Interval {
        mean: m,
        lo: quantile_sorted(&means, alpha),
        hi: quantile_sorted(&means, 1.0 - alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn basic_moments() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(mean(&xs), 5.0);
        assert!((std_dev(&xs) - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(std_dev(&[1.0]), 0.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&s, 0.0), 0.0);
        assert_eq!(quantile_sorted(&s, 1.0), 3.0);
        assert_eq!(quantile_sorted(&s, 0.5), 1.5);
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let xs: Vec<f64> = (0..40).map(|k| k as f64).collect();
        let ci = bootstrap_ci(&xs, 1000, 0.95, &mut stream_rng(0, Stream::Bootstrap, 0));
        assert!(ci.lo < ci.mean && ci.mean < ci.hi);
        // normal approximation: 19.5 ± 1.96 · 11.69/√40 ≈ ±3.6
        assert!((ci.hi - ci.lo) > 5.0 && (ci.hi - ci.lo) < 9.5, "{ci:?}");
    }

    #[test]
    fn interval_relations() {
        let a = Interval { mean: 1.0, lo: 0.5, hi: 1.5 };
        let b = Interval { mean: 3.0, lo: 2.0, hi: 4.0 };
        assert!(a.disjoint_below(&b));
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&Interval { mean: 1.4, lo: 1.2, hi: 2.0 }));
    }
}
