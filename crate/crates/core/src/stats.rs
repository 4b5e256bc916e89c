//! Streaming statistics: compensated sums, mergeable moment accumulators and
//! Kolmogorov–Smirnov tests.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF, Normal};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Count, mean and central sums `M2, M3, M4`, with the pairwise merge of
/// Chan et al. / Pébay; merging any partition reproduces the one-pass result
/// up to rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub fn from_slice(values: &[f64]) -> Self {
        let mut m = Self::default();
        for &v in values {
            m.push(v);
        }
        m
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        Self {
            count: self.count + other.count,
            mean,
            m2,
            m3,
            m4,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// Non-excess kurtosis `n M4 / M2^2` (3 for a normal sample).
    pub fn kurtosis(&self) -> f64 {
        self.count as f64 * self.m4 / (self.m2 * self.m2)
    }

    /// Mean of `x^2`.
    pub fn raw_second(&self) -> f64 {
        self.m2 / self.count as f64 + self.mean * self.mean
    }

    /// Standard error of the sample mean of `x^2`, from the fourth moment.
    pub fn raw_second_std_error(&self) -> f64 {
        let n = self.count as f64;
        let mu = self.mean;
        let (c2, c3, c4) = (self.m2 / n, self.m3 / n, self.m4 / n);
        // Var(x^2) = E[x^4] - E[x^2]^2 in central moments
        let e2 = c2 + mu * mu;
        let e4 = c4 + 4.0 * mu * c3 + 6.0 * mu * mu * c2 + mu.powi(4);
        ((e4 - e2 * e2).max(0.0) / (n - 1.0)).sqrt()
    }
}

/// Two-sided Kolmogorov–Smirnov distance between the sample and `cdf`.
/// Sorts `sample` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Asymptotic two-sided KS critical value at level `alpha`, with Stephens'
/// small-sample correction.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let sn = (n as f64).sqrt();
    c / (sn + 0.12 + 0.11 / sn)
}

pub fn normal_cdf(mean: f64, sd: f64) -> impl Fn(f64) -> f64 {
    let d = Normal::new(mean, sd).expect("finite mean, positive sd");
    move |x| d.cdf(x)
}

pub fn beta_cdf(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    let d = Beta::new(a, b).expect("positive shape parameters");
    move |x| d.cdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neumaier_recovers_lost_digits() {
        let mut s = NeumaierSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.sum() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn moments_of_known_sample() {
        let m = Moments::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert!(m.m3.abs() < 1e-12);
        // central fourth sum: 2 * (1.5^4 + 0.5^4) = 10.25
        assert!((m.m4 - 10.25).abs() < 1e-12);
        assert!((m.raw_second() - 7.5).abs() < 1e-14);
    }

    #[test]
    fn ks_exact_small_case() {
        // sample {0.5} against U(0,1): D = 0.5
        let mut v = vec![0.5];
        assert_eq!(ks_statistic(&mut v, |x| x), 0.5);
        let mut grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&mut grid, |x| x) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn ks_critical_known_value() {
        // c(0.01) = 1.6276
        let v = ks_critical(1_000_000, 0.01);
        assert!((v * 1000.0 - 1.6276).abs() < 1e-3);
    }

    #[test]
    fn cdfs() {
        assert!((normal_cdf(0.0, 1.0)(0.0) - 0.5).abs() < 1e-15);
        assert!((beta_cdf(1.0, 1.0)(0.3) - 0.3).abs() < 1e-12);
        assert!((beta_cdf(2.0, 1.0)(0.5) - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(
            values in proptest::collection::vec(-50.0f64..50.0, 2..200),
            cut in 0usize..200,
        ) {
            let cut = cut.min(values.len());
            let whole = Moments::from_slice(&values);
            let merged = Moments::from_slice(&values[..cut]).merge(&Moments::from_slice(&values[cut..]));
            prop_assert_eq!(whole.count, merged.count);
            let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-12 * scale.max(1.0);
            prop_assert!(close(whole.mean, merged.mean, whole.mean.abs()));
            prop_assert!(close(whole.m2, merged.m2, whole.m2));
            prop_assert!(close(whole.m3, merged.m3, whole.m4.sqrt() * whole.m2.sqrt()));
            prop_assert!(close(whole.m4, merged.m4, whole.m4));
        }
    }
}
