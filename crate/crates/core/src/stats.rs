//! Moments, Kolmogorov–Smirnov distances, correlation and log-log rate fits.
//!
//! Everything here is a raw statistic; thresholds live with the callers.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rng::normal_cdf;

/// Running central moments, mergeable in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleSummary {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl SampleSummary {
    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = Self::default();
        for &x in xs {
            s.push(x);
        }
        s
    }

    pub fn push(&mut self, x: f64) {
        self.merge(&Self { count: 1, mean: x, ..Self::default() });
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        *self = Self { count: self.count + other.count, mean, m2, m3, m4 };
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased variance; zero for fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count as f64 - 1.0)).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn skewness(&self) -> f64 {
        if self.m2 == 0.0 {
            return 0.0;
        }
        let n = self.count as f64;
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// Excess kurtosis (0 for a normal law).
    pub fn kurtosis(&self) -> f64 {
        if self.m2 == 0.0 {
            return 0.0;
        }
        let n = self.count as f64;
        n * self.m4 / (self.m2 * self.m2) - 3.0
    }

    pub fn se_mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// Standard error of the sample variance from the fourth central moment.
    pub fn se_variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let mu4 = self.m4 / n;
        let s2 = self.variance();
        ((mu4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n).max(0.0).sqrt()
    }

    pub fn report(&self) -> MomentReport {
        MomentReport {
            count: self.count,
            mean: self.mean,
            variance: self.variance(),
            skewness: self.skewness(),
            kurtosis: self.kurtosis(),
            se_mean: self.se_mean(),
            se_variance: self.se_variance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentReport {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup_x |F_a(x) − F_b(x)|` by a merge scan over the pooled order statistics.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        // Advance past every copy of the smaller value so ties are handled at once.
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `sup_x |F_a(x) − Φ((x − mean)/sd)|`, both one-sided gaps at every sample point.
pub fn ks_one_sample_normal(a: &[f64], mean: f64, sd: f64) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(sd > 0.0) {
        return Err(Error::Domain(format!("sd must be positive, got {sd}")));
    }
    let a = sorted(a);
    let n = a.len() as f64;
    Ok(a.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = normal_cdf((x - mean) / sd);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    /// 95% Fisher-z interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: usize,
}

/// Pearson correlation with a Fisher-z 95% interval.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("sample lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 4 {
        return Err(Error::Domain("correlation needs at least 4 pairs".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Domain("correlation of a constant sample".into()));
    }
    let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let z = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh();
    let half = 1.959_963_984_540_054 / (n - 3.0).sqrt();
    Ok(Correlation { r, ci_low: (z - half).tanh(), ci_high: (z + half).tanh(), count: a.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% Student-t interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RateFit {
    pub fn contains(&self, slope: f64) -> bool {
        self.ci_low <= slope && slope <= self.ci_high
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::Domain("xs and ys differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(Error::Domain("rate fit needs at least 3 points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("rate fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("rate fit needs distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0).expect("positive dof").inverse_cdf(0.975);
    Ok(RateFit { slope, intercept, ci_low: slope - t * se, ci_high: slope + t * se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{NormalStream, StreamRole};
    use proptest::prelude::*;

    fn normals(seed: u64, m: usize) -> Vec<f64> {
        let mut s = NormalStream::new(seed, 0, StreamRole::Auxiliary);
        (0..m).map(|_| s.next_normal()).collect()
    }

    #[test]
    fn two_sample_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!((ks_two_sample(&a, &[1.5, 2.5]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(ks_two_sample(&[], &a), Err(Error::EmptySample)));
    }

    #[test]
    fn ties_across_samples() {
        // Equal values must be stepped over together.
        assert_eq!(ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn one_sample_examples() {
        assert_eq!(ks_one_sample_normal(&[0.0], 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(ks_one_sample_normal(&[3.0; 17], 3.0, 2.0).unwrap(), 0.5);
        assert!(ks_one_sample_normal(&normals(5, 10_000), 0.0, 1.0).unwrap() <= 0.02);
        assert!(ks_one_sample_normal(&[1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn shifted_sample_is_detected() {
        let xs: Vec<f64> = normals(6, 2000).iter().map(|x| x + 0.3).collect();
        assert!(ks_one_sample_normal(&xs, 0.0, 1.0).unwrap() > 0.08);
    }

    #[test]
    fn moments_of_known_sample() {
        let s = SampleSummary::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean(), 2.5);
        assert!((s.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert!(s.skewness().abs() < 1e-15);
        assert!((s.kurtosis() - (-1.36)).abs() < 1e-12);
    }

    #[test]
    fn normal_sample_moments() {
        let s = SampleSummary::from_slice(&normals(9, 20_000));
        let r = s.report();
        assert!(r.mean.abs() < 3.0 * r.se_mean);
        assert!((r.variance - 1.0).abs() < 3.0 * r.se_variance);
        // For a normal sample Var(s²) ≈ 2/n.
        assert!((r.se_variance - (2.0 / 20_000f64).sqrt()).abs() < 1e-3);
        assert!(r.skewness.abs() < 0.1 && r.kurtosis.abs() < 0.2);
    }

    #[test]
    fn correlation_examples() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|x| 3.0 - 2.0 * x).collect();
        assert!((correlation(&a, &b).unwrap().r + 1.0).abs() < 1e-15);
        let x = normals(1, 5000);
        let y = normals(2, 5000);
        let c = correlation(&x, &y).unwrap();
        assert!(c.ci_low < 0.0 && 0.0 < c.ci_high);
        assert!(correlation(&a, &[1.0; 10]).is_err());
    }

    #[test]
    fn rate_examples() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.powi(-2)).collect();
        let fit = loglog_rate(&xs, &ys).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12 && fit.ci_high - fit.ci_low < 1e-10);

        let ys: Vec<f64> = xs.iter().map(|x| 7.0 * x.powf(-0.5)).collect();
        assert!((loglog_rate(&xs, &ys).unwrap().slope + 0.5).abs() < 1e-12);

        let xs: Vec<f64> = (1..=12).map(|k| f64::from(k) * 10.0).collect();
        let mut noise = NormalStream::new(11, 0, StreamRole::Auxiliary);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x * (1.0 + 0.1 * noise.next_normal())).collect();
        assert!(loglog_rate(&xs, &ys).unwrap().contains(-1.0));

        assert!(loglog_rate(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(loglog_rate(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).is_err());
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 1..60)
    }

    proptest! {
        #[test]
        fn ks_two_sample_is_symmetric(a in sample(), b in sample()) {
            prop_assert_eq!(ks_two_sample(&a, &b).unwrap(), ks_two_sample(&b, &a).unwrap());
        }

        #[test]
        fn ks_two_sample_ignores_monotone_transforms(a in sample(), b in sample()) {
            let f = |x: &f64| (x / 100.0).exp() * 5.0 - 2.0;
            let ta: Vec<f64> = a.iter().map(f).collect();
            let tb: Vec<f64> = b.iter().map(f).collect();
            prop_assert_eq!(ks_two_sample(&a, &b).unwrap(), ks_two_sample(&ta, &tb).unwrap());
        }

        #[test]
        fn merge_matches_concatenation(a in sample(), b in sample(), c in sample()) {
            let mut left = SampleSummary::from_slice(&a);
            left.merge(&SampleSummary::from_slice(&b));
            left.merge(&SampleSummary::from_slice(&c));
            let mut bc = SampleSummary::from_slice(&b);
            bc.merge(&SampleSummary::from_slice(&c));
            let mut right = SampleSummary::from_slice(&a);
            right.merge(&bc);
            let all: Vec<f64> = a.iter().chain(&b).chain(&c).copied().collect();
            let whole = SampleSummary::from_slice(&all);
            for s in [left, right] {
                prop_assert_eq!(s.count(), whole.count());
                prop_assert!((s.mean() - whole.mean()).abs() <= 1e-9 * (1.0 + whole.mean().abs()));
                prop_assert!((s.variance() - whole.variance()).abs() <= 1e-9 * (1.0 + whole.variance()));
                prop_assert!(s.variance() >= 0.0);
            }
        }
    }
}
