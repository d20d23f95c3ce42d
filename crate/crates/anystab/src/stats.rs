//! Estimators shared by the codec, the stabilizers and the harness.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Running mean and variance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 with fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Two-sided standard normal quantile for confidence level `conf`.
pub fn z_value(conf: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + conf / 2.0)
}

/// Exact binomial confidence interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: u64, n: u64, conf: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let a = (1.0 - conf) / 2.0;
    let nf = n as f64;
    let lo = match k {
        0 => 0.0,
        _ if k == n => a.powf(1.0 / nf),
        _ => beta_quantile(k as f64, (n - k + 1) as f64, a),
    };
    let hi = match k {
        _ if k == n => 1.0,
        0 => 1.0 - a.powf(1.0 / nf),
        _ => beta_quantile((k + 1) as f64, (n - k) as f64, 1.0 - a),
    };
    (lo, hi)
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta
/// function. statrs' Newton inverse stalls for parameters near 10⁷.
fn beta_quantile(a: f64, b: f64, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_mean_ci<R: Rng>(values: &[f64], reps: usize, conf: f64, rng: &mut R) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("bootstrap sample"));
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..reps.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let a = (1.0 - conf) / 2.0;
    let at = |q: f64| means[((q * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    Ok((at(a), at(1.0 - a)))
}

/// Mean with a normal-approximation interval, used where a bootstrap over
/// 10^5 samples per time step would be too slow.
pub fn mean_ci(values: &[f64], conf: f64) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("mean sample"));
    }
    let mut w = Welford::new();
    values.iter().for_each(|&v| w.push(v));
    let h = z_value(conf) * w.std_err();
    Ok((w.mean(), w.mean() - h, w.mean() + h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendVerdict {
    Bounded,
    Diverging,
    Inconclusive,
}

impl std::fmt::Display for TrendVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrendVerdict::Bounded => "bounded",
            TrendVerdict::Diverging => "diverging",
            TrendVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MannKendall {
    pub s: f64,
    /// Variance of `S` after the tie and autocorrelation corrections.
    pub var_s: f64,
    pub z: f64,
    /// Theil-Sen slope.
    pub sen_slope: f64,
    pub verdict: TrendVerdict,
}

/// `z` at or above this is an upward trend.
pub const DIVERGING_Z: f64 = 3.0;
/// `z` below this counts as no upward trend.
pub const BOUNDED_Z: f64 = 2.0;

/// Mann-Kendall test for an upward trend.
///
/// The variance of `S` includes the usual tie correction and is inflated by
/// the effective-sample-size factor `1 + 2 Σ (1 − k/n) ρ_k` computed from the
/// significant autocorrelations of the Sen-detrended series, because the
/// per-time estimates we feed in come from the same trajectories.
pub fn mann_kendall(series: &[f64]) -> Result<MannKendall> {
    let n = series.len();
    if n < 4 {
        return Err(Error::Empty("trend series needs at least 4 points"));
    }
    let mut s = 0.0;
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = series[j] - series[i];
            s += d.signum() * (d != 0.0) as u8 as f64;
            slopes.push(d / (j - i) as f64);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let sen = median_sorted(&slopes);

    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    let nf = n as f64;
    let mut var_s = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;

    let detrended: Vec<f64> = series.iter().enumerate().map(|(k, y)| y - sen * k as f64).collect();
    let ranks = ranks(&detrended);
    let rho = autocorrelations(&ranks, n / 4);
    let bound = 1.96 / nf.sqrt();
    let factor: f64 = 1.0
        + 2.0
            * rho
                .iter()
                .enumerate()
                .filter(|(_, r)| r.abs() > bound)
                .map(|(k, r)| (1.0 - (k + 1) as f64 / nf) * r)
                .sum::<f64>();
    var_s *= factor.max(1.0);

    let z = if s > 0.0 {
        (s - 1.0) / var_s.sqrt()
    } else if s < 0.0 {
        (s + 1.0) / var_s.sqrt()
    } else {
        0.0
    };
    let verdict = if z >= DIVERGING_Z {
        TrendVerdict::Diverging
    } else if z < BOUNDED_Z {
        TrendVerdict::Bounded
    } else {
        TrendVerdict::Inconclusive
    };
    Ok(MannKendall {
        s,
        var_s,
        z,
        sen_slope: sen,
        verdict,
    })
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn autocorrelations(v: &[f64], max_lag: usize) -> Vec<f64> {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let c0: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    if c0 == 0.0 {
        return vec![0.0; max_lag];
    }
    (1..=max_lag)
        .map(|k| (0..n - k).map(|i| (v[i] - mean) * (v[i + k] - mean)).sum::<f64>() / c0)
        .collect()
}

/// Averages consecutive blocks of `series` into `windows` means, dropping
/// the remainder at the front.
pub fn window_means(series: &[f64], windows: usize) -> Vec<f64> {
    let w = (series.len() / windows.max(1)).max(1);
    let skip = series.len() - w * (series.len() / w);
    series[skip..].chunks(w).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    pub points: usize,
}

impl LinearFit {
    /// Two-sided normal-approximation interval for the slope.
    pub fn slope_ci(&self, conf: f64) -> (f64, f64) {
        let h = z_value(conf) * self.se_slope;
        (self.slope - h, self.slope + h)
    }
}

/// Weighted least squares line `y = a + b x`. Standard errors use the
/// weights as inverse variances, scaled by the residual variance when more
/// than two points are available and the fit is worse than the weights
/// promise.
pub fn wls_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n {
        return Err(Error::Empty("weighted fit needs two or more points"));
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    if sxx == 0.0 {
        return Err(invalid_fit());
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (c - intercept - slope * a).powi(2))
        .sum();
    let scale = if n > 2 { (chi2 / (n - 2) as f64).max(1.0) } else { 1.0 };
    let se_slope = (scale / sxx).sqrt();
    let se_intercept = (scale * (1.0 / sw + mx * mx / sxx)).sqrt();
    Ok(LinearFit {
        intercept,
        slope,
        se_intercept,
        se_slope,
        points: n,
    })
}

fn invalid_fit() -> Error {
    crate::error::invalid("fit", "all abscissae coincide")
}

/// Kolmogorov distribution survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // small-x series via the theta-function identity
        let s: f64 = (1..=50)
            .map(|k| {
                let k = (2 * k - 1) as f64;
                (-(k * k) * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp()
            })
            .sum();
        return 1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF, with the
/// Stephens finite-sample correction on the statistic.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0f64, f64::max);
    let sn = n.sqrt();
    let p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok(KsResult {
        d,
        p_value: p,
        n: v.len(),
    })
}

/// Upper tail frequency `#{v > m} / n` for each `m`.
pub fn tail_frequencies(values: &[f64], grid: &[f64]) -> Vec<u64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&m| (v.len() - v.partition_point(|&x| x <= m)) as u64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Tag};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 8.5, 3.25];
        let mut w = Welford::new();
        xs.iter().for_each(|&x| w.push(x));
        let m = xs.iter().sum::<f64>() / 5.0;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
        assert!((w.mean() - m).abs() < 1e-14);
        assert!((w.variance() - v).abs() < 1e-12);

        let (mut a, mut b) = (Welford::new(), Welford::new());
        xs[..2].iter().for_each(|&x| a.push(x));
        xs[2..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.variance() - v).abs() < 1e-12);
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // 0 of 10: upper = 1 − 0.025^(1/10)
        let (lo, hi) = clopper_pearson(0, 10, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(5, 10, 0.95);
        assert!((lo - 0.187_086_2).abs() < 1e-6 && (hi - 0.812_913_8).abs() < 1e-6);
    }

    #[test]
    fn ks_accepts_matching_and_rejects_shifted() {
        let mut rng = stream(3, Tag::Bootstrap, 0);
        let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let phi = |x: f64| Normal::standard().cdf(x);
        assert!(ks_test(&xs, phi).unwrap().p_value > 0.01);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.3).collect();
        assert!(ks_test(&shifted, phi).unwrap().p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        for x in [0.25, 0.3, 0.35, 0.5] {
            let alt: f64 = {
                let s: f64 = (1..=50)
                    .map(|k| {
                        let k = (2 * k - 1) as f64;
                        (-(k * k) * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp()
                    })
                    .sum();
                1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
            };
            let mut s = 0.0;
            for k in 1..=100 {
                let t = (-2.0 * (k * k) as f64 * x * x).exp();
                s += if k % 2 == 1 { t } else { -t };
            }
            assert!((alt - 2.0 * s).abs() < 1e-9, "{x}");
        }
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn mann_kendall_verdicts() {
        let up: Vec<f64> = (0..30).map(|t| 1.1f64.powi(t)).collect();
        assert_eq!(mann_kendall(&up).unwrap().verdict, TrendVerdict::Diverging);
        let mut rng = stream(5, Tag::Bootstrap, 1);
        let flat: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        assert_ne!(mann_kendall(&flat).unwrap().verdict, TrendVerdict::Diverging);
        let down: Vec<f64> = (0..30).map(|t| -(t as f64)).collect();
        assert_eq!(mann_kendall(&down).unwrap().verdict, TrendVerdict::Bounded);
        assert!((mann_kendall(&up[..10]).unwrap().s - 45.0).abs() < 1e-12);
    }

    #[test]
    fn wls_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = wls_fit(&x, &y, &[1.0; 10]).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.intercept - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tail_frequencies_count_strict_exceedances() {
        let v = [0.5, 1.0, 1.5, 2.0];
        assert_eq!(tail_frequencies(&v, &[0.0, 1.0, 2.0]), vec![4, 2, 0]);
    }

    #[test]
    fn bootstrap_covers_mean() {
        let mut rng = stream(9, Tag::Bootstrap, 2);
        let v: Vec<f64> = (0..500).map(|i| (i % 7) as f64).collect();
        let m = v.iter().sum::<f64>() / 500.0;
        let (lo, hi) = bootstrap_mean_ci(&v, 400, 0.95, &mut rng).unwrap();
        assert!(lo < m && m < hi);
    }
}
