//! Moment, tail and trend estimates over logged trajectories.
//!
//! A trajectory set is one `Vec<f64>` of states per trial, all of the same
//! length. Every estimate is a plain empirical mean or frequency over those
//! values, so it can be recomputed from the trajectory CSV.
//!
//! Normal-approximation intervals assume at least 30 trials.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream, Tag};
use crate::stats::{bootstrap_mean_ci, clopper_pearson, mann_kendall, mean_ci, window_means, wls_fit, LinearFit, TrendVerdict};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub conf: f64,
    /// Bootstrap replicates; 0 means a normal interval.
    pub bootstrap: usize,
    pub burn_in: u64,
    /// Block means fed to the trend test; 0 uses the raw series.
    pub windows: usize,
    pub stride: u64,
    /// Seeds the bootstrap resampling.
    pub seed: u64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            conf: 0.95,
            bootstrap: 0,
            burn_in: 0,
            windows: 10,
            stride: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentPoint {
    pub t: u64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trend {
    pub verdict: TrendVerdict,
    pub z: f64,
    pub sen_slope: f64,
    /// Length of the series the test saw.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub eta: f64,
    /// One point every `stride` steps.
    pub points: Vec<MomentPoint>,
    /// Per-step means after the burn-in, before windowing.
    pub means: Vec<f64>,
    pub trend: Option<Trend>,
}

impl MomentEstimate {
    pub fn sup_mean(&self) -> f64 {
        self.means.iter().copied().fold(0.0, f64::max)
    }
}

/// Mann-Kendall upward-trend test on `series`, on `windows` block means
/// when `windows > 0` and the series has room for them.
pub fn trend(series: &[f64], windows: usize) -> Result<Trend> {
    let s = if windows >= 4 && series.len() >= 2 * windows {
        window_means(series, windows)
    } else {
        series.to_vec()
    };
    let mk = mann_kendall(&s)?;
    Ok(Trend {
        verdict: mk.verdict,
        z: mk.z,
        sen_slope: mk.sen_slope,
        points: s.len(),
    })
}

fn check_shape(traj: &[Vec<f64>]) -> Result<usize> {
    let len = traj.first().ok_or(Error::Empty("trajectories"))?.len();
    if len == 0 || traj.iter().any(|r| r.len() != len) {
        return Err(Error::Empty("trajectories must be nonempty and of equal length"));
    }
    Ok(len)
}

/// Per-time `E[|X_t|^η]` with intervals and a trend verdict.
pub fn estimate_moment(traj: &[Vec<f64>], eta: f64, opts: &EstimatorOptions) -> Result<MomentEstimate> {
    let len = check_shape(traj)?;
    let mut col = vec![0.0; traj.len()];
    let mut points = Vec::new();
    let mut all_means = Vec::with_capacity(len);
    for t in 0..len {
        for (c, row) in col.iter_mut().zip(traj) {
            *c = row[t].abs().powf(eta);
        }
        let report = (t as u64).is_multiple_of(opts.stride) || t + 1 == len;
        if report {
            let (mean, lo, hi) = if opts.bootstrap > 0 {
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let mut rng = stream(opts.seed, Tag::Bootstrap, t as u64);
                let (lo, hi) = bootstrap_mean_ci(&col, opts.bootstrap, opts.conf, &mut rng)?;
                (mean, lo, hi)
            } else {
                mean_ci(&col, opts.conf)?
            };
            all_means.push(mean);
            points.push(MomentPoint {
                t: t as u64,
                mean,
                ci_lo: lo,
                ci_hi: hi,
                n: col.len() as u64,
            });
        } else {
            all_means.push(col.iter().sum::<f64>() / col.len() as f64);
        }
    }
    let means = all_means[(opts.burn_in as usize).min(len)..].to_vec();
    let trend = trend(&means, opts.windows).ok();
    Ok(MomentEstimate {
        eta,
        points,
        means,
        trend,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    /// Time, or the first pooled time for late-horizon rows.
    pub t: u64,
    pub m: f64,
    pub exceed: u64,
    pub n: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    /// `P̂(|X_t| > m)` every `stride` steps.
    pub surface: Vec<TailPoint>,
    /// The same frequencies pooled over `t ≥ late_from`.
    pub pooled: Vec<TailPoint>,
    pub late_from: u64,
    /// Fit of `ln P̂(|X| > m)` against `ln m` over pooled rows with
    /// `0 < P̂ < 1`; the slope is the power-law exponent.
    pub slope: Option<LinearFit>,
}

impl TailEstimate {
    /// Largest observed `|X|` bound: no exceedances at or above the returned
    /// grid value.
    pub fn zero_beyond(&self) -> Option<f64> {
        self.surface
            .iter()
            .filter(|p| p.exceed == 0)
            .map(|p| p.m)
            .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))))
    }
}

fn tail_point(t: u64, m: f64, exceed: u64, n: u64, conf: f64) -> TailPoint {
    let (lo, hi) = clopper_pearson(exceed, n, conf);
    TailPoint {
        t,
        m,
        exceed,
        n,
        p_hat: exceed as f64 / n as f64,
        ci_lo: lo,
        ci_hi: hi,
    }
}

/// Tail frequencies `P̂(|X_t| > m)` over the grid, per reported time and
/// pooled over the late horizon `t ≥ late_from`, plus a log-log slope.
pub fn estimate_tail(traj: &[Vec<f64>], grid: &[f64], late_from: u64, opts: &EstimatorOptions) -> Result<TailEstimate> {
    let len = check_shape(traj)?;
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Empty("tail grid must be nonempty and increasing"));
    }
    let n = traj.len() as u64;
    let mut surface = Vec::new();
    let mut pooled = vec![0u64; grid.len()];
    let mut pooled_n = 0u64;
    for t in 0..len {
        let report = (t as u64).is_multiple_of(opts.stride) || t + 1 == len;
        let late = t as u64 >= late_from;
        if !report && !late {
            continue;
        }
        let mut counts = vec![0u64; grid.len()];
        for row in traj {
            let a = row[t].abs();
            // grid is increasing, so exceedances form a prefix
            let k = grid.partition_point(|&m| a > m);
            for c in &mut counts[..k] {
                *c += 1;
            }
        }
        if report {
            for (m, c) in grid.iter().zip(&counts) {
                surface.push(tail_point(t as u64, *m, *c, n, opts.conf));
            }
        }
        if late {
            pooled_n += n;
            for (p, c) in pooled.iter_mut().zip(&counts) {
                *p += c;
            }
        }
    }
    let pooled: Vec<TailPoint> = if pooled_n > 0 {
        grid.iter()
            .zip(&pooled)
            .map(|(m, c)| tail_point(late_from, *m, *c, pooled_n, opts.conf))
            .collect()
    } else {
        Vec::new()
    };
    let slope = power_law_fit(&pooled);
    Ok(TailEstimate {
        surface,
        pooled,
        late_from,
        slope,
    })
}

/// Weighted fit of `ln p` on `ln m`, weights `np/(1−p)` from the delta
/// method.
pub fn power_law_fit(points: &[TailPoint]) -> Option<LinearFit> {
    let use_: Vec<&TailPoint> = points.iter().filter(|p| p.exceed > 0 && p.exceed < p.n).collect();
    if use_.len() < 2 {
        return None;
    }
    let x: Vec<f64> = use_.iter().map(|p| p.m.ln()).collect();
    let y: Vec<f64> = use_.iter().map(|p| p.p_hat.ln()).collect();
    let w: Vec<f64> = use_.iter().map(|p| p.n as f64 * p.p_hat / (1.0 - p.p_hat)).collect();
    wls_fit(&x, &y, &w).ok()
}

/// Means and normal intervals from per-time samples that need not share a
/// count, e.g. likelihood-weighted values.
pub fn column_moments(columns: &[Vec<f64>], conf: f64) -> Result<Vec<MomentPoint>> {
    columns
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_empty())
        .map(|(t, c)| {
            let (mean, lo, hi) = if c.len() > 1 { mean_ci(c, conf)? } else { (c[0], c[0], c[0]) };
            Ok(MomentPoint {
                t: t as u64,
                mean,
                ci_lo: lo,
                ci_hi: hi,
                n: c.len() as u64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(trials: u64, len: usize, gaussian: bool, seed: u64) -> Vec<Vec<f64>> {
        (0..trials)
            .map(|k| {
                let mut r = stream(seed, Tag::Disturbance, k);
                (0..len)
                    .map(|_| {
                        if gaussian {
                            StandardNormal.sample(&mut r)
                        } else {
                            r.random::<f64>() * 2.0 - 1.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn zero_trajectories_give_zero() {
        let z = vec![vec![0.0; 50]; 40];
        let m = estimate_moment(&z, 2.0, &EstimatorOptions::default()).unwrap();
        assert!(m.points.iter().all(|p| p.mean == 0.0 && p.ci_hi == 0.0));
        assert_eq!(m.trend.unwrap().verdict, TrendVerdict::Bounded);
        let t = estimate_tail(&z, &[0.5, 1.0], 10, &EstimatorOptions::default()).unwrap();
        assert!(t.surface.iter().all(|p| p.exceed == 0));
        assert_eq!(t.zero_beyond(), Some(0.5));
    }

    #[test]
    fn closed_form_moments_within_intervals() {
        // E|U|^η = 1/(η+1) for U uniform on [-1, 1]; E X² = 1 and
        // E|X| = sqrt(2/π) for a standard normal.
        let mut covered = 0;
        let mut total = 0;
        for seed in 0..20 {
            let u = iid(400, 20, false, seed);
            let g = iid(400, 20, true, seed + 100);
            for (traj, eta, exact) in [
                (&u, 1.0, 0.5),
                (&u, 2.0, 1.0 / 3.0),
                (&g, 2.0, 1.0),
                (&g, 1.0, (2.0 / std::f64::consts::PI).sqrt()),
            ] {
                let m = estimate_moment(traj, eta, &EstimatorOptions::default()).unwrap();
                for p in &m.points {
                    total += 1;
                    covered += usize::from(p.ci_lo <= exact && exact <= p.ci_hi);
                }
            }
        }
        let rate = covered as f64 / total as f64;
        assert!((0.93..=0.97).contains(&rate), "coverage {rate}");
    }

    #[test]
    fn bootstrap_interval_brackets_the_mean() {
        let u = iid(200, 5, false, 3);
        let opts = EstimatorOptions {
            bootstrap: 300,
            ..Default::default()
        };
        let m = estimate_moment(&u, 2.0, &opts).unwrap();
        for p in &m.points {
            assert!(p.ci_lo < p.mean && p.mean < p.ci_hi);
            assert!((p.ci_lo..=p.ci_hi).contains(&(1.0 / 3.0)) || (p.mean - 1.0 / 3.0).abs() < 0.08);
        }
    }

    #[test]
    fn tail_frequencies_of_uniform() {
        let u = iid(2000, 10, false, 4);
        let t = estimate_tail(&u, &[0.25, 0.5, 0.75], 5, &EstimatorOptions::default()).unwrap();
        for p in &t.pooled {
            let exact = 1.0 - p.m;
            assert!((p.p_hat - exact).abs() < 0.02, "{p:?}");
        }
        assert_eq!(t.pooled[0].n, 2000 * 5);
    }

    #[test]
    fn pareto_slope_is_recovered() {
        // P(|X| > m) = m^{-1.5} for m >= 1
        let traj: Vec<Vec<f64>> = (0..4000u64)
            .map(|k| {
                let mut r = stream(9, Tag::Disturbance, k);
                (0..4).map(|_| (1.0 - r.random::<f64>()).powf(-1.0 / 1.5)).collect()
            })
            .collect();
        let t = estimate_tail(&traj, &[1.5, 2.0, 4.0, 8.0, 16.0], 0, &EstimatorOptions::default()).unwrap();
        let fit = t.slope.unwrap();
        let (lo, hi) = fit.slope_ci(0.99);
        assert!(lo <= -1.5 && -1.5 <= hi, "{fit:?}");
    }

    #[test]
    fn growing_series_is_diverging() {
        let s: Vec<f64> = (0..60).map(|t| 1.1f64.powi(t)).collect();
        assert_eq!(trend(&s, 10).unwrap().verdict, TrendVerdict::Diverging);
        assert_eq!(trend(&s, 0).unwrap().verdict, TrendVerdict::Diverging);
    }

    #[test]
    fn ragged_input_is_rejected() {
        assert!(estimate_moment(&[], 1.0, &EstimatorOptions::default()).is_err());
        assert!(estimate_moment(&[vec![1.0], vec![1.0, 2.0]], 1.0, &EstimatorOptions::default()).is_err());
    }
}
