//! Decoder estimate tables and error-versus-delay reports.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rate::Rate;
use crate::stats::{clopper_pearson, wls_fit};

/// Estimates `Ŝ_0..Ŝ_{⌊Rt⌋}(t)` produced at every decode time of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    rate: Rate,
    rows: Vec<Vec<i8>>,
}

impl EstimateTable {
    pub fn new(rate: Rate) -> Self {
        Self { rate, rows: Vec::new() }
    }

    /// Appends the estimates for the next decode time.
    pub fn push(&mut self, estimates: Vec<i8>) -> Result<()> {
        let t = self.rows.len() as u64;
        let want = self.rate.floor_mul(t) as usize + 1;
        if estimates.len() != want {
            return Err(crate::error::invalid(
                "estimates",
                format!("time {t} needs {want} estimates, got {}", estimates.len()),
            ));
        }
        self.rows.push(estimates);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn estimates(&self, t: u64) -> Option<&[i8]> {
        self.rows.get(t as usize).map(Vec::as_slice)
    }

    /// Oldest wrong bit at decode time `t`.
    pub fn oldest_wrong(&self, t: u64, truth: &[i8]) -> Option<u64> {
        oldest_wrong(self.estimates(t)?, truth)
    }

    /// Error depth at decode time `t`, see [`error_depth`].
    pub fn error_depth(&self, t: u64, truth: &[i8]) -> Option<u64> {
        self.oldest_wrong(t, truth).map(|j| error_depth(self.rate, t, j))
    }
}

pub fn oldest_wrong(estimates: &[i8], truth: &[i8]) -> Option<u64> {
    estimates.iter().zip(truth).position(|(a, b)| a != b).map(|j| j as u64)
}

/// Delay, in channel uses, of bit `j` at time `t`: `t − ⌈j/R⌉`. A prefix
/// error at delay `d` means some bit that arrived at least `d` uses ago is
/// still wrong.
pub fn error_depth(rate: Rate, t: u64, j: u64) -> u64 {
    t - rate.arrival(j)
}

/// One decode time of one trial: the time and the deepest error, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ErrorSample {
    pub trial: u64,
    pub t: u64,
    pub depth: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayPoint {
    pub d: u64,
    pub errors: u64,
    pub samples: u64,
    /// Raw frequency of a prefix error at delay `≥ d`.
    pub g_hat: f64,
    /// Running minimum of `g_hat`, i.e. the nonincreasing regularization.
    pub g_mono: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// `ĝ(d) ≈ K 2^{−αd}` fitted over a delay window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpFit {
    pub k: f64,
    pub alpha: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub d_lo: u64,
    pub d_hi: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub points: Vec<DelayPoint>,
    pub fit: Option<ExpFit>,
    pub samples: u64,
    /// Why no fit was produced, when none was.
    pub note: Option<String>,
}

impl ReliabilityReport {
    pub fn point(&self, d: u64) -> Option<&DelayPoint> {
        self.points.iter().find(|p| p.d == d)
    }

    /// Largest delay with at least one observed error.
    pub fn last_error_delay(&self) -> Option<u64> {
        self.points.iter().rev().find(|p| p.errors > 0).map(|p| p.d)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| crate::error::invalid("csv", e.to_string());
        w.write_record(["d", "g_hat", "ci_lo", "ci_hi"]).map_err(io)?;
        for p in &self.points {
            w.write_record([
                p.d.to_string(),
                p.g_hat.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| crate::error::invalid("csv", e.to_string()))?;
        Ok(())
    }
}

/// Writes one row per decode time: `(trial, t, d, prefix_error)`, where `d`
/// is the deepest error delay (0 when there is none).
pub fn write_samples_csv<W: Write>(samples: &[ErrorSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| crate::error::invalid("csv", e.to_string());
    w.write_record(["trial", "t", "d", "prefix_error"]).map_err(io)?;
    for s in samples {
        w.write_record([
            s.trial.to_string(),
            s.t.to_string(),
            s.depth.unwrap_or(0).to_string(),
            u8::from(s.depth.is_some()).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| crate::error::invalid("csv", e.to_string()))?;
    Ok(())
}

/// Error-versus-delay curve over all logged decode times.
///
/// `ĝ(d)` is the fraction of decode times `t ≥ d` whose deepest error has
/// delay at least `d`. Intervals are 95% Clopper-Pearson. The exponential
/// fit regresses `log2 ĝ(d)` on `d` over `fit_window`, using only delays
/// with errors, weighted by the inverse delta-method variance.
pub fn estimate_reliability(samples: &[ErrorSample], max_delay: u64, fit_window: (u64, u64)) -> Result<ReliabilityReport> {
    if samples.is_empty() {
        return Err(Error::Empty("decoder trace"));
    }
    let horizon = samples.iter().map(|s| s.t).max().unwrap_or(0);
    let max_d = max_delay.min(horizon) as usize;
    // counts by time and by depth, then suffix sums
    let mut at_time = vec![0u64; horizon as usize + 1];
    let mut at_depth = vec![0u64; horizon as usize + 1];
    for s in samples {
        at_time[s.t as usize] += 1;
        if let Some(d) = s.depth {
            at_depth[d as usize] += 1;
        }
    }
    let mut points = Vec::with_capacity(max_d + 1);
    let mut n_ge: u64 = at_time.iter().sum();
    let mut e_ge: u64 = at_depth.iter().sum();
    let mut running = f64::INFINITY;
    for d in 0..=max_d {
        if d > 0 {
            n_ge -= at_time[d - 1];
            e_ge -= at_depth[d - 1];
        }
        let g = e_ge as f64 / n_ge as f64;
        running = running.min(g);
        let (lo, hi) = clopper_pearson(e_ge, n_ge, 0.95);
        points.push(DelayPoint {
            d: d as u64,
            errors: e_ge,
            samples: n_ge,
            g_hat: g,
            g_mono: running,
            ci_lo: lo,
            ci_hi: hi,
        });
    }

    let usable: Vec<&DelayPoint> = points
        .iter()
        .filter(|p| p.d >= fit_window.0 && p.d <= fit_window.1 && p.errors > 0 && p.g_hat < 1.0)
        .collect();
    let (fit, note) = if points.iter().all(|p| p.errors == 0) {
        (None, Some(format!("no errors: α unbounded at {} samples", samples.len())))
    } else if usable.len() < 2 {
        (None, Some("fewer than two delays with errors in the fit window".to_string()))
    } else {
        let x: Vec<f64> = usable.iter().map(|p| p.d as f64).collect();
        let y: Vec<f64> = usable.iter().map(|p| p.g_hat.log2()).collect();
        let ln2sq = std::f64::consts::LN_2.powi(2);
        let w: Vec<f64> = usable
            .iter()
            .map(|p| p.errors as f64 * ln2sq / (1.0 - p.g_hat))
            .collect();
        let f = wls_fit(&x, &y, &w)?;
        let (lo, hi) = f.slope_ci(0.95);
        (
            Some(ExpFit {
                k: 2f64.powf(f.intercept),
                alpha: -f.slope,
                alpha_lo: -hi,
                alpha_hi: -lo,
                d_lo: usable[0].d,
                d_hi: usable[usable.len() - 1].d,
            }),
            None,
        )
    };
    Ok(ReliabilityReport {
        points,
        fit,
        samples: samples.len() as u64,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_uses_arrival_time() {
        let r = Rate::new(1, 3).unwrap();
        // bit 2 arrives at t = 6
        assert_eq!(error_depth(r, 10, 2), 4);
        let mut tab = EstimateTable::new(r);
        for t in 0..8u64 {
            let n = r.floor_mul(t) as usize + 1;
            let mut e = vec![1i8; n];
            if t == 7 {
                e[1] = -1;
            }
            tab.push(e).unwrap();
        }
        assert_eq!(tab.error_depth(7, &[1, 1, 1]), Some(4));
        assert_eq!(tab.error_depth(6, &[1, 1, 1]), None);
        assert!(tab.push(vec![1]).is_err());
    }

    #[test]
    fn zero_errors_reports_unbounded_exponent() {
        let s: Vec<ErrorSample> = (0..50).map(|t| ErrorSample { trial: 0, t, depth: None }).collect();
        let r = estimate_reliability(&s, 10, (0, 10)).unwrap();
        assert!(r.points.iter().all(|p| p.g_hat == 0.0));
        assert!(r.fit.is_none());
        assert!(r.note.unwrap().contains("unbounded"));
        assert!(estimate_reliability(&[], 5, (0, 5)).is_err());
    }

    #[test]
    fn recovers_geometric_depths() {
        // depth distribution with P(depth ≥ d) = 2^{-d}
        let mut s = Vec::new();
        let n = 1u64 << 16;
        for i in 0..n {
            let d = (i + 1).trailing_zeros() as u64; // P(d ≥ k) = 2^-k
            s.push(ErrorSample {
                trial: i,
                t: 40,
                depth: Some(d),
            });
        }
        let r = estimate_reliability(&s, 12, (1, 10)).unwrap();
        let f = r.fit.unwrap();
        assert!((f.alpha - 1.0).abs() < 0.02, "{}", f.alpha);
        assert!(r.points.windows(2).all(|w| w[1].g_mono <= w[0].g_mono));
    }
}
