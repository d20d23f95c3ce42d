//! Run results and their CSV artifacts.
//!
//! | file | columns |
//! |---|---|
//! | `summary.csv` | `key,value` |
//! | `checks.csv` | `check,passed,detail` |
//! | `moments.csv` | `quantity,eta,t,mean,ci_lo,ci_hi,n` |
//! | `trends.csv` | `quantity,eta,verdict,z,sen_slope,points` |
//! | `tails.csv` | `scope,t,m,exceed,n,p_hat,ci_lo,ci_hi` (scope `t` or `late`) |
//! | `reliability.csv` | `d,errors,samples,g_hat,g_mono,ci_lo,ci_hi` |
//! | `trajectories.csv` | `trial,t,x` |
//!
//! Scenarios add their own tables (`trellis.csv`, `dance.csv`, ...), whose
//! headers are listed with the scenario.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::config::Scenario;
use super::estimators::{MomentPoint, TailEstimate, Trend};
use crate::codec::ReliabilityReport;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A named per-time series of moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    /// What was averaged, e.g. `abs_x` or `sq_error`.
    pub quantity: String,
    pub eta: f64,
    pub points: Vec<MomentPoint>,
    pub trend: Option<Trend>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: Scenario,
    pub summary: Vec<(String, f64)>,
    pub moments: Vec<MomentSeries>,
    pub tail: Option<TailEstimate>,
    pub reliability: Option<ReliabilityReport>,
    /// `X_t` per trial, kept for `trajectories.csv`.
    pub trajectories: Vec<Vec<f64>>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            summary: Vec::new(),
            moments: Vec::new(),
            tail: None,
            reliability: None,
            trajectories: Vec::new(),
            tables: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn put(&mut self, key: &str, value: f64) {
        self.summary.push((key.to_string(), value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn moment(&self, quantity: &str, eta: f64) -> Option<&MomentSeries> {
        self.moments.iter().find(|m| m.quantity == quantity && m.eta == eta)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes every artifact into `dir` and returns the written paths.
    pub fn write(&self, dir: &Path, trajectories: bool) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut written = Vec::new();
        let mut emit = |name: &str, header: &[String], rows: &mut dyn Iterator<Item = Vec<String>>| -> Result<()> {
            let path = dir.join(name);
            write_csv(&path, header, rows)?;
            written.push(path);
            Ok(())
        };
        let h = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();

        emit(
            "summary.csv",
            &h(&["key", "value"]),
            &mut std::iter::once(vec!["scenario".to_string(), self.scenario.name().to_string()])
                .chain(self.summary.iter().map(|(k, v)| vec![k.clone(), v.to_string()])),
        )?;
        emit(
            "checks.csv",
            &h(&["check", "passed", "detail"]),
            &mut self
                .checks
                .iter()
                .map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()]),
        )?;
        emit(
            "moments.csv",
            &h(&["quantity", "eta", "t", "mean", "ci_lo", "ci_hi", "n"]),
            &mut self.moments.iter().flat_map(|m| {
                m.points.iter().map(move |p| {
                    vec![
                        m.quantity.clone(),
                        m.eta.to_string(),
                        p.t.to_string(),
                        p.mean.to_string(),
                        p.ci_lo.to_string(),
                        p.ci_hi.to_string(),
                        p.n.to_string(),
                    ]
                })
            }),
        )?;
        emit(
            "trends.csv",
            &h(&["quantity", "eta", "verdict", "z", "sen_slope", "points"]),
            &mut self.moments.iter().filter_map(|m| {
                m.trend.map(|t| {
                    vec![
                        m.quantity.clone(),
                        m.eta.to_string(),
                        t.verdict.to_string(),
                        t.z.to_string(),
                        t.sen_slope.to_string(),
                        t.points.to_string(),
                    ]
                })
            }),
        )?;
        if let Some(tail) = &self.tail {
            let row = |scope: &str, p: &super::estimators::TailPoint| {
                vec![
                    scope.to_string(),
                    p.t.to_string(),
                    p.m.to_string(),
                    p.exceed.to_string(),
                    p.n.to_string(),
                    p.p_hat.to_string(),
                    p.ci_lo.to_string(),
                    p.ci_hi.to_string(),
                ]
            };
            emit(
                "tails.csv",
                &h(&["scope", "t", "m", "exceed", "n", "p_hat", "ci_lo", "ci_hi"]),
                &mut tail
                    .surface
                    .iter()
                    .map(|p| row("t", p))
                    .chain(tail.pooled.iter().map(|p| row("late", p))),
            )?;
        }
        if let Some(rel) = &self.reliability {
            emit(
                "reliability.csv",
                &h(&["d", "errors", "samples", "g_hat", "g_mono", "ci_lo", "ci_hi"]),
                &mut rel.points.iter().map(|p| {
                    vec![
                        p.d.to_string(),
                        p.errors.to_string(),
                        p.samples.to_string(),
                        p.g_hat.to_string(),
                        p.g_mono.to_string(),
                        p.ci_lo.to_string(),
                        p.ci_hi.to_string(),
                    ]
                }),
            )?;
        }
        if trajectories {
            emit(
                "trajectories.csv",
                &h(&["trial", "t", "x"]),
                &mut self.trajectories.iter().enumerate().flat_map(|(k, row)| {
                    row.iter()
                        .enumerate()
                        .map(move |(t, x)| vec![k.to_string(), t.to_string(), x.to_string()])
                }),
            )?;
        }
        for t in &self.tables {
            emit(&format!("{}.csv", t.name), &t.header, &mut t.rows.iter().cloned())?;
        }
        Ok(written)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> crate::Error {
    invalid("output", format!("{}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[String], rows: &mut dyn Iterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads `trajectories.csv` back into one row per trial.
pub fn read_trajectories(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let parse = |i: usize| -> Result<&str> { rec.get(i).ok_or_else(|| io_err(path, "short row")) };
        let trial: usize = parse(0)?.parse().map_err(|e| io_err(path, e))?;
        let t: usize = parse(1)?.parse().map_err(|e| io_err(path, e))?;
        let x: f64 = parse(2)?.parse().map_err(|e| io_err(path, e))?;
        if trial == out.len() {
            out.push(Vec::new());
        }
        let row = out.get_mut(trial).ok_or_else(|| io_err(path, "trials out of order"))?;
        if t != row.len() {
            return Err(io_err(path, format!("trial {trial}: time {t} out of order")));
        }
        row.push(x);
    }
    Ok(out)
}

/// Reads `moments.csv` rows as `(quantity, eta, t, mean)`.
pub fn read_moments(path: &Path) -> Result<Vec<(String, f64, u64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        out.push((
            f(0).to_string(),
            f(1).parse().map_err(|e| io_err(path, e))?,
            f(2).parse().map_err(|e| io_err(path, e))?,
            f(3).parse().map_err(|e| io_err(path, e))?,
        ));
    }
    Ok(out)
}
