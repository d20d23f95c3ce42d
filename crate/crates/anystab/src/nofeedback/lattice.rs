//! Half-overlapping lattice bins and their reachability properties.
//!
//! Bin `j` spans `(Δj/2, Δ(j/2+1)]`; an input is assigned to the bin whose
//! central half `(Δ(j/2+1/4), Δ(j/2+3/4)]` holds it.

use std::ops::RangeInclusive;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeQuantizer {
    delta: f64,
}

impl LatticeQuantizer {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", "must be positive and finite"));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Bin whose central half holds `x`.
    pub fn assign(&self, x: f64) -> i64 {
        (2.0 * x / self.delta - 1.5).ceil() as i64
    }

    /// Like [`LatticeQuantizer::assign`], refusing noise bounds the bins
    /// cannot absorb.
    pub fn assign_noisy(&self, x_noisy: f64, gamma: f64) -> Result<i64> {
        if !(self.delta > 2.0 * gamma) {
            return Err(Error::NoiseTooLarge { delta: self.delta, gamma });
        }
        Ok(self.assign(x_noisy))
    }

    /// `(lo, hi]` of bin `j`.
    pub fn bin(&self, j: i64) -> (f64, f64) {
        let lo = self.delta * j as f64 / 2.0;
        (lo, lo + self.delta)
    }

    pub fn center(&self, j: i64) -> f64 {
        self.delta * (j as f64 / 2.0 + 0.5)
    }

    pub fn contains(&self, j: i64, x: f64) -> bool {
        let (lo, hi) = self.bin(j);
        lo < x && x <= hi
    }

    /// Bins meeting the interval `(a, b]`.
    pub fn bins_meeting(&self, a: f64, b: f64) -> RangeInclusive<i64> {
        let lo = (2.0 * a / self.delta).floor() as i64 - 1;
        let hi = (2.0 * b / self.delta).ceil() as i64 - 1;
        lo..=hi
    }

    /// Bins that can be assigned to some `x + N` with `x ∈ (a, b]` and
    /// `|N| < Γ/2`.
    pub fn assignable(&self, a: f64, b: f64, gamma: f64) -> RangeInclusive<i64> {
        let lo = (2.0 * (a - gamma / 2.0) / self.delta - 1.5).floor() as i64 + 1;
        let hi = if gamma > 0.0 {
            (2.0 * (b + gamma / 2.0) / self.delta - 1.5).ceil() as i64
        } else {
            self.assign(b)
        };
        lo..=hi
    }
}

pub fn regular_label(j: i64, l: u64) -> u64 {
    j.rem_euclid(l as i64) as u64
}

/// `K = 4 + 2Ω/(Δ(λ−1))`.
pub fn lattice_k(lambda: f64, delta: f64, omega: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(invalid("lambda", "the bin-count constant needs λ > 1"));
    }
    Ok(4.0 + 2.0 * omega / (delta * (lambda - 1.0)))
}

/// The intermediate count `2 + λⁿ(2 + 2Ω/(Δ(λ−1)))` from which `K` is read off.
pub fn bin_count_formula(lambda: f64, delta: f64, omega: f64, n: u32) -> f64 {
    2.0 + lambda.powi(n as i32) * (2.0 + 2.0 * omega / (delta * (lambda - 1.0)))
}

/// States reachable after `n` steps from `(lo, hi]` under the given
/// controls and any disturbance in `[−Ω/2, Ω/2]`, found by running the
/// plant from the interval ends with the extreme disturbances.
pub fn reachable_interval(lambda: f64, omega: f64, lo: f64, hi: f64, controls: &[f64]) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    for u in controls {
        a = lambda * a + u - omega / 2.0;
        b = lambda * b + u + omega / 2.0;
    }
    (a, b)
}

/// The unique bin in `candidates` carrying `label` under `L`-regular
/// labeling, if there is exactly one.
pub fn decode_regular(label: u64, l: u64, candidates: RangeInclusive<i64>) -> Option<i64> {
    let mut hits = candidates.filter(|j| regular_label(*j, l) == label);
    let first = hits.next()?;
    hits.next().is_none().then_some(first)
}

/// One point of the property grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeCase {
    pub lambda: f64,
    pub delta: f64,
    pub omega: f64,
    pub gamma: f64,
    pub n: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LatticeReport {
    pub cases: u64,
    pub containment_checks: u64,
    pub containment_violations: u64,
    pub count_checks: u64,
    /// Reachable bins above `Kλⁿ`.
    pub count_violations: u64,
    /// Reachable bins above `2 + λⁿ(2 + 2Ω/(Δ(λ−1)))`.
    pub formula_violations: u64,
    pub decode_checks: u64,
    pub decode_violations: u64,
    /// Smallest `λⁿ` among cases with a count violation.
    pub min_growth_violating: Option<f64>,
}

impl LatticeReport {
    pub fn clean(&self) -> bool {
        self.containment_violations == 0 && self.count_violations == 0 && self.decode_violations == 0
    }
}

/// Exhaustive check of the three bin properties on one parameter point:
/// containment under noise on a grid of states and noise values; the
/// reachable-bin count from every start bin in `-4..=4` under a grid of
/// control translations; and unique decoding of the `L`-regular label with
/// `L = ⌊Kλⁿ⌋ + 1` for grid states in the reachable set.
pub fn check_case(c: &LatticeCase, grid: u32, report: &mut LatticeReport) -> Result<()> {
    let q = LatticeQuantizer::new(c.delta)?;
    if !(c.delta > 2.0 * c.gamma) {
        return Err(Error::NoiseTooLarge {
            delta: c.delta,
            gamma: c.gamma,
        });
    }
    let k = lattice_k(c.lambda, c.delta, c.omega)?;
    let growth = c.lambda.powi(c.n as i32);
    let cap = k * growth;
    let l = cap.floor() as u64 + 1;
    report.cases += 1;

    // containment: states over four bins, noise strictly inside (−Γ/2, Γ/2)
    let g = grid as i64;
    for xi in -2 * g..=2 * g {
        let x = c.delta * xi as f64 / g as f64;
        for ni in -(g - 1)..=(g - 1) {
            let nz = c.gamma / 2.0 * ni as f64 / g as f64;
            let j = q.assign(x + nz);
            report.containment_checks += 1;
            if !q.contains(j, x) {
                report.containment_violations += 1;
            }
        }
    }

    let shifts: Vec<f64> = (0..grid).map(|i| c.delta * i as f64 / (2.0 * grid as f64)).collect();
    for start in -4i64..=4 {
        let (lo, hi) = q.bin(start);
        for s in &shifts {
            // controls only translate the set; the lattice repeats every Δ/2
            let mut controls = vec![0.0; c.n as usize];
            controls[c.n as usize - 1] = *s;
            let (a, b) = reachable_interval(c.lambda, c.omega, lo, hi, &controls);
            let meeting = q.bins_meeting(a, b);
            let count = (meeting.end() - meeting.start() + 1) as f64;
            report.count_checks += 1;
            if count > cap {
                report.count_violations += 1;
                report.min_growth_violating = Some(report.min_growth_violating.map_or(growth, |m: f64| m.min(growth)));
            }
            if count > bin_count_formula(c.lambda, c.delta, c.omega, c.n) {
                report.formula_violations += 1;
            }

            let candidates = q.assignable(a, b, c.gamma);
            for xi in 1..=grid {
                let x = a + (b - a) * xi as f64 / grid as f64;
                for ni in [-(g - 1), 0, g - 1] {
                    let nz = c.gamma / 2.0 * ni as f64 / g as f64;
                    let j = q.assign(x + nz);
                    report.decode_checks += 1;
                    let decoded = decode_regular(regular_label(j, l), l, candidates.clone());
                    if !decoded.is_some_and(|d| q.contains(d, x)) {
                        report.decode_violations += 1;
                    }
                }
            }
        }
    }
    Ok(())
}

/// The default property grid: `λ ∈ {1.05, 1.2, 1.5, 2, 3}`, `n ∈ 1..=4`,
/// `Δ ∈ {1, 4}`, `Ω ∈ {0, 0.25, 1}`, `Γ ∈ {0, 0.2Δ, 0.45Δ}`.
pub fn default_grid() -> Vec<LatticeCase> {
    let mut out = Vec::new();
    for &lambda in &[1.05, 1.2, 1.5, 2.0, 3.0] {
        for n in 1..=4 {
            for &delta in &[1.0, 4.0] {
                for &omega in &[0.0, 0.25, 1.0] {
                    for &gf in &[0.0, 0.2, 0.45] {
                        out.push(LatticeCase {
                            lambda,
                            delta,
                            omega,
                            gamma: gf * delta,
                            n,
                        });
                    }
                }
            }
        }
    }
    out
}

pub fn check_grid(cases: &[LatticeCase], grid: u32) -> Result<LatticeReport> {
    let mut r = LatticeReport::default();
    for c in cases {
        check_case(c, grid, &mut r)?;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_examples() {
        let q = LatticeQuantizer::new(4.0).unwrap();
        for j in -5..5 {
            assert_eq!(q.assign(q.center(j)), j);
            // right end of the central half belongs to j
            assert_eq!(q.assign(4.0 * (j as f64 / 2.0 + 0.75)), j);
            assert_eq!(q.assign(4.0 * (j as f64 / 2.0 + 0.25)), j - 1);
        }
        assert!(q.assign_noisy(0.0, 2.0).is_err());
        assert!((lattice_k(2.0, 4.0, 1.0).unwrap() - 4.5).abs() < 1e-15);
    }

    #[test]
    fn containment_on_spec_grid() {
        // Δ = 4, Γ = 1
        let q = LatticeQuantizer::new(4.0).unwrap();
        for xi in -400..=400 {
            let x = xi as f64 / 32.0;
            for ni in -15..=15 {
                let n = 0.5 * ni as f64 / 16.0;
                let j = q.assign_noisy(x + n, 1.0).unwrap();
                assert!(q.contains(j, x), "{x} {n}");
            }
        }
    }

    #[test]
    fn bins_meeting_matches_brute_force() {
        let q = LatticeQuantizer::new(1.0).unwrap();
        for (a, b) in [(0.0, 1.0), (0.1, 2.35), (-1.3, -0.2), (-0.5, 0.5)] {
            let r = q.bins_meeting(a, b);
            for j in -10..10 {
                let (lo, hi) = q.bin(j);
                let meets = lo < b && hi > a;
                assert_eq!(r.contains(&j), meets, "{a} {b} {j}");
            }
        }
    }

    #[test]
    fn assignable_matches_sampling() {
        let q = LatticeQuantizer::new(1.0).unwrap();
        let (a, b, g) = (0.13, 1.71, 0.3);
        let r = q.assignable(a, b, g);
        let mut seen = std::collections::BTreeSet::new();
        for i in 1..=2000 {
            let x = a + (b - a) * i as f64 / 2000.0;
            for k in -99..=99 {
                seen.insert(q.assign(x + g / 2.0 * k as f64 / 100.0));
            }
        }
        assert_eq!(*seen.first().unwrap(), *r.start());
        assert_eq!(*seen.last().unwrap(), *r.end());
    }

    #[test]
    fn regular_decode_needs_distinct_labels() {
        assert_eq!(decode_regular(2, 5, 0..=4), Some(2));
        assert_eq!(decode_regular(2, 5, 0..=7), None);
        assert_eq!(regular_label(-1, 5), 4);
    }

    #[test]
    fn properties_hold_when_growth_is_large() {
        let cases: Vec<_> = default_grid().into_iter().filter(|c| c.lambda.powi(c.n as i32) >= 1.5).collect();
        let r = check_grid(&cases, 16).unwrap();
        assert!(r.clean(), "{r:?}");
    }

    #[test]
    fn bin_constant_is_short_when_growth_is_small() {
        // a set one bin wide stretched by 1.05 can meet five bins, above K λ = 4.2
        let q = LatticeQuantizer::new(1.0).unwrap();
        let (a, b) = reachable_interval(1.05, 0.0, 0.0, 1.0, &[0.49]);
        let r = q.bins_meeting(a, b);
        assert_eq!(r.end() - r.start() + 1, 5);
        assert!(5.0 > lattice_k(1.05, 1.0, 0.0).unwrap() * 1.05);
    }
}
