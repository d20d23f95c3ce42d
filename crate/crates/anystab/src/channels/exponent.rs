//! Gallager's random-coding error exponent, in bits.

use super::DmcSpec;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Exponent {
    /// `E_r(R)` in bits per channel use.
    pub value: f64,
    /// Maximizing `ρ ∈ [0, 1]`.
    pub rho: f64,
    /// Maximizing input distribution.
    pub q: Vec<f64>,
}

/// `E_0(ρ, Q) = −log2 Σ_b (Σ_a Q(a) p(b|a)^{1/(1+ρ)})^{1+ρ}`.
pub fn gallager_e0(dmc: &DmcSpec, rho: f64, q: &[f64]) -> f64 {
    -objective(dmc, rho, q).log2()
}

/// Closed form of `E_0` for a binary symmetric channel with uniform input.
pub fn bsc_e0(p: f64, rho: f64) -> f64 {
    let s = 1.0 / (1.0 + rho);
    rho - (1.0 + rho) * (p.powf(s) + (1.0 - p).powf(s)).log2()
}

fn objective(dmc: &DmcSpec, rho: f64, q: &[f64]) -> f64 {
    let s = 1.0 / (1.0 + rho);
    (0..dmc.outputs())
        .map(|b| {
            let inner: f64 = (0..dmc.inputs()).map(|a| q[a] * dmc.prob(a, b).powf(s)).sum();
            inner.powf(1.0 + rho)
        })
        .sum()
}

fn gradient(dmc: &DmcSpec, rho: f64, q: &[f64], g: &mut [f64]) {
    let s = 1.0 / (1.0 + rho);
    g.iter_mut().for_each(|v| *v = 0.0);
    for b in 0..dmc.outputs() {
        let inner: f64 = (0..dmc.inputs()).map(|a| q[a] * dmc.prob(a, b).powf(s)).sum();
        if inner <= 0.0 {
            continue;
        }
        let w = (1.0 + rho) * inner.powf(rho);
        for (a, ga) in g.iter_mut().enumerate() {
            *ga += w * dmc.prob(a, b).powf(s);
        }
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimizes the convex objective over the simplex by projected gradient
/// descent with backtracking. Returns the minimizer and the objective.
fn minimize_over_q(dmc: &DmcSpec, rho: f64, start: &[f64]) -> (Vec<f64>, f64) {
    let n = dmc.inputs();
    let mut q = start.to_vec();
    let mut f = objective(dmc, rho, &q);
    let mut g = vec![0.0; n];
    let mut step = 1.0;
    for _ in 0..20_000 {
        gradient(dmc, rho, &q, &mut g);
        let mut moved = false;
        loop {
            let trial: Vec<f64> = q.iter().zip(&g).map(|(qa, ga)| qa - step * ga).collect();
            let cand = project_simplex(&trial);
            let diff: Vec<f64> = cand.iter().zip(&q).map(|(c, a)| c - a).collect();
            let lin: f64 = diff.iter().zip(&g).map(|(d, ga)| d * ga).sum();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            let fc = objective(dmc, rho, &cand);
            if sq == 0.0 {
                break;
            }
            if fc <= f + lin + sq / (2.0 * step) {
                let change = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                q = cand;
                f = fc;
                moved = change > 1e-13;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    (q, f)
}

/// `E_r(R) = max_{ρ∈[0,1]} max_Q E_0(ρ, Q) − ρR`.
///
/// The outer maximization is a ternary search over `ρ` and the inner one a
/// projected-gradient descent over the simplex, both run to about 1e-9.
/// Channels that are symmetric in Gallager's sense use the uniform input.
pub fn random_coding_exponent(dmc: &DmcSpec, rate: f64) -> Result<Exponent> {
    let max_rate = (dmc.inputs() as f64).log2();
    if !(rate >= 0.0 && rate < max_rate) {
        return Err(invalid("rate", format!("must lie in [0, {max_rate}), got {rate}")));
    }
    let n = dmc.inputs();
    let uniform = vec![1.0 / n as f64; n];
    let symmetric = dmc.is_symmetric();
    let mut warm = uniform.clone();
    let mut eval = |rho: f64| -> (f64, Vec<f64>) {
        let q = if symmetric {
            uniform.clone()
        } else {
            let (q, _) = minimize_over_q(dmc, rho, &warm);
            warm = q.clone();
            q
        };
        (gallager_e0(dmc, rho, &q) - rho * rate, q)
    };

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-9 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eval(m1).0 < eval(m2).0 {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let rho = 0.5 * (lo + hi);
    let mut best = eval(rho);
    let mut best_rho = rho;
    let at_one = eval(1.0);
    if at_one.0 > best.0 {
        best = at_one;
        best_rho = 1.0;
    }
    if best.0 <= 0.0 {
        return Ok(Exponent {
            value: 0.0,
            rho: 0.0,
            q: best.1,
        });
    }
    Ok(Exponent {
        value: best.0,
        rho: best_rho,
        q: best.1,
    })
}
