//! Reset control over a real-valued erasure channel.
//!
//! The observer sends `X_t` itself; the controller applies `U_t = −λB_t`
//! when the value arrives and nothing otherwise. A delivery resets the state
//! to the latest disturbance, so with `X_0 = 0` the state at time `t` is the
//! plant's open-loop response to the disturbances since the last delivery:
//! `X_t = Σ_{j<k} λ^j W_{t−1−j}` where `k` is the run length. With iid
//! disturbances of variance `σ²`, writing `v(k) = σ² Σ_{j<k} λ^{2j}`,
//!
//! `E[X_t²] = Σ_{k<t} (1−δ)δ^{k−1} v(k) + δ^{t−1} v(t)`,
//!
//! which grows without bound once `λ²δ > 1`, while `E|X_t|` stays bounded
//! when `λδ < 1`.
//!
//! Plain Monte Carlo cannot see this growth at moderate `N`: the moment is
//! carried by runs of probability `δ^k` that `N` trials almost never draw.
//! [`importance_trial`] therefore draws the run length from the tilted law
//! `Q(k) ∝ P(k)v(k)` and weights the squared state by `P(k)/Q(k)`, which
//! leaves an unbiased estimate whose only variance comes from the
//! disturbances.

use rand::Rng;

use crate::channels::{ChannelSession, ChannelSpec, ErasureSpec, FeedbackMode, Input, Output};
use crate::control::{simulate, Controller, Observer};
use crate::error::{invalid, Result};
use crate::model::{DisturbanceKind, DisturbanceSource, PlantParams, PlantState};
use crate::rng::{splitmix64, stream, Tag};

#[derive(Debug, Clone, Copy, Default)]
pub struct StateObserver;

impl Observer for StateObserver {
    fn emit(&mut self, _t: u64, x: f64, _fb: Option<&crate::channels::Output>) -> Result<Input> {
        Ok(Input::Real(x))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ResetController {
    pub lambda: f64,
}

impl Controller for ResetController {
    fn act(&mut self, _t: u64, b: &Output) -> Result<f64> {
        Ok(match b {
            Output::Real(v) => -self.lambda * v,
            _ => 0.0,
        })
    }
}

/// Variance of one disturbance sample, when the kind is iid.
pub fn disturbance_variance(kind: DisturbanceKind, omega: f64) -> Option<f64> {
    let h = omega / 2.0;
    match kind {
        DisturbanceKind::Zero => Some(0.0),
        DisturbanceKind::Uniform => Some(h * h / 3.0),
        DisturbanceKind::TwoPoint => Some(h * h),
        DisturbanceKind::AdversarialRandom => None,
    }
}

/// `v(k) = σ² Σ_{j<k} λ^{2j}`.
fn run_variance(lambda: f64, var: f64, k: u64) -> f64 {
    let l2 = lambda * lambda;
    var * (0..k).map(|j| l2.powi(j as i32)).sum::<f64>()
}

/// Run-length law at time `t ≥ 1`, `k = 1..=t`.
fn run_law(delta: f64, t: u64) -> Vec<f64> {
    (1..=t)
        .map(|k| {
            if k < t {
                (1.0 - delta) * delta.powi(k as i32 - 1)
            } else {
                delta.powi(t as i32 - 1)
            }
        })
        .collect()
}

/// Closed-form `E[X_t²]` under iid disturbances of variance `var`.
pub fn exact_second_moment(lambda: f64, delta: f64, var: f64, t: u64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    run_law(delta, t)
        .iter()
        .enumerate()
        .map(|(i, p)| p * run_variance(lambda, var, i as u64 + 1))
        .sum()
}

/// Lower bound `Σ_{k=1}^{t} (1−δ)δ^{k−1} v(k)` on `E[X_t²]`. At `λ = 3/2`
/// and `δ = 1/2` it reads `(4σ²/5) Σ_{k=1}^{t} ((9/8)^k − (1/2)^k)`.
pub fn lower_series(lambda: f64, delta: f64, var: f64, t: u64) -> f64 {
    (1..=t)
        .map(|k| (1.0 - delta) * delta.powi(k as i32 - 1) * run_variance(lambda, var, k))
        .sum()
}

/// One plain closed-loop trial; returns `X_0..=X_T`.
pub fn plain_trial(
    plant: &PlantParams,
    channel: &ErasureSpec,
    kind: DisturbanceKind,
    horizon: u64,
    seed: u64,
    trial: u64,
) -> Result<Vec<f64>> {
    let mut ch = ChannelSession::new(ChannelSpec::Erasure(*channel), FeedbackMode::None, seed, trial)?.with_log_cap(1);
    let mut w = DisturbanceSource::new(kind, plant.omega, seed, trial);
    let mut xs = Vec::with_capacity(horizon as usize + 1);
    let last = simulate(
        plant,
        &mut StateObserver,
        &mut ResetController { lambda: plant.lambda },
        &mut ch,
        &mut w,
        horizon,
        |s| xs.push(s.x),
    )?;
    xs.push(last.x);
    Ok(xs)
}

/// One importance-sampled estimate of `E[X_target²]`: the weighted square
/// of the state at `target`, simulated with the reset law under a channel
/// whose run length at `target` was drawn from the tilted law.
pub fn importance_trial(
    plant: &PlantParams,
    delta: f64,
    kind: DisturbanceKind,
    target: u64,
    seed: u64,
    trial: u64,
) -> Result<f64> {
    let var = disturbance_variance(kind, plant.omega)
        .ok_or_else(|| invalid("plant.disturbance", "importance sampling needs iid disturbances"))?;
    if target == 0 {
        return Ok(0.0);
    }
    if var == 0.0 {
        return Ok(0.0);
    }
    let p = run_law(delta, target);
    let c: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, pk)| pk * run_variance(plant.lambda, var, i as u64 + 1))
        .collect();
    let total: f64 = c.iter().sum();
    let mut rng = stream(seed, Tag::Channel, trial);
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut k = target;
    for (i, ci) in c.iter().enumerate() {
        acc += ci;
        if u < acc && *ci > 0.0 {
            k = i as u64 + 1;
            break;
        }
    }
    let weight = p[k as usize - 1] * total / c[k as usize - 1];

    let mut w = DisturbanceSource::new(kind, plant.omega, seed, trial);
    let mut state = PlantState::new(plant);
    let mut ctrl = ResetController { lambda: plant.lambda };
    let start = target - k;
    for s in 0..target {
        let delivered = if s < start || (s == start && k == target) {
            rng.random::<f64>() >= delta
        } else {
            s == start
        };
        let b = if delivered { Output::Real(state.x) } else { Output::Erased };
        let u = ctrl.act(s, &b)?;
        let ws = w.sample(&state)?;
        state.advance(plant, u, ws)?;
    }
    Ok(weight * state.x * state.x)
}

/// An outside listener that receives `X_t` over an erasure channel and
/// estimates `X̂_t = B_t`, or 0 when erased. Returns `(X_t, X̂_t)` for a
/// loop closed by the sign-bit scheme.
pub fn passive_trial(
    plant: &PlantParams,
    gain: f64,
    listener: &ErasureSpec,
    kind: DisturbanceKind,
    horizon: u64,
    seed: u64,
    trial: u64,
) -> Result<Vec<(f64, f64)>> {
    use crate::channels::DmcSpec;
    use crate::control::{BangController, SignObserver};

    let mut ch = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::identity(2)), FeedbackMode::None, seed, trial)?.with_log_cap(1);
    // the listener's channel is keyed by a derived seed so its draws are
    // independent of the loop's link
    let mut side = ChannelSession::new(ChannelSpec::Erasure(*listener), FeedbackMode::None, splitmix64(seed), trial)?
        .with_log_cap(1);
    let mut w = DisturbanceSource::new(kind, plant.omega, seed, trial);
    let mut out = Vec::with_capacity(horizon as usize);
    let mut err = None;
    simulate(plant, &mut SignObserver, &mut BangController { gain }, &mut ch, &mut w, horizon, |s| {
        if err.is_some() {
            return;
        }
        match side.step(Input::Real(s.x)) {
            Ok(Output::Real(v)) => out.push((s.x, v)),
            Ok(_) => out.push((s.x, 0.0)),
            Err(e) => err = Some(e),
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Welford;

    #[test]
    fn series_matches_the_closed_form_at_three_halves() {
        let var = 1.0 / 12.0;
        for t in 1..40u64 {
            let direct: f64 = (1..=t).map(|k| 1.125f64.powi(k as i32) - 0.5f64.powi(k as i32)).sum::<f64>() * 4.0 * var / 5.0;
            let s = lower_series(1.5, 0.5, var, t);
            assert!((s - direct).abs() <= 1e-12 * direct, "t={t}");
            // the exact moment exceeds the series by (4σ²/5)((9/8)^t − (1/2)^t)
            let gap = exact_second_moment(1.5, 0.5, var, t) - s;
            let want = 0.8 * var * (1.125f64.powi(t as i32) - 0.5f64.powi(t as i32));
            assert!((gap - want).abs() <= 1e-10 * want.max(1.0), "t={t}");
        }
    }

    #[test]
    fn exact_moment_matches_brute_enumeration() {
        // enumerate erasure patterns for small t
        let (lam, delta, var) = (1.3, 0.4, 0.5);
        for t in 1..=8u64 {
            let mut total = 0.0;
            for mask in 0..(1u32 << t) {
                let mut prob = 1.0;
                // variance coefficient of X: sum of λ^{2j} over disturbances since the last delivery
                let mut v = 0.0;
                for s in 0..t {
                    let erased = mask >> s & 1 == 1;
                    prob *= if erased { delta } else { 1.0 - delta };
                    v = if erased { lam * lam * v + var } else { var };
                }
                total += prob * v;
            }
            let e = exact_second_moment(lam, delta, var, t);
            assert!((total - e).abs() < 1e-12 * e, "t={t}: {total} vs {e}");
        }
    }

    #[test]
    fn importance_estimate_is_unbiased() {
        let plant = PlantParams::new(1.5, 1.0).unwrap();
        for target in [1u64, 5, 25] {
            let mut w = Welford::new();
            for trial in 0..4000 {
                w.push(importance_trial(&plant, 0.5, DisturbanceKind::Uniform, target, 3, trial).unwrap());
            }
            let exact = exact_second_moment(1.5, 0.5, 1.0 / 12.0, target);
            assert!((w.mean() - exact).abs() < 4.0 * w.std_err(), "target {target}: {} ± {} vs {exact}", w.mean(), w.std_err());
        }
    }

    #[test]
    fn plain_trial_resets_on_delivery() {
        let plant = PlantParams::new(1.5, 1.0).unwrap();
        let ch = ErasureSpec::real(0.0).unwrap();
        let xs = plain_trial(&plant, &ch, DisturbanceKind::Uniform, 50, 1, 0).unwrap();
        // with no erasures the state is just the last disturbance
        assert!(xs.iter().all(|x| x.abs() <= 0.5));
        assert_eq!(xs.len(), 51);
    }

    #[test]
    fn passive_listener_error_is_half_the_second_moment() {
        let plant = PlantParams::new(1.5, 1.0).unwrap();
        let ch = ErasureSpec::real(0.5).unwrap();
        let (mut mse, mut x2) = (Welford::new(), Welford::new());
        for trial in 0..300 {
            for (x, xh) in passive_trial(&plant, 1.5, &ch, DisturbanceKind::Uniform, 200, 2, trial).unwrap() {
                mse.push((x - xh).powi(2));
                x2.push(x * x);
            }
        }
        assert!((mse.mean() / x2.mean() - 0.5).abs() < 0.02);
    }
}
