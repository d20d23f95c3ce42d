//! Linear stabilization over a power-limited Gaussian channel with
//! noiseless feedback.
//!
//! The observer sends `a_t = βX_t` and the controller applies
//! `U_t = −λφB_t`, so the closed loop is
//! `X_{t+1} = λ(1−βφ)X_t + W_t − λφN_t`. With `β = 1` and
//! `φ = P''/(P''+1)`, `P'' = λ² − 1`, the loop gain is `1/λ` and the
//! noise-driven part of the state has stationary variance `P''σ²`. Run
//! through the control-to-code reduction it gives an anytime code whose
//! errors die off doubly exponentially in the delay.

use serde::Serialize;

use crate::channels::{AwgnSpec, ChannelSession, ChannelSpec, FeedbackMode, Input, Output};
use crate::codec::{run_reduction, BitStream, CantorParams, ReductionConfig, ReductionTrace, ReliabilityReport};
use crate::control::{Controller, Observer};
use crate::error::{invalid, Error, Result};
use crate::rate::Rate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AwgnSchemeParams {
    pub rate: Rate,
    pub power: f64,
    pub noise_var: f64,
    pub lambda: f64,
    pub beta: f64,
    pub phi: f64,
    /// Disturbance bound `Ω` in channel units.
    pub omega: f64,
}

impl AwgnSchemeParams {
    /// Uses the given `λ`; `Ω` is the largest the power budget allows,
    /// halved.
    pub fn with_lambda(rate: Rate, power: f64, noise_var: f64, lambda: f64) -> Result<Self> {
        let spec = AwgnSpec::new(power, noise_var)?;
        let r = rate.as_f64();
        let cap = spec.capacity();
        if !(r > 0.0 && r < cap) {
            return Err(invalid("rate", format!("must lie in (0, {cap}), the channel capacity")));
        }
        if !(lambda.log2() > r) {
            return Err(Error::RateTooHigh {
                rate: r,
                log2_lambda: lambda.log2(),
            });
        }
        let p1 = power / noise_var;
        let p2 = lambda * lambda - 1.0;
        if !(p2 < p1) {
            return Err(invalid("lambda", format!("λ² − 1 = {p2} leaves no power for the disturbance (P' = {p1})")));
        }
        let mut p = Self {
            rate,
            power,
            noise_var,
            lambda,
            beta: 1.0,
            phi: p2 / (p2 + 1.0),
            omega: 0.0,
        };
        p.omega = 0.5 * p.max_omega_normalized() * noise_var.sqrt();
        Ok(p)
    }

    /// `P' = P/σ²`.
    pub fn snr(&self) -> f64 {
        self.power / self.noise_var
    }

    /// `P'' = λ² − 1`.
    pub fn p2(&self) -> f64 {
        self.lambda * self.lambda - 1.0
    }

    /// Normalized input power `P'' + Ω²(P''+1)/(4(P''+2(1−√(P''+1))))`
    /// for a normalized disturbance bound `Ω`.
    pub fn power_budget(&self, omega_norm: f64) -> f64 {
        let p2 = self.p2();
        p2 + omega_norm * omega_norm * (p2 + 1.0) / (4.0 * (p2 + 2.0 * (1.0 - (p2 + 1.0).sqrt())))
    }

    /// Largest normalized `Ω` with `power_budget(Ω) ≤ P'`.
    pub fn max_omega_normalized(&self) -> f64 {
        let p2 = self.p2();
        let denom = 4.0 * (p2 + 2.0 * (1.0 - (p2 + 1.0).sqrt()));
        ((self.snr() - p2) * denom / (p2 + 1.0)).sqrt()
    }

    /// Closed-loop gain `λ(1−βφ)`.
    pub fn loop_gain(&self) -> f64 {
        self.lambda * (1.0 - self.beta * self.phi)
    }

    /// Bound `Ω/(2(1 − λ(1−βφ)))` on the disturbance-driven part of the state.
    pub fn disturbance_bound(&self) -> f64 {
        self.omega / (2.0 * (1.0 - self.loop_gain()))
    }

    /// Variance of the noise-driven part after `t` steps from zero.
    pub fn noise_var_at(&self, t: u64) -> f64 {
        let g2 = self.loop_gain().powi(2);
        let k = (self.lambda * self.phi).powi(2) * self.noise_var;
        k * (1.0 - g2.powi(t as i32)) / (1.0 - g2)
    }

    /// Stationary variance `λ²φ²σ²/(1 − λ²(1−βφ)²)`.
    pub fn stationary_var(&self) -> f64 {
        (self.lambda * self.phi).powi(2) * self.noise_var / (1.0 - self.loop_gain().powi(2))
    }

    /// `2 exp(−(m−c)²/(2P''σ²))` for `m > c`, else 1.
    pub fn tail_bound(&self, m: f64) -> f64 {
        let c = self.disturbance_bound();
        if m <= c {
            return 1.0;
        }
        (2.0 * (-(m - c).powi(2) / (2.0 * self.p2() * self.noise_var)).exp()).min(1.0)
    }

    pub fn channel(&self) -> ChannelSpec {
        ChannelSpec::Awgn(AwgnSpec::new(self.power, self.noise_var).expect("validated on construction"))
    }

    pub fn cantor(&self) -> Result<CantorParams> {
        CantorParams::new(self.lambda, self.omega, self.rate)
    }
}

/// `λ` at the geometric midpoint of `(2^R, √(1+P'))`, i.e.
/// `log₂λ = (R + ½log₂(1+P'))/2`, and `Ω` from the power budget, halved.
pub fn choose_params(rate: Rate, power: f64, noise_var: f64) -> Result<AwgnSchemeParams> {
    let cap = AwgnSpec::new(power, noise_var)?.capacity();
    let r = rate.as_f64();
    if !(r < cap) {
        return Err(invalid("rate", format!("{r} is not below the capacity {cap}")));
    }
    AwgnSchemeParams::with_lambda(rate, power, noise_var, ((r + cap) / 2.0).exp2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearObserver {
    pub beta: f64,
}

impl Observer for LinearObserver {
    fn emit(&mut self, _t: u64, x: f64, _feedback: Option<&Output>) -> Result<Input> {
        Ok(Input::Real(self.beta * x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearController {
    /// `λφ`.
    pub gain: f64,
}

impl Controller for LinearController {
    fn act(&mut self, _t: u64, b: &Output) -> Result<f64> {
        match b {
            Output::Real(v) => Ok(-self.gain * v),
            other => Err(Error::Incompatible(format!("the linear controller needs real outputs, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopStep {
    pub a: f64,
    pub u: f64,
    pub next: f64,
}

/// One step of the loop given the bit disturbance `w` and channel noise `n`.
pub fn loop_step(p: &AwgnSchemeParams, x: f64, w: f64, n: f64) -> LoopStep {
    let a = p.beta * x;
    let u = -(p.lambda * p.phi) * (a + n);
    LoopStep {
        a,
        u,
        next: p.lambda * x + u + w,
    }
}

/// One trial of the scheme run as an anytime code.
#[derive(Debug, Clone, PartialEq)]
pub struct AwgnTrial {
    pub trace: ReductionTrace,
    /// State driven by the bit disturbances alone, per time.
    pub disturbance_part: Vec<f64>,
    /// State driven by the channel noise alone, `X_t` minus the above.
    pub noise_part: Vec<f64>,
}

pub fn run_trial(p: &AwgnSchemeParams, horizon: u64, seed: u64, trial: u64, keep_inputs: bool) -> Result<AwgnTrial> {
    let cantor = p.cantor()?;
    let bits = BitStream::random(p.rate, horizon, seed, trial);
    let cfg = ReductionConfig {
        lambda: p.lambda,
        omega: p.omega,
        code_rate: p.rate,
        horizon,
        shared_seed: None,
        keep_table: false,
        keep_inputs,
    };
    let gain = p.lambda * p.phi;
    let factory = move |_: Option<u64>| -> Result<Box<dyn Controller>> { Ok(Box::new(LinearController { gain })) };
    let mut channel = ChannelSession::new(p.channel(), FeedbackMode::UnitDelay, seed, trial)?.with_log_cap(2);
    let mut observer = LinearObserver { beta: p.beta };
    let trace = run_reduction(&cfg, &bits, &mut observer, &factory, &mut channel)?;

    let g = p.loop_gain();
    let mut d = trace.steps[0].x;
    let mut disturbance_part = Vec::with_capacity(trace.steps.len());
    for t in 0..trace.steps.len() as u64 {
        disturbance_part.push(d);
        if t < horizon {
            d = g * d + cantor.disturbance(bits.bits(), t);
        }
    }
    let noise_part = trace.steps.iter().zip(&disturbance_part).map(|(s, d)| s.x - d).collect();
    Ok(AwgnTrial {
        trace,
        disturbance_part,
        noise_part,
    })
}

/// Decomposition of the average input power `E[a²]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PowerLedger {
    pub total: f64,
    pub total_se: f64,
    pub disturbance: f64,
    pub noise: f64,
    pub cross: f64,
    pub samples: u64,
}

/// Averages over all trials and over `t ∈ [from, to)`.
pub fn power_ledger(p: &AwgnSchemeParams, trials: &[AwgnTrial], from: usize, to: usize) -> PowerLedger {
    let mut total = crate::stats::Welford::new();
    let (mut dd, mut nn, mut dn) = (0.0, 0.0, 0.0);
    for tr in trials {
        for t in from..to.min(tr.noise_part.len()) {
            let a = p.beta * tr.trace.steps[t].x;
            total.push(a * a);
            let (d, n) = (p.beta * tr.disturbance_part[t], p.beta * tr.noise_part[t]);
            dd += d * d;
            nn += n * n;
            dn += 2.0 * d * n;
        }
    }
    let k = total.count().max(1) as f64;
    PowerLedger {
        total: total.mean(),
        total_se: total.std_err(),
        disturbance: dd / k,
        noise: nn / k,
        cross: dn / k,
        samples: total.count(),
    }
}

/// Where `ĝ` collapses: the largest delay with `ĝ(d) ≥ level` and the last
/// delay with any error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Collapse {
    pub d_level: u64,
    pub d_last: u64,
}

impl Collapse {
    pub fn width(&self) -> u64 {
        self.d_last.saturating_sub(self.d_level)
    }
}

pub fn collapse(report: &ReliabilityReport, level: f64) -> Option<Collapse> {
    let d_last = report.last_error_delay()?;
    let d_level = report.points.iter().rev().find(|p| p.g_hat >= level)?.d;
    Some(Collapse { d_level, d_last })
}

/// Least-squares slope of `ln(−ln ĝ(d))` against `d` over delays with
/// `0 < ĝ < 1`; doubly exponential decay `exp(−K4^{Rd})` has slope `2R ln 2`.
pub fn double_log_slope(report: &ReliabilityReport) -> Option<f64> {
    let pts: Vec<(f64, f64)> = report
        .points
        .iter()
        .filter(|p| p.g_hat > 0.0 && p.g_hat < 1.0)
        .map(|p| (p.d as f64, (-p.g_hat.ln()).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Tag};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn unit_square_root_two_example() {
        let p = AwgnSchemeParams::with_lambda(Rate::new(1, 4).unwrap(), 3.0, 1.0, 2f64.sqrt()).unwrap();
        assert!((p.p2() - 1.0).abs() < 1e-12);
        assert!((p.loop_gain() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((p.stationary_var() - 1.0).abs() < 1e-12);
        assert!((p.power_budget(p.max_omega_normalized()) - 3.0).abs() < 1e-12);
        assert!(p.power_budget(2.0 * p.omega) <= 3.0 + 1e-12);
    }

    #[test]
    fn boundary_lambda_is_rejected() {
        let lam = 4f64.sqrt();
        assert!(AwgnSchemeParams::with_lambda(Rate::new(1, 2).unwrap(), 3.0, 1.0, lam).is_err());
        assert!(choose_params(Rate::integer(1), 3.0, 1.0).is_err());
    }

    #[test]
    fn stability_identity_holds() {
        for (r, pw, nv) in [((1, 2), 3.0, 1.0), ((3, 2), 15.0, 1.0), ((1, 1), 20.0, 2.0), ((1, 4), 1.0, 0.5)] {
            let p = choose_params(Rate::new(r.0, r.1).unwrap(), pw, nv).unwrap();
            assert!((p.loop_gain() * (p.p2() + 1.0).sqrt() - 1.0).abs() < 1e-12);
            let mid = (r.0 as f64 / r.1 as f64 + 0.5 * (1.0 + pw / nv).log2()) / 2.0;
            assert!((p.lambda.log2() - mid).abs() < 1e-12);
        }
    }

    /// Iterating the variance recursion converges to the closed form.
    #[test]
    fn lyapunov_recursion_matches_stationary_variance() {
        let p = choose_params(Rate::new(3, 2).unwrap(), 15.0, 1.0).unwrap();
        let mut v = 0.0;
        for t in 1..=200 {
            v = p.loop_gain().powi(2) * v + (p.lambda * p.phi).powi(2) * p.noise_var;
            if t == 7 {
                assert!((v - p.noise_var_at(7)).abs() < 1e-9);
            }
        }
        assert!((v - p.stationary_var()).abs() < 1e-9);
        assert!((p.stationary_var() - p.p2() * p.noise_var).abs() < 1e-9);
    }

    #[test]
    fn noiseless_loop_contracts() {
        let p = choose_params(Rate::new(1, 2).unwrap(), 3.0, 1.0).unwrap();
        let mut x = 5.0;
        for _ in 0..20 {
            let s = loop_step(&p, x, 0.0, 0.0);
            assert!((s.next - x * p.loop_gain()).abs() < 1e-12);
            x = s.next;
        }
    }

    #[test]
    fn reduction_matches_direct_loop() {
        let p = choose_params(Rate::new(3, 2).unwrap(), 15.0, 1.0).unwrap();
        let cantor = p.cantor().unwrap();
        let horizon = 20;
        for trial in 0..5 {
            let tr = run_trial(&p, horizon, 2, trial, true).unwrap();
            let bits = BitStream::random(p.rate, horizon, 2, trial);
            // the channel draws its noise from this stream
            let mut rng = stream(2, Tag::Channel, trial);
            let normal = Normal::new(0.0, p.noise_var.sqrt()).unwrap();
            let mut x = tr.trace.steps[0].x;
            for t in 0..horizon {
                let s = loop_step(&p, x, cantor.disturbance(bits.bits(), t), normal.sample(&mut rng));
                assert_eq!(tr.trace.inputs[t as usize], Input::Real(s.a));
                assert_eq!(tr.trace.steps[t as usize + 1].x, s.next);
                x = s.next;
            }
        }
    }

    #[test]
    fn disturbance_part_is_bounded() {
        let p = choose_params(Rate::new(3, 2).unwrap(), 15.0, 1.0).unwrap();
        for trial in 0..50 {
            let tr = run_trial(&p, 20, 4, trial, false).unwrap();
            assert!(tr.disturbance_part.iter().all(|d| d.abs() <= p.disturbance_bound()));
        }
    }

    #[test]
    fn vanishing_noise_leaves_only_short_delay_errors() {
        let mut p = choose_params(Rate::new(3, 2).unwrap(), 15.0, 1.0).unwrap();
        p.noise_var = 1e-24;
        p.power = 15.0 * 1e-24;
        let cantor = p.cantor().unwrap();
        // |X| ≤ c forces correct decoding once λ^{age} γε₁/(1+ε₁) > c
        let safe_age = (p.disturbance_bound() / cantor.half_gap()).ln() / p.lambda.ln();
        for trial in 0..50 {
            let tr = run_trial(&p, 20, 5, trial, false).unwrap();
            assert_eq!(tr.trace.violations(), 0);
            for s in &tr.trace.steps {
                if let Some(j) = s.oldest_wrong {
                    assert!(p.rate.age(s.t, j) < safe_age);
                }
            }
        }
    }
}
