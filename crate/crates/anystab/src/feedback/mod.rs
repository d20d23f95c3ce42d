//! Stabilization when the observer sees the channel outputs.
//!
//! The observer runs a virtual closed loop `X̄_{t+1} = λX̄_t + Ū_t + W_t`
//! whose state is kept inside a known window by choosing `Ū_t` among
//! uniformly spaced values, and ships the index of `Ū_t` over the channel.
//! The controller applies each virtual control as soon as its decoder
//! learns it, compounded by the plant gain over the time it was missing, so
//! that the plant tracks the virtual loop up to the still-unknown controls.

mod controller;
mod link;
mod observer;
mod sim;

pub use controller::FbController;
pub use link::Link;
pub use observer::FbObserver;
pub use sim::{run_feedback_loop, FbStep, FbSummary};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rate::Rate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbParams {
    pub lambda: f64,
    pub omega: f64,
    /// Virtual-control bits per step.
    pub rate: Rate,
    /// Initial window width `Δ`.
    pub delta: f64,
    /// Observation noise bound: `|N_t| < Γ/2`.
    #[serde(default)]
    pub gamma_obs: f64,
    /// Control noise bound: `|applied − intended| ≤ Γ_c/2`.
    #[serde(default)]
    pub gamma_ctrl: f64,
    /// Extra decoding delay `v` before a learned control is applied.
    #[serde(default)]
    pub delay: u64,
}

impl FbParams {
    /// Parameters with the smallest admissible window.
    pub fn new(lambda: f64, omega: f64, rate: Rate) -> Result<Self> {
        let mut p = Self {
            lambda,
            omega,
            rate,
            delta: 0.0,
            gamma_obs: 0.0,
            gamma_ctrl: 0.0,
            delay: 0,
        };
        p.delta = p.delta_min()?;
        p.validate()?;
        Ok(p)
    }

    pub fn with_delay(mut self, v: u64) -> Self {
        self.delay = v;
        self
    }

    /// Sets the noise bounds and widens the window to the new minimum when
    /// needed.
    pub fn with_noise(mut self, gamma_obs: f64, gamma_ctrl: f64) -> Result<Self> {
        self.gamma_obs = gamma_obs;
        self.gamma_ctrl = gamma_ctrl;
        self.delta = self.delta.max(self.delta_min()?);
        self.validate()?;
        Ok(self)
    }

    /// Disturbance bound seen by the virtual loop, `Ω + Γ_c`.
    pub fn omega_eff(&self) -> f64 {
        self.omega + self.gamma_ctrl
    }

    pub fn noisy(&self) -> bool {
        self.gamma_obs > 0.0
    }

    /// `Ω_eff / (1 − λ2^{−R})`.
    pub fn delta_min(&self) -> Result<f64> {
        let c = 1.0 - self.lambda * (-self.rate.as_f64()).exp2();
        if !(c > 0.0) {
            return Err(Error::RateTooLow {
                rate: self.rate.as_f64(),
                log2_lambda: self.lambda.log2(),
            });
        }
        Ok(self.omega_eff() / c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 1.0) {
            return Err(invalid("lambda", "the construction needs λ > 1"));
        }
        if !(self.omega >= 0.0) || !(self.gamma_obs >= 0.0) || !(self.gamma_ctrl >= 0.0) {
            return Err(invalid("omega", "bounds must be nonnegative"));
        }
        let min = self.delta_min()?;
        // accepted exactly at the minimum
        if self.delta < min * (1.0 - 1e-12) {
            return Err(Error::DeltaTooSmall { delta: self.delta, min });
        }
        if self.noisy() {
            let (_, narrowest) = self.window_extremes();
            if !(narrowest > 2.0 * self.gamma_obs) {
                return Err(Error::NoiseTooLarge {
                    delta: narrowest,
                    gamma: self.gamma_obs,
                });
            }
        }
        Ok(())
    }

    pub fn window(&self) -> Window {
        Window {
            lambda: self.lambda,
            omega_eff: self.omega_eff(),
            rate: self.rate,
            noisy: self.noisy(),
            t: 0,
            w: self.delta,
        }
    }

    /// Largest window width `W_max` over time and smallest per-bin width
    /// `w_t / 2^{b_t}` over steps that send bits.
    ///
    /// The width sequence is periodic in its bit pattern and contracts to a
    /// periodic orbit, so a few thousand steps cover its supremum; the
    /// observer still checks every width it uses against `W_max`.
    pub fn window_extremes(&self) -> (f64, f64) {
        let mut win = self.window();
        let steps = 4096u64.max(64 * self.rate.den());
        let mut max_w = win.width();
        let mut min_bin = f64::INFINITY;
        for _ in 0..steps {
            max_w = max_w.max(win.width());
            if win.bits() > 0 {
                min_bin = min_bin.min(win.width() / (win.bits() as f64).exp2());
            }
            win.advance();
        }
        (max_w, min_bin)
    }

    pub fn window_max(&self) -> f64 {
        self.window_extremes().0
    }

    /// `λ^{d+v} · 2W_max / (1 − λ^{−1})`.
    pub fn state_bound(&self, depth: u64, w_max: f64) -> f64 {
        self.lambda.powf((depth + self.delay) as f64) * 2.0 * w_max / (1.0 - 1.0 / self.lambda)
    }
}

/// Rate needed with observation noise when the extra bit per emission is
/// spread over blocks of `n` steps: `1/n + log2 λ`.
pub fn rate_with_blocking(lambda: f64, n: u32) -> f64 {
    1.0 / n as f64 + lambda.log2()
}

/// The deterministic width schedule `w_{t+1} = λw_t/2^{b_t} + Ω_eff`,
/// shared by observer and controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    lambda: f64,
    omega_eff: f64,
    rate: Rate,
    noisy: bool,
    t: u64,
    w: f64,
}

impl Window {
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    /// Virtual-control bits for this step, `⌊R(t+1)⌋ − ⌊Rt⌋`.
    pub fn bits(&self) -> u32 {
        self.rate.bits_in_step(self.t) as u32
    }

    /// Bits actually sent: one more than [`Window::bits`] with overlapping
    /// bins, unless no bits are due.
    pub fn code_bits(&self) -> u32 {
        let b = self.bits();
        if self.noisy && b > 0 {
            b + 1
        } else {
            b
        }
    }

    pub fn quantizer(&self) -> Quantizer {
        Quantizer {
            half: self.lambda * self.w / 2.0,
            bits: self.bits(),
            noisy: self.noisy,
        }
    }

    pub fn advance(&mut self) {
        self.w = self.lambda * self.w / (self.bits() as f64).exp2() + self.omega_eff;
        self.t += 1;
    }
}

/// Uniformly spaced control values for an interval `[−half, half]`.
///
/// Plain mode splits it into `2^b` bins. With observation noise it uses
/// `2^{b+1} − 1` bins of the same width overlapping by half, and picks the
/// bin whose central half holds the estimate, so that the bin still holds
/// the true value when the estimate is off by less than a quarter bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub half: f64,
    pub bits: u32,
    pub noisy: bool,
}

impl Quantizer {
    pub fn bin_width(&self) -> f64 {
        2.0 * self.half / (self.bits as f64).exp2()
    }

    pub fn bins(&self) -> u64 {
        if self.noisy {
            (1u64 << (self.bits + 1)) - 1
        } else {
            1u64 << self.bits
        }
    }

    fn spacing(&self) -> f64 {
        if self.noisy {
            self.bin_width() / 2.0
        } else {
            self.bin_width()
        }
    }

    pub fn index(&self, v: f64) -> u64 {
        let s = self.spacing();
        let offset = if self.noisy { s / 2.0 } else { 0.0 };
        let raw = ((v + self.half - offset) / s).floor();
        raw.clamp(0.0, (self.bins() - 1) as f64) as u64
    }

    pub fn center(&self, index: u64) -> f64 {
        -self.half + index as f64 * self.spacing() + self.bin_width() / 2.0
    }
}

/// Index of the overlapping bin (width `Δ`, spacing `Δ/2`, centers at
/// multiples of `Δ/2`) whose central half holds `x_noisy`, with the bin's
/// interval. The interval contains the true state whenever
/// `|x_noisy − x| < Γ/2` and `Δ > 2Γ`.
pub fn overlapping_bin_quantize(x_noisy: f64, delta: f64, gamma: f64) -> Result<(i64, (f64, f64))> {
    if !(delta > 2.0 * gamma) {
        return Err(Error::NoiseTooLarge { delta, gamma });
    }
    let j = (x_noisy / (delta / 2.0)).round() as i64;
    let c = j as f64 * delta / 2.0;
    Ok((j, (c - delta / 2.0, c + delta / 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimum_window_example() {
        let p = FbParams::new(1.5, 1.0, Rate::integer(1)).unwrap();
        assert!((p.delta - 4.0).abs() < 1e-12);
        let mut q = p;
        q.delta = 3.9;
        assert!(matches!(q.validate(), Err(Error::DeltaTooSmall { .. })));
        assert!(matches!(
            FbParams::new(2.5, 1.0, Rate::integer(1)),
            Err(Error::RateTooLow { .. })
        ));
    }

    #[test]
    fn integer_rate_window_is_constant_at_minimum() {
        let p = FbParams::new(1.5, 1.0, Rate::integer(1)).unwrap();
        let mut w = p.window();
        for _ in 0..100 {
            assert!((w.width() - 4.0).abs() < 1e-12);
            w.advance();
        }
        assert!((p.window_max() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_rate_window_can_exceed_delta() {
        let p = FbParams::new(1.2, 1.0, Rate::new(1, 2).unwrap()).unwrap();
        assert!(p.window_max() > p.delta);
    }

    #[test]
    fn plain_quantizer_reduces_interval_by_bins() {
        let q = Quantizer {
            half: 3.0,
            bits: 2,
            noisy: false,
        };
        assert_eq!(q.bins(), 4);
        for i in 0..=600 {
            let v = -3.0 + i as f64 * 0.01;
            let c = q.center(q.index(v));
            assert!((v - c).abs() <= q.bin_width() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn overlapping_quantizer_tolerates_quarter_bin_error() {
        let q = Quantizer {
            half: 3.0,
            bits: 2,
            noisy: true,
        };
        assert_eq!(q.bins(), 7);
        let tol = q.bin_width() / 4.0;
        for i in 0..=600 {
            let v = -3.0 + i as f64 * 0.01;
            for k in -4..=4 {
                let est = v + tol * 0.999 * k as f64 / 4.0;
                let c = q.center(q.index(est));
                assert!((v - c).abs() <= q.bin_width() / 2.0 + 1e-12, "{v} {est}");
            }
        }
        // zero bits: a single bin centered at zero
        let q0 = Quantizer {
            half: 3.0,
            bits: 0,
            noisy: true,
        };
        assert_eq!((q0.bins(), q0.center(0)), (1, 0.0));
    }

    #[test]
    fn overlapping_bins_contain_true_state_on_a_grid() {
        let (delta, gamma) = (1.0, 0.45);
        assert!(overlapping_bin_quantize(0.0, 1.0, 0.5).is_err());
        for i in -400..=400 {
            let x = i as f64 * 0.0125;
            for k in -9..=9 {
                let n = gamma / 2.0 * 0.999 * k as f64 / 9.0;
                let (_, (lo, hi)) = overlapping_bin_quantize(x + n, delta, gamma).unwrap();
                assert!(lo <= x && x <= hi);
            }
        }
        // Γ = 0 puts every point in the central half of its own bin
        let (j, _) = overlapping_bin_quantize(0.74, 1.0, 0.0).unwrap();
        assert_eq!(j, 1);
    }

    #[test]
    fn blocking_rate_formula() {
        assert!((rate_with_blocking(2.0, 4) - 1.25).abs() < 1e-15);
    }
}
