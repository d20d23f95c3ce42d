//! Cantor-set encoding of a bitstream into bounded disturbances, floating
//! point version.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rate::Rate;
use crate::rng::{stream, Tag};

/// Bits `S_k ∈ {+1, −1}` arriving at rate `R`: at time `t` the bits
/// `0..=⌊Rt⌋` are available.
#[derive(Debug, Clone, PartialEq)]
pub struct BitStream {
    rate: Rate,
    bits: Vec<i8>,
}

impl BitStream {
    pub fn from_bits(rate: Rate, bits: Vec<i8>) -> Result<Self> {
        if bits.iter().any(|&b| b != 1 && b != -1) {
            return Err(invalid("bits", "every bit must be +1 or -1"));
        }
        Ok(Self { rate, bits })
    }

    /// Fair coin flips covering times `0..=horizon`.
    pub fn random(rate: Rate, horizon: u64, seed: u64, trial: u64) -> Self {
        let mut rng = stream(seed, Tag::Bits, trial);
        let n = rate.floor_mul(horizon + 1) as usize + 1;
        let bits = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self { rate, bits }
    }

    pub fn rate(&self) -> Rate {
        self.rate
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    /// Number of bits available at time `t`.
    pub fn available(&self, t: u64) -> usize {
        self.rate.floor_mul(t) as usize + 1
    }

    /// Whether the stream holds every bit available at time `t`.
    pub fn covers(&self, t: u64) -> bool {
        self.available(t) <= self.bits.len()
    }
}

/// Constants of the encoding `X̌_t = γλ^t Σ_{k≤⌊Rt⌋} (2+ε₁)^{−k} S_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CantorParams {
    pub lambda: f64,
    pub omega: f64,
    pub rate: Rate,
    /// `ε₁ = λ^{1/R} − 2`.
    pub eps1: f64,
    /// `γ = Ω / (2λ^{1+1/R})`.
    pub gamma: f64,
}

impl CantorParams {
    pub fn new(lambda: f64, omega: f64, rate: Rate) -> Result<Self> {
        if !(lambda > 1.0) {
            return Err(invalid("lambda", format!("the encoding needs λ > 1, got {lambda}")));
        }
        if !(omega > 0.0) {
            return Err(invalid("omega", "must be positive"));
        }
        if rate.num() == 0 {
            return Err(invalid("rate", "must be positive"));
        }
        let r = rate.as_f64();
        if r >= lambda.log2() {
            return Err(Error::RateTooHigh {
                rate: r,
                log2_lambda: lambda.log2(),
            });
        }
        let base = lambda.powf(1.0 / r);
        Ok(Self {
            lambda,
            omega,
            rate,
            eps1: base - 2.0,
            gamma: omega / (2.0 * lambda * base),
        })
    }

    /// `2 + ε₁ = λ^{1/R}`.
    pub fn base(&self) -> f64 {
        2.0 + self.eps1
    }

    /// The guaranteed bound `γλ^{1+1/R}` on `|W_t|`; equals `Ω/2`.
    pub fn disturbance_bound(&self) -> f64 {
        self.gamma * self.lambda * self.base()
    }

    /// `γε₁/(1+ε₁)`: half of the minimum gap at age zero.
    pub fn half_gap(&self) -> f64 {
        self.gamma * self.eps1 / (1.0 + self.eps1)
    }

    /// Threshold on `|X_t|` above which bit `j` may be decoded wrongly at
    /// time `t`: `λ^{t−j/R} γε₁/(1+ε₁)`.
    pub fn error_threshold(&self, t: u64, j: u64) -> f64 {
        self.lambda.powf(self.rate.age(t, j)) * self.half_gap()
    }

    /// Lower bound on the gap between encodings first differing at bit `i`.
    pub fn gap_bound(&self, t: u64, i: u64) -> f64 {
        2.0 * self.error_threshold(t, i)
    }

    /// Longest horizon over which float extraction keeps every available
    /// bit resolvable: `λ^t ≤ 2^40`.
    pub fn float_horizon(&self) -> u64 {
        (40.0 / self.lambda.log2()).floor() as u64
    }

    /// `X̌_t` for the given bits, evaluated directly.
    pub fn encoded_state(&self, bits: &[i8], t: u64) -> f64 {
        let n = self.rate.floor_mul(t) as usize + 1;
        assert!(bits.len() >= n, "bits through ⌊Rt⌋ required");
        (0..n)
            .map(|k| self.lambda.powf(self.rate.age(t, k as u64)) * bits[k] as f64)
            .sum::<f64>()
            * self.gamma
    }

    /// `W_t = γλ^{t+1} Σ_{k=⌊Rt⌋+1}^{⌊R(t+1)⌋} (2+ε₁)^{−k} S_k`.
    pub fn disturbance(&self, bits: &[i8], t: u64) -> f64 {
        let lo = self.rate.floor_mul(t) + 1;
        let hi = self.rate.floor_mul(t + 1);
        (lo..=hi)
            .map(|k| self.lambda.powf(self.rate.age(t + 1, k)) * bits[k as usize] as f64)
            .sum::<f64>()
            * self.gamma
    }

    /// Successive-threshold extraction of `Ŝ_0..Ŝ_{⌊Rt⌋}` from `input`.
    /// Ties go to `+1`.
    pub fn extract(&self, input: f64, t: u64) -> Vec<i8> {
        let n = self.rate.floor_mul(t) as usize + 1;
        let mut out = Vec::with_capacity(n);
        let mut threshold = 0.0;
        for k in 0..n {
            let s: i8 = if input >= threshold { 1 } else { -1 };
            threshold += self.gamma * self.lambda.powf(self.rate.age(t, k as u64)) * s as f64;
            out.push(s);
        }
        out
    }
}

/// Drives the bit-carrying part of the simulated plant.
#[derive(Debug, Clone)]
pub struct CantorEncoder {
    params: CantorParams,
    t: u64,
    state: f64,
}

impl CantorEncoder {
    /// Starts at `X̌_0 = γS_0`.
    pub fn new(params: CantorParams, bits: &BitStream) -> Result<Self> {
        if bits.rate() != params.rate {
            return Err(invalid("bits", "stream rate differs from the codec rate"));
        }
        if bits.bits().is_empty() {
            return Err(Error::Empty("bit stream"));
        }
        Ok(Self {
            params,
            t: 0,
            state: params.gamma * bits.bits()[0] as f64,
        })
    }

    pub fn initial_state(&self) -> f64 {
        self.state
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    /// Current `X̌_t`.
    pub fn state(&self) -> f64 {
        self.state
    }

    /// Emits `W_t` and advances to `t + 1`.
    pub fn step(&mut self, bits: &BitStream) -> Result<f64> {
        if !bits.covers(self.t + 1) {
            return Err(invalid("bits", format!("stream too short for time {}", self.t + 1)));
        }
        let w = self.params.disturbance(bits.bits(), self.t);
        let h = self.params.omega / 2.0;
        if w.abs() > h {
            return Err(Error::DisturbanceBound { w, half_omega: h });
        }
        self.state = self.params.lambda * self.state + w;
        self.t += 1;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: u64, d: u64) -> Rate {
        Rate::new(n, d).unwrap()
    }

    #[test]
    fn constants_for_lambda_three_rate_one() {
        let p = CantorParams::new(3.0, 1.0, r(1, 1)).unwrap();
        assert!((p.eps1 - 1.0).abs() < 1e-15);
        assert!((p.gamma - 1.0 / 18.0).abs() < 1e-15);
        assert!((p.disturbance_bound() - 0.5).abs() < 1e-15);
        assert!(matches!(CantorParams::new(2.0, 1.0, r(1, 1)), Err(Error::RateTooHigh { .. })));
    }

    #[test]
    fn all_plus_stream_approaches_geometric_limit() {
        let p = CantorParams::new(3.0, 1.0, r(1, 1)).unwrap();
        let bits = vec![1i8; 41];
        let ratio = p.encoded_state(&bits, 40) / (p.gamma * 3f64.powi(40));
        let limit = (2.0 + p.eps1) / (1.0 + p.eps1);
        assert!((ratio - limit).abs() < 1e-12);
    }

    #[test]
    fn flipping_first_bit_moves_state_by_two_gamma_lambda_t() {
        let p = CantorParams::new(2.5, 1.0, r(1, 2)).unwrap();
        let mut a = vec![1i8, -1, 1, 1, -1, 1, 1];
        let x1 = p.encoded_state(&a, 9);
        a[0] = -1;
        let x2 = p.encoded_state(&a, 9);
        assert!(((x1 - x2) - 2.0 * p.gamma * 2.5f64.powi(9)).abs() < 1e-9);
    }

    #[test]
    fn encoder_recursion_matches_direct_formula() {
        for rate in [r(1, 1), r(1, 3), r(2, 3)] {
            let lam = 2.0f64.powf(rate.as_f64() + 0.4);
            let p = CantorParams::new(lam, 2.0, rate).unwrap();
            let bits = BitStream::random(rate, 60, 4, 0);
            let mut e = CantorEncoder::new(p, &bits).unwrap();
            for t in 0..60 {
                let x = p.encoded_state(bits.bits(), t);
                assert!((e.state() - x).abs() <= 1e-9 * x.abs().max(p.gamma));
                let w = e.step(&bits).unwrap();
                assert!(w.abs() <= p.disturbance_bound() + 1e-15);
            }
        }
    }

    #[test]
    fn extraction_examples() {
        let p = CantorParams::new(3.0, 1.0, r(1, 1)).unwrap();
        assert_eq!(p.extract(p.gamma, 0), vec![1]);
        assert_eq!(p.extract(-p.gamma, 0), vec![-1]);
        assert_eq!(p.extract(0.0, 0), vec![1]);
        let bits = BitStream::random(r(1, 1), 20, 8, 1);
        for t in 0..20 {
            let x = p.encoded_state(bits.bits(), t);
            assert_eq!(p.extract(x, t), bits.bits()[..t as usize + 1]);
        }
    }
}
