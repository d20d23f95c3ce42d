//! Exact rational arithmetic for the Cantor encoding.
//!
//! Available when `λ` is rational and `λ^{1/R}` is rational as well (for
//! example integer `λ` with `R = 1`). Encodings, thresholds and gaps are
//! then computed without rounding, which makes exhaustive checks bit-exact.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{invalid, Error, Result};
use crate::rate::Rate;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactCantor {
    lambda: BigRational,
    base: BigRational,
    gamma: BigRational,
    omega: BigRational,
    rate: Rate,
}

fn ratio(n: u64, d: u64) -> Result<BigRational> {
    if d == 0 {
        return Err(invalid("ratio", "zero denominator"));
    }
    Ok(BigRational::new(BigInt::from(n), BigInt::from(d)))
}

fn exact_root(x: &BigInt, k: u32) -> Option<BigInt> {
    let r = x.nth_root(k);
    (r.pow(k) == *x).then_some(r)
}

impl ExactCantor {
    /// `λ = lambda.0 / lambda.1`, `Ω = omega.0 / omega.1`.
    pub fn new(lambda: (u64, u64), omega: (u64, u64), rate: Rate) -> Result<Self> {
        let lam = ratio(lambda.0, lambda.1)?;
        let om = ratio(omega.0, omega.1)?;
        if lam <= BigRational::one() {
            return Err(invalid("lambda", "the encoding needs λ > 1"));
        }
        if om.is_zero() {
            return Err(invalid("omega", "must be positive"));
        }
        if rate.num() == 0 {
            return Err(invalid("rate", "must be positive"));
        }
        // λ^{1/R} = (p/q)^{den/num}
        let e = rate.den() as u32;
        let k = rate.num() as u32;
        let p = exact_root(&lam.numer().pow(e), k);
        let q = exact_root(&lam.denom().pow(e), k);
        let (Some(p), Some(q)) = (p, q) else {
            return Err(invalid("lambda", format!("λ^(1/R) is irrational for λ = {lam}, R = {rate}")));
        };
        let base = BigRational::new(p, q);
        let two = BigRational::from_integer(2.into());
        if base <= two {
            let l = lambda.0 as f64 / lambda.1 as f64;
            return Err(Error::RateTooHigh {
                rate: rate.as_f64(),
                log2_lambda: l.log2(),
            });
        }
        let gamma = &om / (&two * &lam * &base);
        Ok(Self {
            lambda: lam,
            base,
            gamma,
            omega: om,
            rate,
        })
    }

    pub fn rate(&self) -> Rate {
        self.rate
    }

    pub fn gamma(&self) -> &BigRational {
        &self.gamma
    }

    pub fn eps1(&self) -> BigRational {
        &self.base - BigRational::from_integer(2.into())
    }

    pub fn half_omega(&self) -> BigRational {
        &self.omega / BigRational::from_integer(2.into())
    }

    /// `γλ^t(2+ε₁)^{−k}`, the weight of bit `k` at time `t`.
    pub fn weight(&self, t: u64, k: u64) -> BigRational {
        &self.gamma * self.lambda.pow(t as i32) / self.base.pow(k as i32)
    }

    fn weights(&self, t: u64) -> Vec<BigRational> {
        let n = self.rate.floor_mul(t) + 1;
        let mut w = Vec::with_capacity(n as usize);
        let mut c = &self.gamma * self.lambda.pow(t as i32);
        for _ in 0..n {
            w.push(c.clone());
            c /= &self.base;
        }
        w
    }

    pub fn state(&self, bits: &[i8], t: u64) -> BigRational {
        self.weights(t)
            .into_iter()
            .zip(bits)
            .fold(BigRational::zero(), |acc, (w, &s)| if s > 0 { acc + w } else { acc - w })
    }

    pub fn disturbance(&self, bits: &[i8], t: u64) -> BigRational {
        let lo = self.rate.floor_mul(t) + 1;
        let hi = self.rate.floor_mul(t + 1);
        (lo..=hi).fold(BigRational::zero(), |acc, k| {
            let w = self.weight(t + 1, k);
            if bits[k as usize] > 0 {
                acc + w
            } else {
                acc - w
            }
        })
    }

    pub fn extract(&self, input: &BigRational, t: u64) -> Vec<i8> {
        let mut threshold = BigRational::zero();
        self.weights(t)
            .into_iter()
            .map(|w| {
                let s: i8 = if *input >= threshold { 1 } else { -1 };
                if s > 0 {
                    threshold += w;
                } else {
                    threshold -= w;
                }
                s
            })
            .collect()
    }

    /// `λ^{t−i/R} · 2γε₁/(1+ε₁)`.
    pub fn gap_bound(&self, t: u64, i: u64) -> BigRational {
        let eps = self.eps1();
        let two = BigRational::from_integer(2.into());
        self.weight(t, i) * two * &eps / (BigRational::one() + &eps)
    }

    /// Smallest `|X̌_t(S) − X̌_t(S̄)|` over all pairs of streams that first
    /// differ at bit `i`, by enumeration. The shared prefix cancels in the
    /// difference, so enumerating every suffix covers every pair.
    pub fn min_gap(&self, t: u64, i: u64) -> Option<BigRational> {
        let w = self.weights(t);
        let i = i as usize;
        if i >= w.len() {
            return None;
        }
        let mut tails = vec![BigRational::zero()];
        for wk in &w[i + 1..] {
            let mut next = Vec::with_capacity(tails.len() * 2);
            for v in &tails {
                next.push(v + wk);
                next.push(v - wk);
            }
            tails = next;
        }
        let mut all: Vec<(BigRational, bool)> = tails
            .iter()
            .flat_map(|v| [(v + &w[i], true), (v - &w[i], false)])
            .collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all.windows(2)
            .filter(|p| p[0].1 != p[1].1)
            .map(|p| (&p[1].0 - &p[0].0).abs())
            .min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_irrational_base() {
        assert!(ExactCantor::new((3, 1), (1, 1), Rate::new(2, 3).unwrap()).is_err());
        // λ = 3/2 at R = 1/2 gives base 9/4
        let c = ExactCantor::new((3, 2), (1, 1), Rate::new(1, 2).unwrap()).unwrap();
        assert_eq!(c.eps1(), BigRational::new(1.into(), 4.into()));
        assert!(matches!(
            ExactCantor::new((2, 1), (1, 1), Rate::integer(1)),
            Err(Error::RateTooHigh { .. })
        ));
    }

    #[test]
    fn disturbances_respect_half_omega() {
        let c = ExactCantor::new((3, 1), (1, 1), Rate::integer(1)).unwrap();
        assert_eq!(*c.gamma(), BigRational::new(1.into(), 18.into()));
        for s in [1i8, -1] {
            let bits = vec![1, s, -1, s, 1];
            for t in 0..4 {
                assert!(c.disturbance(&bits, t).abs() <= c.half_omega());
            }
        }
    }

    #[test]
    fn min_gap_matches_all_pairs() {
        let c = ExactCantor::new((5, 2), (1, 1), Rate::integer(1)).unwrap();
        let t = 4u64;
        let n = 5usize;
        let streams: Vec<Vec<i8>> = (0..1u32 << n)
            .map(|m| (0..n).map(|k| if m >> k & 1 == 1 { 1 } else { -1 }).collect())
            .collect();
        let states: Vec<BigRational> = streams.iter().map(|s| c.state(s, t)).collect();
        for i in 0..n {
            let mut best: Option<BigRational> = None;
            for a in 0..streams.len() {
                for b in 0..streams.len() {
                    let first = (0..n).find(|&k| streams[a][k] != streams[b][k]);
                    if first == Some(i) {
                        let d = (&states[a] - &states[b]).abs();
                        best = Some(best.map_or(d.clone(), |x| x.min(d)));
                    }
                }
            }
            assert_eq!(best, c.min_gap(t, i as u64));
        }
    }
}
