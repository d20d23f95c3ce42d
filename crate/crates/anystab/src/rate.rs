//! Exact rational rates in bits per channel use.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};

/// A nonnegative rational rate `num/den`, kept in lowest terms so that
/// `⌊R t⌋` can be computed in integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RateRepr", into = "String")]
pub struct Rate {
    num: u64,
    den: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RateRepr {
    Int(u64),
    Text(String),
}

impl TryFrom<RateRepr> for Rate {
    type Error = Error;
    fn try_from(r: RateRepr) -> Result<Self, Error> {
        match r {
            RateRepr::Int(n) => Rate::new(n, 1),
            RateRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Rate> for String {
    fn from(r: Rate) -> String {
        r.to_string()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rate {
    pub fn new(num: u64, den: u64) -> crate::Result<Self> {
        if den == 0 {
            return Err(invalid("rate", "zero denominator"));
        }
        let g = gcd(num, den).max(1);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(n: u64) -> Self {
        Self { num: n, den: 1 }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    /// `⌊R t⌋`.
    pub fn floor_mul(&self, t: u64) -> u64 {
        ((self.num as u128 * t as u128) / self.den as u128) as u64
    }

    /// Number of bits that become available during step `t`, i.e.
    /// `⌊R(t+1)⌋ − ⌊R t⌋`.
    pub fn bits_in_step(&self, t: u64) -> u64 {
        self.floor_mul(t + 1) - self.floor_mul(t)
    }

    /// First time at which bit `k` is available: `⌈k/R⌉`.
    pub fn arrival(&self, k: u64) -> u64 {
        assert!(self.num > 0, "arrival time undefined at rate 0");
        ((k as u128 * self.den as u128).div_ceil(self.num as u128)) as u64
    }

    /// Age of bit `k` at time `t`, `t − k/R`, formed from an exact integer
    /// numerator before the final division.
    pub fn age(&self, t: u64, k: u64) -> f64 {
        let n = self.num as i128 * t as i128 - k as i128 * self.den as i128;
        n as f64 / self.num as f64
    }

    pub fn scale(&self, n: u64) -> Self {
        Rate::new(self.num * n, self.den).expect("nonzero denominator")
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Rate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let bad = || invalid("rate", format!("cannot parse `{s}` (use `p/q` or an integer)"));
        match s.split_once('/') {
            Some((p, q)) => {
                let p = p.trim().parse().map_err(|_| bad())?;
                let q = q.trim().parse().map_err(|_| bad())?;
                Rate::new(p, q)
            }
            None => Rate::new(s.parse().map_err(|_| bad())?, 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_bookkeeping_for_fractional_rate() {
        let r: Rate = "2/6".parse().unwrap();
        assert_eq!((r.num(), r.den()), (1, 3));
        let counts: Vec<u64> = (0..7).map(|t| r.bits_in_step(t)).collect();
        assert_eq!(counts, vec![0, 0, 1, 0, 0, 1, 0]);
        assert_eq!(r.arrival(1), 3);
        assert_eq!(r.arrival(0), 0);
        assert!((r.age(7, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parses_integers_and_roundtrips() {
        let r: Rate = "3".parse().unwrap();
        assert!(r.is_integer());
        assert_eq!(r.to_string(), "3");
        assert!("1/0".parse::<Rate>().is_err());
        assert!("x".parse::<Rate>().is_err());
    }
}
