//! Memoryless channels with optional noiseless delayed output feedback.

mod exponent;

pub use exponent::{bsc_e0, gallager_e0, random_coding_exponent, Exponent};

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, Tag};
use crate::stats::Welford;

const STOCHASTIC_TOL: f64 = 1e-12;

/// A discrete memoryless channel given by its row-stochastic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DmcRepr", into = "DmcRepr")]
pub struct DmcSpec {
    p: Vec<Vec<f64>>,
    cdf: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DmcRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix_csv: Option<String>,
}

impl TryFrom<DmcRepr> for DmcSpec {
    type Error = Error;
    fn try_from(r: DmcRepr) -> Result<Self> {
        match (r.matrix, r.matrix_csv) {
            (Some(m), None) => DmcSpec::new(m),
            (None, Some(path)) => DmcSpec::from_csv(&path),
            _ => Err(invalid("dmc", "give exactly one of `matrix` or `matrix_csv`")),
        }
    }
}

impl From<DmcSpec> for DmcRepr {
    fn from(d: DmcSpec) -> Self {
        DmcRepr {
            matrix: Some(d.p),
            matrix_csv: None,
        }
    }
}

impl DmcSpec {
    pub fn new(p: Vec<Vec<f64>>) -> Result<Self> {
        if p.is_empty() || p[0].is_empty() {
            return Err(Error::NotStochastic("empty matrix".into()));
        }
        let cols = p[0].len();
        for (a, row) in p.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::NotStochastic(format!("row {a} has {} entries, expected {cols}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::NotStochastic(format!("row {a} has entry {v}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic(format!("row {a} sums to {s}")));
            }
        }
        let cdf = p
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                let mut c: Vec<f64> = row
                    .iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect();
                *c.last_mut().unwrap() = 1.0;
                c
            })
            .collect();
        Ok(Self { p, cdf })
    }

    /// Reads a header-free, row-major CSV matrix.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| invalid("matrix_csv", format!("{}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| invalid("matrix_csv", e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| invalid("matrix_csv", format!("`{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        DmcSpec::new(rows)
    }

    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", "crossover must be in [0, 1]"));
        }
        DmcSpec::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    pub fn identity(n: usize) -> Self {
        let p = (0..n).map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
        DmcSpec::new(p).expect("identity is stochastic")
    }

    pub fn inputs(&self) -> usize {
        self.p.len()
    }

    pub fn outputs(&self) -> usize {
        self.p[0].len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn prob(&self, a: usize, b: usize) -> f64 {
        self.p[a][b]
    }

    pub fn sample(&self, a: usize, u: f64) -> usize {
        let row = &self.cdf[a];
        row.iter().position(|&c| u < c).unwrap_or(row.len() - 1)
    }

    /// Smallest positive transition probability.
    pub fn min_positive(&self) -> f64 {
        self.p
            .iter()
            .flatten()
            .copied()
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// For each output, the unique input that can produce it, if only one can.
    pub fn decisive_outputs(&self) -> Vec<Option<usize>> {
        (0..self.outputs())
            .map(|b| {
                let mut who = (0..self.inputs()).filter(|&a| self.p[a][b] > 0.0);
                match (who.next(), who.next()) {
                    (Some(a), None) => Some(a),
                    _ => None,
                }
            })
            .collect()
    }

    /// Symmetric in the sense that the outputs split into groups on which
    /// every row is a permutation of every other row and every column a
    /// permutation of every other column; uniform inputs are then optimal.
    pub fn is_symmetric(&self) -> bool {
        let sorted = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v
        };
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-14);
        let cols: Vec<Vec<f64>> = (0..self.outputs())
            .map(|b| (0..self.inputs()).map(|a| self.p[a][b]).collect())
            .collect();
        let mut groups: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for (b, c) in cols.iter().enumerate() {
            let key = sorted(c.clone());
            match groups.iter_mut().find(|(k, _)| close(k, &key)) {
                Some((_, members)) => members.push(b),
                None => groups.push((key, vec![b])),
            }
        }
        groups.iter().all(|(_, members)| {
            let row0 = sorted(members.iter().map(|&b| self.p[0][b]).collect());
            (1..self.inputs()).all(|a| close(&row0, &sorted(members.iter().map(|&b| self.p[a][b]).collect())))
        })
    }

    /// Mutual information in bits for input distribution `q`.
    pub fn mutual_information(&self, q: &[f64]) -> f64 {
        let py: Vec<f64> = (0..self.outputs())
            .map(|b| (0..self.inputs()).map(|a| q[a] * self.p[a][b]).sum())
            .collect();
        let mut i = 0.0;
        for a in 0..self.inputs() {
            for b in 0..self.outputs() {
                let v = self.p[a][b];
                if q[a] > 0.0 && v > 0.0 {
                    i += q[a] * v * (v / py[b]).log2();
                }
            }
        }
        i
    }

    /// Shannon capacity in bits by Blahut-Arimoto, with the optimizing input.
    pub fn capacity(&self) -> (f64, Vec<f64>) {
        let (na, nb) = (self.inputs(), self.outputs());
        let mut q = vec![1.0 / na as f64; na];
        let mut c = vec![0.0; na];
        for _ in 0..100_000 {
            let py: Vec<f64> = (0..nb).map(|b| (0..na).map(|a| q[a] * self.p[a][b]).sum()).collect();
            for a in 0..na {
                let d: f64 = (0..nb)
                    .filter(|&b| self.p[a][b] > 0.0)
                    .map(|b| self.p[a][b] * (self.p[a][b] / py[b]).ln())
                    .sum();
                c[a] = d.exp();
            }
            let z: f64 = (0..na).map(|a| q[a] * c[a]).sum();
            let lower = z.ln();
            let upper = c.iter().copied().fold(f64::NEG_INFINITY, f64::max).ln();
            for a in 0..na {
                q[a] *= c[a] / z;
            }
            if upper - lower < 1e-13 {
                break;
            }
        }
        (self.mutual_information(&q), q)
    }
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

pub fn bsc_capacity(p: f64) -> f64 {
    1.0 - binary_entropy(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ErasureKind {
    Packet { bits: u32 },
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErasureSpec {
    #[serde(flatten)]
    pub kind: ErasureKind,
    pub delta: f64,
}

impl ErasureSpec {
    pub fn packet(bits: u32, delta: f64) -> Result<Self> {
        let s = Self {
            kind: ErasureKind::Packet { bits },
            delta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn real(delta: f64) -> Result<Self> {
        let s = Self {
            kind: ErasureKind::Real,
            delta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(invalid("delta", format!("must be in [0, 1], got {}", self.delta)));
        }
        if let ErasureKind::Packet { bits } = self.kind {
            if bits == 0 || bits > 64 {
                return Err(invalid("bits", "packet length must be in 1..=64"));
            }
        }
        Ok(())
    }

    /// Shannon capacity in bits per use; unbounded for real-valued packets.
    pub fn capacity(&self) -> f64 {
        match self.kind {
            ErasureKind::Packet { bits } => (1.0 - self.delta) * bits as f64,
            ErasureKind::Real => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AwgnSpec {
    pub power: f64,
    pub noise_var: f64,
    /// Relative excess of the running input power over `power` that is
    /// reported as a budget violation.
    #[serde(default = "default_power_tol")]
    pub power_tolerance: f64,
}

fn default_power_tol() -> f64 {
    0.05
}

impl AwgnSpec {
    pub fn new(power: f64, noise_var: f64) -> Result<Self> {
        let s = Self {
            power,
            noise_var,
            power_tolerance: default_power_tol(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power > 0.0) {
            return Err(invalid("power", "must be > 0"));
        }
        if !(self.noise_var > 0.0) {
            return Err(invalid("noise_var", "must be > 0"));
        }
        Ok(())
    }

    pub fn capacity(&self) -> f64 {
        0.5 * (1.0 + self.power / self.noise_var).log2()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChannelSpec {
    Dmc(DmcSpec),
    Erasure(ErasureSpec),
    Awgn(AwgnSpec),
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelSpec::Dmc(_) => Ok(()),
            ChannelSpec::Erasure(e) => e.validate(),
            ChannelSpec::Awgn(a) => a.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Input {
    Symbol(usize),
    Packet(u64),
    Real(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Output {
    Symbol(usize),
    Packet(u64),
    Real(f64),
    Erased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    #[default]
    None,
    UnitDelay,
    /// Feedback delayed by `1 + theta` uses.
    Delayed { theta: u64 },
}

impl FeedbackMode {
    fn theta(&self) -> Option<u64> {
        match self {
            FeedbackMode::None => None,
            FeedbackMode::UnitDelay => Some(0),
            FeedbackMode::Delayed { theta } => Some(*theta),
        }
    }
}

/// One trial's use of a channel. Uses are numbered from 1.
pub struct ChannelSession {
    spec: ChannelSpec,
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
    feedback: FeedbackMode,
    log: VecDeque<(Input, Output)>,
    log_cap: Option<usize>,
    first_use: u64,
    uses: u64,
    power: Welford,
    power_warning: bool,
}

impl ChannelSession {
    pub fn new(spec: ChannelSpec, feedback: FeedbackMode, seed: u64, trial: u64) -> Result<Self> {
        spec.validate()?;
        let normal = match &spec {
            ChannelSpec::Awgn(a) => Some(Normal::new(0.0, a.noise_var.sqrt()).map_err(|e| invalid("noise_var", e.to_string()))?),
            _ => None,
        };
        Ok(Self {
            spec,
            rng: rng::stream(seed, Tag::Channel, trial),
            normal,
            feedback,
            log: VecDeque::new(),
            log_cap: None,
            first_use: 1,
            uses: 0,
            power: Welford::default(),
            power_warning: false,
        })
    }

    /// Retain only the most recent `cap` uses in the log.
    pub fn with_log_cap(mut self, cap: usize) -> Self {
        self.log_cap = Some(cap.max(1));
        self
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn feedback_mode(&self) -> FeedbackMode {
        self.feedback
    }

    pub fn uses(&self) -> u64 {
        self.uses
    }

    pub fn step(&mut self, a: Input) -> Result<Output> {
        let out = match (&self.spec, a) {
            (ChannelSpec::Dmc(d), Input::Symbol(s)) => {
                if s >= d.inputs() {
                    return Err(Error::SymbolOutOfAlphabet(s.to_string()));
                }
                Output::Symbol(d.sample(s, self.rng.random()))
            }
            (ChannelSpec::Erasure(e), a) => {
                match (e.kind, a) {
                    (ErasureKind::Packet { bits }, Input::Packet(v)) => {
                        if bits < 64 && v >> bits != 0 {
                            return Err(Error::SymbolOutOfAlphabet(format!("{v:#x}")));
                        }
                    }
                    (ErasureKind::Real, Input::Real(x)) if x.is_finite() => {}
                    (_, a) => return Err(Error::SymbolOutOfAlphabet(format!("{a:?}"))),
                }
                let erased = self.rng.random::<f64>() < e.delta;
                match (erased, a) {
                    (true, _) => Output::Erased,
                    (false, Input::Packet(v)) => Output::Packet(v),
                    (false, Input::Real(x)) => Output::Real(x),
                    (false, Input::Symbol(_)) => unreachable!(),
                }
            }
            (ChannelSpec::Awgn(spec), Input::Real(x)) if x.is_finite() => {
                let n = self.normal.as_ref().expect("normal set for awgn").sample(&mut self.rng);
                self.power.push(x * x);
                if self.power.count() >= 1000 && self.power.mean() > spec.power * (1.0 + spec.power_tolerance) {
                    self.power_warning = true;
                }
                Output::Real(x + n)
            }
            (_, a) => return Err(Error::SymbolOutOfAlphabet(format!("{a:?}"))),
        };
        self.uses += 1;
        self.log.push_back((a, out));
        if let Some(cap) = self.log_cap {
            while self.log.len() > cap {
                self.log.pop_front();
                self.first_use += 1;
            }
        }
        Ok(out)
    }

    /// Outputs of uses `1..=t-1-θ`, as visible to the encoder before use `t`.
    pub fn feedback_view(&self, t: u64) -> Result<Vec<Output>> {
        let theta = self.feedback.theta().ok_or(Error::FeedbackDisabled)?;
        let last = t.saturating_sub(1 + theta).min(self.uses);
        if last == 0 {
            return Ok(Vec::new());
        }
        if self.first_use > 1 {
            return Err(Error::HistoryTruncated(self.first_use));
        }
        Ok(self.log.iter().take(last as usize).map(|(_, b)| *b).collect())
    }

    /// Most recent output visible to the encoder before use `t`.
    pub fn latest_feedback(&self, t: u64) -> Result<Option<Output>> {
        let theta = self.feedback.theta().ok_or(Error::FeedbackDisabled)?;
        let last = t.saturating_sub(1 + theta).min(self.uses);
        if last == 0 {
            return Ok(None);
        }
        if last < self.first_use {
            return Err(Error::HistoryTruncated(last));
        }
        Ok(Some(self.log[(last - self.first_use) as usize].1))
    }

    pub fn log(&self) -> impl Iterator<Item = &(Input, Output)> {
        self.log.iter()
    }

    pub fn power(&self) -> &Welford {
        &self.power
    }

    pub fn power_warning(&self) -> bool {
        self.power_warning
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn rejects_non_stochastic() {
        assert!(matches!(DmcSpec::new(vec![vec![0.5, 0.6]]), Err(Error::NotStochastic(_))));
        assert!(DmcSpec::new(vec![vec![1.5, -0.5]]).is_err());
        assert!(DmcSpec::new(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
        assert!(DmcSpec::new(vec![vec![0.5, 0.5 + 5e-13]]).is_ok());
    }

    #[test]
    fn noiseless_bit_is_identity() {
        let mut s = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::identity(2)), FeedbackMode::None, 1, 0).unwrap();
        for _ in 0..1000 {
            assert_eq!(s.step(Input::Symbol(1)).unwrap(), Output::Symbol(1));
        }
        assert!(s.step(Input::Symbol(2)).is_err());
        assert!(s.step(Input::Real(1.0)).is_err());
    }

    #[test]
    fn real_erasure_identity_and_rate() {
        let mut s = ChannelSession::new(ChannelSpec::Erasure(ErasureSpec::real(0.0).unwrap()), FeedbackMode::None, 1, 0).unwrap();
        for i in 0..1000 {
            let x = i as f64 * 0.37 - 100.0;
            assert_eq!(s.step(Input::Real(x)).unwrap(), Output::Real(x));
        }
        let mut s = ChannelSession::new(ChannelSpec::Erasure(ErasureSpec::real(0.5).unwrap()), FeedbackMode::None, 2, 0).unwrap();
        let n = 1_000_000;
        let mut erased = 0;
        for _ in 0..n {
            // a zero input must stay distinguishable from an erasure
            match s.step(Input::Real(0.0)).unwrap() {
                Output::Erased => erased += 1,
                Output::Real(v) => assert_eq!(v, 0.0),
                o => panic!("unexpected {o:?}"),
            }
        }
        let frac = erased as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.002, "{frac}");
    }

    #[test]
    fn packet_alphabet_and_capacity() {
        let spec = ErasureSpec::packet(3, 0.25).unwrap();
        assert_eq!(spec.capacity(), 0.75 * 3.0);
        let mut s = ChannelSession::new(ChannelSpec::Erasure(spec), FeedbackMode::None, 1, 0).unwrap();
        assert!(s.step(Input::Packet(8)).is_err());
        assert!(s.step(Input::Packet(7)).is_ok());
        assert!(ErasureSpec::real(1.5).is_err());
        for (l, d) in [(1u32, 0.2), (8, 0.5), (64, 0.0), (16, 1.0)] {
            assert_eq!(ErasureSpec::packet(l, d).unwrap().capacity(), (1.0 - d) * l as f64);
        }
    }

    #[test]
    fn feedback_view_index_arithmetic() {
        let mut s = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::identity(8)), FeedbackMode::UnitDelay, 1, 0).unwrap();
        assert!(s.feedback_view(0).unwrap().is_empty());
        for k in 1..=6 {
            s.step(Input::Symbol(k)).unwrap();
        }
        let v = s.feedback_view(5).unwrap();
        assert_eq!(v, (1..=4).map(Output::Symbol).collect::<Vec<_>>());
        assert_eq!(s.latest_feedback(5).unwrap(), Some(Output::Symbol(4)));

        let mut s = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::identity(8)), FeedbackMode::Delayed { theta: 2 }, 1, 0).unwrap();
        for k in 1..=6 {
            s.step(Input::Symbol(k)).unwrap();
        }
        assert_eq!(s.feedback_view(5).unwrap(), vec![Output::Symbol(1), Output::Symbol(2)]);

        let s = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::identity(2)), FeedbackMode::None, 1, 0).unwrap();
        assert_eq!(s.feedback_view(3), Err(Error::FeedbackDisabled));
    }

    #[test]
    fn feedback_is_prefix_of_log() {
        let mut s = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::bsc(0.3).unwrap()), FeedbackMode::UnitDelay, 5, 0).unwrap();
        for t in 1..=200u64 {
            let fb = s.feedback_view(t).unwrap();
            let logged: Vec<Output> = s.log().map(|(_, b)| *b).collect();
            assert_eq!(fb.as_slice(), &logged[..(t - 1) as usize]);
            s.step(Input::Symbol((t % 2) as usize)).unwrap();
        }
    }

    #[test]
    fn memoryless_given_previous_input() {
        let d = DmcSpec::new(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]]).unwrap();
        let mut s = ChannelSession::new(ChannelSpec::Dmc(d), FeedbackMode::None, 11, 0).unwrap();
        let mut pick = rng::stream(11, Tag::Bits, 0);
        // counts[prev][cur][out]
        let mut counts = [[[0u64; 3]; 2]; 2];
        let mut prev = 0usize;
        for _ in 0..1_000_000 {
            let cur = pick.random_range(0..2usize);
            let Output::Symbol(b) = s.step(Input::Symbol(cur)).unwrap() else { unreachable!() };
            counts[prev][cur][b] += 1;
            prev = cur;
        }
        for cur in 0..2 {
            let mut chi2 = 0.0;
            let tot: Vec<f64> = (0..3).map(|b| (counts[0][cur][b] + counts[1][cur][b]) as f64).collect();
            let n: f64 = tot.iter().sum();
            for prev in 0..2 {
                let rn: f64 = counts[prev][cur].iter().sum::<u64>() as f64;
                for b in 0..3 {
                    let e = rn * tot[b] / n;
                    chi2 += (counts[prev][cur][b] as f64 - e).powi(2) / e;
                }
            }
            let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(chi2);
            assert!(p > 0.001, "chi2 {chi2} p {p}");
        }
    }

    #[test]
    fn capacity_closed_forms() {
        for p in [0.0, 0.05, 0.11, 0.3] {
            let (c, q) = DmcSpec::bsc(p).unwrap().capacity();
            assert!((c - bsc_capacity(p)).abs() < 1e-9, "{p}: {c}");
            assert!((q[0] - 0.5).abs() < 1e-6);
        }
        let bec = DmcSpec::new(vec![vec![0.8, 0.2, 0.0], vec![0.0, 0.2, 0.8]]).unwrap();
        assert!((bec.capacity().0 - 0.8).abs() < 1e-9);
        // Z channel: known capacity log2(1 + (1-p) p^{p/(1-p)}) for p = 1/2
        let z = DmcSpec::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert!((z.capacity().0 - (1.25f64).log2()).abs() < 1e-9);
    }

    #[test]
    fn symmetry_detection() {
        assert!(DmcSpec::bsc(0.1).unwrap().is_symmetric());
        let five = DmcSpec::new(vec![vec![0.6, 0.15, 0.15, 0.1, 0.0], vec![0.0, 0.1, 0.15, 0.15, 0.6]]).unwrap();
        assert!(five.is_symmetric());
        let z = DmcSpec::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert!(!z.is_symmetric());
        assert_eq!(five.decisive_outputs(), vec![Some(0), None, None, None, Some(1)]);
    }

    #[test]
    fn awgn_power_tracking() {
        let spec = AwgnSpec::new(1.0, 0.5).unwrap();
        let mut s = ChannelSession::new(ChannelSpec::Awgn(spec), FeedbackMode::UnitDelay, 3, 0).unwrap();
        let mut noise = Welford::default();
        for _ in 0..100_000 {
            let Output::Real(y) = s.step(Input::Real(0.5)).unwrap() else { unreachable!() };
            noise.push(y - 0.5);
        }
        assert!((s.power().mean() - 0.25).abs() < 1e-12);
        assert!(!s.power_warning());
        assert!((noise.variance() - 0.5).abs() < 0.01);
        let mut s = ChannelSession::new(ChannelSpec::Awgn(spec), FeedbackMode::None, 3, 0).unwrap();
        for _ in 0..2000 {
            s.step(Input::Real(2.0)).unwrap();
        }
        assert!(s.power_warning());
    }

    #[test]
    fn dmc_from_csv() {
        let dir = std::env::temp_dir().join(format!("anystab-dmc-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        std::fs::write(&path, "0.9, 0.1\n0.2, 0.8\n").unwrap();
        let d = DmcSpec::from_csv(&path).unwrap();
        assert_eq!(d.prob(1, 0), 0.2);
        std::fs::write(&path, "0.9, 0.2\n").unwrap();
        assert!(DmcSpec::from_csv(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
