//! Randomly labeled lattice quantizer with maximum-likelihood trellis
//! decoding at the controller.
//!
//! Every `n` steps the observer quantizes the state with the lattice and
//! sends an `n`-symbol label drawn iid for that (stage, bin). The controller
//! never sees the bin directly: it keeps the set of bin paths consistent
//! with the controls it applied and the disturbance bound, and picks the
//! path whose labels best explain the received symbols. Since labels depend
//! only on (stage, bin), the bin is a sufficient trellis state and Viterbi
//! gives the exact ML path.

use std::collections::HashMap;
use std::ops::RangeInclusive;

use rand::RngCore;
use serde::Serialize;

use super::lattice::{lattice_k, reachable_interval, LatticeQuantizer};
use crate::channels::{random_coding_exponent, ChannelSession, ChannelSpec, DmcSpec, FeedbackMode, Input, Output};
use crate::control::{Controller, Observer};
use crate::error::{invalid, Error, Result};
use crate::model::{DisturbanceSource, PlantParams, PlantState};
use crate::rng::{hash_unit, open_unit, stream, Tag};

/// One trellis stage: log-likelihoods of bins `first..first+len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub first: i64,
    pub loglik: Vec<f64>,
}

impl Layer {
    pub fn bins(&self) -> RangeInclusive<i64> {
        self.first..=self.first + self.loglik.len() as i64 - 1
    }

    fn get(&self, j: i64) -> Option<f64> {
        let i = j - self.first;
        (i >= 0 && (i as usize) < self.loglik.len()).then(|| self.loglik[i as usize])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlPath {
    pub bins: Vec<i64>,
    pub score: f64,
}

/// Viterbi over `layers`. Every bin of the first layer may start a path;
/// `succ(k, j)` lists the bins stage `k + 1` can reach from bin `j` of
/// stage `k`. Bins of zero likelihood are impossible; `None` means no path
/// of positive likelihood exists. Ties go to the smaller predecessor and the
/// smaller terminal.
pub fn viterbi(layers: &[Layer], succ: impl Fn(usize, i64) -> RangeInclusive<i64>) -> Option<MlPath> {
    let first = layers.first()?;
    let possible = |v: f64| (v > f64::NEG_INFINITY).then_some(v);
    let mut score: Vec<Option<f64>> = first.loglik.iter().map(|v| possible(*v)).collect();
    let mut back: Vec<Vec<i64>> = Vec::with_capacity(layers.len());
    for k in 0..layers.len() - 1 {
        let (cur, next) = (&layers[k], &layers[k + 1]);
        let mut ns: Vec<Option<f64>> = vec![None; next.loglik.len()];
        let mut nb = vec![0i64; next.loglik.len()];
        for (i, s) in score.iter().enumerate() {
            let Some(s) = s else { continue };
            let j = cur.first + i as i64;
            for jn in succ(k, j) {
                let Some(ll) = next.get(jn).and_then(possible) else { continue };
                let idx = (jn - next.first) as usize;
                let cand = s + ll;
                if ns[idx].is_none_or(|best| cand > best) {
                    ns[idx] = Some(cand);
                    nb[idx] = j;
                }
            }
        }
        score = ns;
        back.push(nb);
    }

    let last = layers.last().unwrap();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in score.iter().enumerate() {
        if let Some(s) = s {
            if best.is_none_or(|(_, b)| *s > b) {
                best = Some((i, *s));
            }
        }
    }
    let (mut i, score) = best?;
    let mut bins = vec![last.first + i as i64];
    for k in (0..back.len()).rev() {
        let j = back[k][i];
        bins.push(j);
        i = (j - layers[k].first) as usize;
    }
    bins.reverse();
    Some(MlPath { bins, score })
}

/// Exhaustive ML over all paths, with the same tie-breaking as
/// [`viterbi`]: among maximal paths, the one that is smallest when compared
/// from the last stage backwards.
pub fn brute_force_ml(layers: &[Layer], succ: impl Fn(usize, i64) -> RangeInclusive<i64>) -> Option<MlPath> {
    fn walk(
        layers: &[Layer],
        succ: &dyn Fn(usize, i64) -> RangeInclusive<i64>,
        path: &mut Vec<i64>,
        score: f64,
        best: &mut Option<MlPath>,
    ) {
        let k = path.len() - 1;
        if k + 1 == layers.len() {
            let better = match best {
                None => true,
                Some(b) => score > b.score || (score == b.score && path.iter().rev().lt(b.bins.iter().rev())),
            };
            if better {
                *best = Some(MlPath {
                    bins: path.clone(),
                    score,
                });
            }
            return;
        }
        for jn in succ(k, path[k]) {
            if let Some(ll) = layers[k + 1].get(jn).filter(|v| *v > f64::NEG_INFINITY) {
                path.push(jn);
                walk(layers, succ, path, score + ll, best);
                path.pop();
            }
        }
    }
    let mut best = None;
    for j in layers.first()?.bins() {
        let ll = layers[0].get(j).unwrap();
        if ll == f64::NEG_INFINITY {
            continue;
        }
        walk(layers, &succ, &mut vec![j], ll, &mut best);
    }
    best
}

/// Scheme parameters. `rate` is the label rate in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrellisParams {
    pub lambda: f64,
    pub omega: f64,
    pub delta: f64,
    pub gamma: f64,
    pub rate: f64,
    /// Block length; the smallest admissible one when `None`.
    pub block: Option<u32>,
    /// Stages of the trellis kept open behind the current one. The open
    /// part holds about `Kλ^{n·window}` bins per stage.
    pub window: u32,
}

impl TrellisParams {
    pub fn new(lambda: f64, omega: f64, delta: f64, rate: f64) -> Self {
        Self {
            lambda,
            omega,
            delta,
            gamma: 0.0,
            rate,
            block: None,
            window: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        PlantParams::new(self.lambda, self.omega)?;
        LatticeQuantizer::new(self.delta)?;
        if !(self.gamma >= 0.0) || self.delta <= 2.0 * self.gamma {
            return Err(Error::NoiseTooLarge {
                delta: self.delta,
                gamma: self.gamma,
            });
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(invalid("rate", "must be positive"));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be at least one stage"));
        }
        Ok(())
    }

    pub fn k(&self) -> Result<f64> {
        lattice_k(self.lambda, self.delta, self.omega)
    }

    /// `K' = 2ΔK`.
    pub fn k_prime(&self) -> Result<f64> {
        Ok(2.0 * self.delta * self.k()?)
    }

    /// Smallest `n` with `2^{nR} > Kλⁿ`.
    pub fn min_block(&self) -> Result<u32> {
        let k = self.k()?;
        let log2_lambda = self.lambda.log2();
        if self.rate <= log2_lambda {
            return Err(Error::RateTooLow {
                rate: self.rate,
                log2_lambda,
            });
        }
        let n = (k.log2() / (self.rate - log2_lambda)).floor() as u32 + 1;
        // guard against rounding at the boundary
        Ok((n.saturating_sub(1).max(1)..=n + 1)
            .find(|&m| self.branching(m) > self.needed(m, k))
            .expect("the closed-form choice satisfies the inequality"))
    }

    fn branching(&self, n: u32) -> f64 {
        (n as f64 * self.rate).exp2()
    }

    fn needed(&self, n: u32, k: f64) -> f64 {
        k * self.lambda.powi(n as i32)
    }

    /// The block length in use, checked against `2^{nR} > Kλⁿ`.
    pub fn block_len(&self) -> Result<u32> {
        let n = match self.block {
            Some(n) if n > 0 => n,
            Some(_) => return Err(invalid("block", "must be positive")),
            None => self.min_block()?,
        };
        let k = self.k()?;
        if self.branching(n) <= self.needed(n, k) {
            return Err(Error::LabelPrecondition {
                branching: self.branching(n),
                needed: self.needed(n, k),
            });
        }
        Ok(n)
    }

    /// Half-width `(Ω/2)(λⁿ − 1)/(λ − 1)` of the disturbance spread over a block.
    pub fn spread(&self, n: u32) -> f64 {
        self.omega / 2.0 * (self.lambda.powi(n as i32) - 1.0) / (self.lambda - 1.0)
    }
}

/// Per-(stage, bin) labels drawn iid from `q`, regenerated on demand from
/// a shared seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    seed: u64,
    n: u32,
    cdf: Vec<f64>,
}

impl Labels {
    pub fn new(seed: u64, n: u32, q: &[f64]) -> Result<Self> {
        if q.is_empty() || q.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid("q", "must be a probability vector"));
        }
        let total: f64 = q.iter().sum();
        let mut acc = 0.0;
        let cdf = q
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        Ok(Self { seed, n, cdf })
    }

    pub fn symbol(&self, stage: u64, bin: i64, i: u32) -> usize {
        let u = hash_unit(&[self.seed, stage, bin as u64, i as u64]);
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1)
    }

    pub fn label(&self, stage: u64, bin: i64) -> Vec<usize> {
        (0..self.n).map(|i| self.symbol(stage, bin, i)).collect()
    }
}

/// Observer: samples the state every `n` steps and sends the label of the
/// assigned bin over the following `n` channel uses.
#[derive(Debug, Clone)]
pub struct TrellisObserver {
    quantizer: LatticeQuantizer,
    gamma: f64,
    labels: Labels,
    n: u32,
    current: Vec<usize>,
    /// Assigned bin of every stage so far.
    bins: Vec<i64>,
}

impl TrellisObserver {
    pub fn new(params: &TrellisParams, labels: Labels) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            quantizer: LatticeQuantizer::new(params.delta)?,
            gamma: params.gamma,
            n: params.block_len()?,
            labels,
            current: Vec::new(),
            bins: Vec::new(),
        })
    }

    pub fn bins(&self) -> &[i64] {
        &self.bins
    }
}

impl Observer for TrellisObserver {
    fn emit(&mut self, t: u64, y: f64, _feedback: Option<&Output>) -> Result<Input> {
        let (k, i) = (t / self.n as u64, (t % self.n as u64) as u32);
        if i == 0 {
            let j = self.quantizer.assign_noisy(y, self.gamma)?;
            self.bins.push(j);
            self.current = self.labels.label(k, j);
        }
        Ok(Input::Symbol(self.current[i as usize]))
    }
}

/// Outcome of one stage decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub stage: u64,
    pub bin: i64,
    pub control: f64,
}

/// Controller: at the end of each block finds the ML bin path over the last
/// `window` stages (anchored at the path committed earlier) and drives the
/// center of the ML bin to zero.
#[derive(Debug, Clone)]
pub struct TrellisController {
    quantizer: LatticeQuantizer,
    lambda: f64,
    omega: f64,
    gamma: f64,
    window: u64,
    n: u32,
    labels: Labels,
    /// `ln p(b | a)`, indexed `[a][b]`.
    logp: Vec<Vec<f64>>,
    outputs: Vec<usize>,
    /// Control applied at the end of each decided stage.
    controls: Vec<f64>,
    /// Current best bin path, one entry per decided stage.
    path: Vec<i64>,
    emissions: HashMap<(u64, i64), f64>,
    next_t: u64,
    last: Option<Decision>,
}

impl TrellisController {
    pub fn new(params: &TrellisParams, dmc: &DmcSpec, labels: Labels) -> Result<Self> {
        params.validate()?;
        let logp = dmc.matrix().iter().map(|row| row.iter().map(|p| p.ln()).collect()).collect();
        Ok(Self {
            quantizer: LatticeQuantizer::new(params.delta)?,
            lambda: params.lambda,
            omega: params.omega,
            gamma: params.gamma,
            window: params.window as u64,
            n: params.block_len()?,
            labels,
            logp,
            outputs: Vec::new(),
            controls: Vec::new(),
            path: Vec::new(),
            emissions: HashMap::new(),
            next_t: 0,
            last: None,
        })
    }

    /// Current ML path, one bin per decided stage.
    pub fn path(&self) -> &[i64] {
        &self.path
    }

    pub fn last_decision(&self) -> Option<Decision> {
        self.last
    }

    fn emission(&mut self, stage: u64, bin: i64) -> f64 {
        if let Some(v) = self.emissions.get(&(stage, bin)) {
            return *v;
        }
        let base = (stage * self.n as u64) as usize;
        let v = (0..self.n)
            .map(|i| self.logp[self.labels.symbol(stage, bin, i)][self.outputs[base + i as usize]])
            .sum();
        self.emissions.insert((stage, bin), v);
        v
    }

    /// Bins stage `k + 1` can be assigned from bin `j` at stage `k`.
    fn successors(&self, k: u64, j: i64) -> RangeInclusive<i64> {
        let (lo, hi) = self.quantizer.bin(j);
        let mut controls = vec![0.0; self.n as usize];
        controls[self.n as usize - 1] = self.controls[k as usize];
        let (a, b) = reachable_interval(self.lambda, self.omega, lo, hi, &controls);
        self.quantizer.assignable(a, b, self.gamma)
    }

    fn initial(&self) -> RangeInclusive<i64> {
        if self.gamma > 0.0 {
            self.quantizer.assignable(0.0, 0.0, self.gamma)
        } else {
            let j = self.quantizer.assign(0.0);
            j..=j
        }
    }

    fn decide(&mut self, k: u64) -> Decision {
        // a wrong anchor can leave no possible path; reopen further back
        let mut back = self.window;
        loop {
            let start = k.saturating_sub(back);
            if let Some(d) = self.search(k, start) {
                return d;
            }
            assert!(start > 0, "the true path has positive likelihood");
            back *= 2;
        }
    }

    fn search(&mut self, k: u64, start: u64) -> Option<Decision> {
        let mut ranges = vec![if start == 0 {
            self.initial()
        } else {
            let j = self.path[start as usize];
            j..=j
        }];
        for m in start..k {
            let prev = ranges.last().unwrap().clone();
            let lo = *self.successors(m, *prev.start()).start();
            let hi = *self.successors(m, *prev.end()).end();
            ranges.push(lo..=hi);
        }
        let layers: Vec<Layer> = ranges
            .iter()
            .enumerate()
            .map(|(i, r)| Layer {
                first: *r.start(),
                loglik: r.clone().map(|j| self.emission(start + i as u64, j)).collect(),
            })
            .collect();
        let ml = viterbi(&layers, |i, j| self.successors(start + i as u64, j))?;
        self.path.truncate(start as usize);
        self.path.extend_from_slice(&ml.bins);
        self.emissions.retain(|(s, _), _| *s + self.window >= k);

        let bin = *ml.bins.last().unwrap();
        let control = -self.lambda.powi(self.n as i32) * self.quantizer.center(bin);
        Some(Decision { stage: k, bin, control })
    }
}

impl Controller for TrellisController {
    fn act(&mut self, t: u64, b: &Output) -> Result<f64> {
        if t != self.next_t {
            return Err(invalid("t", format!("controller expected step {}, got {t}", self.next_t)));
        }
        self.next_t += 1;
        let Output::Symbol(s) = b else {
            return Err(Error::Incompatible("the trellis decoder needs DMC outputs".into()));
        };
        self.outputs.push(*s);
        if !(t + 1).is_multiple_of(self.n as u64) {
            return Ok(0.0);
        }
        let d = self.decide(t / self.n as u64);
        self.controls.push(d.control);
        self.last = Some(d);
        Ok(d.control)
    }
}

/// Per-stage diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: u64,
    pub true_bin: i64,
    pub ml_bin: i64,
    /// Stages since the ML path last agreed with the true bin path; 0 when
    /// the current bin is right, `stage + 1` when no stage agrees.
    pub error_depth: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrellisStep {
    pub t: u64,
    pub x: f64,
    pub stage: Option<StageRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrellisSummary {
    pub steps: u64,
    pub stages: u64,
    /// `depth_counts[d]` = number of stages decided with error depth `d`.
    pub depth_counts: Vec<u64>,
    /// Stage ends where `|X| > K'λ^{(d+1)n}`.
    pub bound_violations: u64,
    /// Samples whose assigned bin missed the true state.
    pub containment_violations: u64,
    /// Decisions whose error reached back past the open window.
    pub window_overruns: u64,
    pub max_abs_x: f64,
}

/// The scheme over a DMC: block length, label distribution, exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct TrellisSetup {
    pub params: TrellisParams,
    pub dmc: DmcSpec,
    pub n: u32,
    pub q: Vec<f64>,
    /// `E_r(R)` in bits per channel use.
    pub exponent: f64,
}

impl TrellisSetup {
    pub fn new(params: TrellisParams, dmc: DmcSpec) -> Result<Self> {
        params.validate()?;
        let n = params.block_len()?;
        let e = random_coding_exponent(&dmc, params.rate)?;
        Ok(Self {
            params,
            dmc,
            n,
            q: e.q,
            exponent: e.value,
        })
    }

    /// Upper bound `2^{−d n E_r(R)}` on the chance of an error of depth `d`.
    pub fn depth_bound(&self, d: u64) -> f64 {
        (-(d as f64) * self.n as f64 * self.exponent).exp2()
    }

    /// Partial sum of `Σ_d 2^{−dnE_r}(K'λ^{(d+1)n})^η` over `d < terms`; the
    /// terms shrink geometrically when `E_r(R) > η log₂λ`.
    pub fn moment_series(&self, eta: f64, terms: u32) -> Result<f64> {
        let kp = self.params.k_prime()?;
        let lam_n = self.params.lambda.powi(self.n as i32);
        Ok((0..terms)
            .map(|d| self.depth_bound(d as u64) * (kp * lam_n.powi(d as i32 + 1)).powf(eta))
            .sum())
    }

    pub fn observer(&self, shared_seed: u64) -> Result<TrellisObserver> {
        TrellisObserver::new(&self.params, Labels::new(shared_seed, self.n, &self.q)?)
    }

    pub fn controller(&self, shared_seed: u64) -> Result<TrellisController> {
        TrellisController::new(&self.params, &self.dmc, Labels::new(shared_seed, self.n, &self.q)?)
    }
}

/// Runs the scheme for `horizon` steps from `X_0 = 0`, checking bin
/// containment and the depth-dependent state bound against the true path.
pub fn run_trellis_loop(
    setup: &TrellisSetup,
    disturbance: &mut DisturbanceSource,
    horizon: u64,
    seed: u64,
    trial: u64,
    mut on_step: impl FnMut(&TrellisStep),
) -> Result<TrellisSummary> {
    let p = &setup.params;
    let n = setup.n as u64;
    let shared = stream(seed, Tag::Labels, trial).next_u64();
    let mut observer = setup.observer(shared)?;
    let mut controller = setup.controller(shared)?;
    let mut channel = ChannelSession::new(ChannelSpec::Dmc(setup.dmc.clone()), FeedbackMode::None, seed, trial)?;
    let plant = PlantParams::new(p.lambda, p.omega)?;
    let quantizer = LatticeQuantizer::new(p.delta)?;
    let mut state = PlantState::new(&plant);
    let mut noise = stream(seed, Tag::ObsNoise, trial);
    let k_prime = p.k_prime()?;
    let lam_n = p.lambda.powi(setup.n as i32);

    let mut summary = TrellisSummary::default();
    let mut bound_due: Option<f64> = None;
    for t in 0..horizon {
        let x = state.x;
        if t % n == 0 {
            if let Some(bound) = bound_due.take() {
                if x.abs() > bound {
                    summary.bound_violations += 1;
                }
            }
        }
        let y = if p.gamma > 0.0 {
            x + p.gamma * (open_unit(&mut noise) - 0.5)
        } else {
            x
        };
        let a = observer.emit(t, y, None)?;
        if t % n == 0 && !quantizer.contains(*observer.bins().last().unwrap(), x) {
            summary.containment_violations += 1;
        }
        let b = channel.step(a)?;
        let u = controller.act(t, &b)?;

        let mut record = None;
        if (t + 1) % n == 0 {
            let d = controller.last_decision().expect("a stage just ended");
            let depth = error_depth(controller.path(), observer.bins());
            if depth > p.window as u64 {
                summary.window_overruns += 1;
            }
            if summary.depth_counts.len() <= depth as usize {
                summary.depth_counts.resize(depth as usize + 1, 0);
            }
            summary.depth_counts[depth as usize] += 1;
            summary.stages += 1;
            bound_due = Some(k_prime * lam_n.powi(depth as i32 + 1));
            record = Some(StageRecord {
                stage: d.stage,
                true_bin: observer.bins()[d.stage as usize],
                ml_bin: d.bin,
                error_depth: depth,
            });
        }
        summary.max_abs_x = summary.max_abs_x.max(x.abs());
        on_step(&TrellisStep { t, x, stage: record });

        let w = disturbance.sample(&state)?;
        state.advance(&plant, u, w)?;
        summary.steps += 1;
    }
    Ok(summary)
}

/// Stages back to the last agreement between `path` and `truth`.
fn error_depth(path: &[i64], truth: &[i64]) -> u64 {
    let k = path.len();
    (0..k)
        .rev()
        .find(|&m| path[m] == truth[m])
        .map_or(k as u64, |m| (k - 1 - m) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DisturbanceKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(rng: &mut ChaCha8Rng) -> (Vec<Layer>, Vec<(i64, i64)>) {
        let stages = rng.random_range(1..=6);
        let mut layers = Vec::new();
        let mut shifts = Vec::new();
        for _ in 0..stages {
            let first = rng.random_range(-3..=3);
            let len = rng.random_range(1..=9);
            let loglik = (0..len)
                .map(|_| {
                    // coarse values make ties common
                    if rng.random_bool(0.1) {
                        f64::NEG_INFINITY
                    } else {
                        -(rng.random_range(0..6) as f64) * 0.5
                    }
                })
                .collect();
            layers.push(Layer { first, loglik });
            shifts.push((rng.random_range(-4..=2), rng.random_range(0..=3)));
        }
        (layers, shifts)
    }

    #[test]
    fn viterbi_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let (layers, shifts) = toy(&mut rng);
            let succ = |k: usize, j: i64| {
                let (s, w) = shifts[k];
                j + s..=j + s + w
            };
            assert_eq!(viterbi(&layers, succ), brute_force_ml(&layers, succ));
        }
    }

    #[test]
    fn viterbi_prefers_smaller_bins_on_ties() {
        let layers = vec![
            Layer {
                first: 0,
                loglik: vec![0.0, 0.0],
            },
            Layer {
                first: 0,
                loglik: vec![0.0, 0.0],
            },
        ];
        let p = viterbi(&layers, |_, _| 0..=1).unwrap();
        assert_eq!(p.bins, vec![0, 0]);
    }

    fn setup(gamma: f64) -> TrellisSetup {
        let mut p = TrellisParams::new(1.05, 0.0125, 1.0, 0.3);
        p.gamma = gamma;
        TrellisSetup::new(p, DmcSpec::bsc(0.05).unwrap()).unwrap()
    }

    #[test]
    fn minimal_block_length() {
        let s = setup(0.1);
        assert_eq!(s.n, 10);
        let k = s.params.k().unwrap();
        assert!((k - 4.5).abs() < 1e-12);
        let mut short = s.params;
        short.block = Some(9);
        assert!(matches!(short.block_len(), Err(Error::LabelPrecondition { .. })));
        let slow = TrellisParams::new(2.0, 1.0, 4.0, 0.9);
        assert!(matches!(slow.min_block(), Err(Error::RateTooLow { .. })));
    }

    #[test]
    fn labels_are_shared_and_follow_q() {
        let a = Labels::new(5, 10, &[0.3, 0.7]).unwrap();
        let b = Labels::new(5, 10, &[0.3, 0.7]).unwrap();
        let c = Labels::new(6, 10, &[0.3, 0.7]).unwrap();
        assert_eq!(a.label(3, -2), b.label(3, -2));
        assert_ne!((0..20).map(|j| a.label(1, j)).collect::<Vec<_>>(), (0..20).map(|j| c.label(1, j)).collect::<Vec<_>>());
        let ones = (0..20_000).map(|j| a.symbol(0, j, 0)).filter(|s| *s == 1).count();
        assert!((ones as f64 / 20_000.0 - 0.7).abs() < 0.02);
    }

    #[test]
    fn noiseless_channel_confuses_only_equal_labels() {
        let mut p = TrellisParams::new(1.2, 1.0, 2.0, 1.0);
        p.gamma = 0.5;
        p.window = 3;
        let s = TrellisSetup::new(p, DmcSpec::identity(4)).unwrap();
        for trial in 0..5 {
            let mut w = DisturbanceSource::new(DisturbanceKind::AdversarialRandom, p.omega, 3, trial);
            let labels = Labels::new(stream(3, Tag::Labels, trial).next_u64(), s.n, &s.q).unwrap();
            // a noiseless channel only confuses bins whose labels coincide
            let sum = run_trellis_loop(&s, &mut w, 2000, 3, trial, |st| {
                if let Some(r) = st.stage {
                    assert_eq!(labels.label(r.stage, r.true_bin), labels.label(r.stage, r.ml_bin));
                }
            })
            .unwrap();
            assert!(sum.depth_counts[0] as f64 > 0.9 * sum.stages as f64);
            assert_eq!((sum.bound_violations, sum.containment_violations), (0, 0));
        }
    }

    #[test]
    fn bsc_loop_respects_pathwise_bound() {
        let s = setup(0.1);
        for trial in 0..4 {
            let mut w = DisturbanceSource::new(DisturbanceKind::Uniform, s.params.omega, 8, trial);
            let sum = run_trellis_loop(&s, &mut w, 3000, 8, trial, |_| {}).unwrap();
            assert_eq!(sum.stages, 300);
            assert_eq!((sum.bound_violations, sum.containment_violations), (0, 0));
            assert!(sum.depth_counts[0] > 250);
        }
    }

    #[test]
    fn moment_series_converges_when_exponent_dominates() {
        let s = setup(0.1);
        assert!(s.exponent > s.params.lambda.log2());
        let a = s.moment_series(1.0, 200).unwrap();
        let b = s.moment_series(1.0, 400).unwrap();
        assert!(a.is_finite() && (b - a) / a < 1e-9);
    }

    #[test]
    fn error_depth_counts_back_to_agreement() {
        assert_eq!(error_depth(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(error_depth(&[1, 2, 4], &[1, 2, 3]), 1);
        assert_eq!(error_depth(&[1, 5, 4], &[1, 2, 3]), 2);
        assert_eq!(error_depth(&[0, 5, 4], &[1, 2, 3]), 3);
    }
}
