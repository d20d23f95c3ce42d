//! The scalar plant, disturbance generators, stability targets and the
//! sampled-time and blocked-time reductions.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    pub lambda: f64,
    pub omega: f64,
    #[serde(default)]
    pub x0: f64,
}

impl PlantParams {
    pub fn new(lambda: f64, omega: f64) -> Result<Self> {
        let p = Self {
            lambda,
            omega,
            x0: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid("lambda", format!("must be finite and > 0, got {}", self.lambda)));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(invalid("omega", format!("must be finite and >= 0, got {}", self.omega)));
        }
        if !self.x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        Ok(())
    }

    pub fn half_omega(&self) -> f64 {
        self.omega / 2.0
    }

    pub fn log2_lambda(&self) -> f64 {
        self.lambda.log2()
    }

    pub(crate) fn require_unstable(&self, op: &'static str) -> Result<()> {
        if self.lambda <= 1.0 {
            return Err(invalid("lambda", format!("{op} needs λ > 1, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// One recorded transition: the state before the step and the inputs applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub x: f64,
    pub u: f64,
    pub w: f64,
}

/// The update law with a fixed evaluation order, so replays are bitwise equal.
#[inline]
pub fn update(lambda: f64, x: f64, u: f64, w: f64) -> f64 {
    lambda * x + u + w
}

#[derive(Debug, Clone)]
pub struct History {
    cap: usize,
    first_t: u64,
    buf: VecDeque<Step>,
}

impl History {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            first_t: 0,
            buf: VecDeque::with_capacity(cap.clamp(1, 4096)),
        }
    }

    fn push(&mut self, s: Step) {
        if self.buf.len() == self.cap {
            self.buf.pop_front();
            self.first_t += 1;
        }
        self.buf.push_back(s);
    }

    /// Time index of the oldest retained step.
    pub fn first_t(&self) -> u64 {
        self.first_t
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Step> {
        self.buf.iter()
    }

    pub fn last(&self) -> Option<&Step> {
        self.buf.back()
    }
}

#[derive(Debug, Clone)]
pub struct PlantState {
    pub t: u64,
    pub x: f64,
    history: Option<History>,
}

impl PlantState {
    pub fn new(params: &PlantParams) -> Self {
        Self {
            t: 0,
            x: params.x0,
            history: None,
        }
    }

    pub fn with_history(params: &PlantParams, depth: usize) -> Self {
        Self {
            t: 0,
            x: params.x0,
            history: Some(History::new(depth)),
        }
    }

    pub fn history(&self) -> Option<&History> {
        self.history.as_ref()
    }

    /// Advances the plant in place and returns the new state.
    pub fn advance(&mut self, params: &PlantParams, u: f64, w: f64) -> Result<f64> {
        let h = params.half_omega();
        if !(w.abs() <= h) {
            return Err(Error::DisturbanceBound { w, half_omega: h });
        }
        if let Some(hist) = self.history.as_mut() {
            hist.push(Step { x: self.x, u, w });
        }
        self.x = update(params.lambda, self.x, u, w);
        self.t += 1;
        Ok(self.x)
    }
}

/// Functional form of [`PlantState::advance`].
pub fn step_plant(params: &PlantParams, state: &PlantState, u: f64, w: f64) -> Result<PlantState> {
    let mut next = state.clone();
    next.advance(params, u, w)?;
    Ok(next)
}

/// Replays recorded steps from the first step's pre-state.
pub fn replay<'a>(lambda: f64, steps: impl IntoIterator<Item = &'a Step>) -> Option<f64> {
    let mut it = steps.into_iter();
    let first = it.next()?;
    let mut x = update(lambda, first.x, first.u, first.w);
    for s in it {
        x = update(lambda, x, s.u, s.w);
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    Zero,
    Uniform,
    TwoPoint,
    /// A per-path random mix of worst-case style strategies.
    AdversarialRandom,
}

/// What an adversarial disturbance callback is allowed to see.
pub struct AdversaryView<'a> {
    pub t: u64,
    pub x: f64,
    pub half_omega: f64,
    pub history: Option<&'a History>,
}

pub trait Adversary: Send {
    fn next(&mut self, view: &AdversaryView<'_>) -> f64;
}

impl<F: FnMut(&AdversaryView<'_>) -> f64 + Send> Adversary for F {
    fn next(&mut self, view: &AdversaryView<'_>) -> f64 {
        self(view)
    }
}

#[derive(Debug, Clone, Copy)]
enum Strategy {
    Uniform,
    TwoPoint,
    AwayFromZero,
    TowardZero,
    Alternate,
    HoldHigh,
    HoldLow,
}

const STRATEGIES: [Strategy; 7] = [
    Strategy::Uniform,
    Strategy::TwoPoint,
    Strategy::AwayFromZero,
    Strategy::TowardZero,
    Strategy::Alternate,
    Strategy::HoldHigh,
    Strategy::HoldLow,
];

enum Source {
    Zero,
    Uniform,
    TwoPoint,
    Mixed(Strategy),
    Callback(Box<dyn Adversary>),
}

pub struct DisturbanceSource {
    half_omega: f64,
    source: Source,
    rng: ChaCha8Rng,
}

impl DisturbanceSource {
    pub fn new(kind: DisturbanceKind, omega: f64, seed: u64, trial: u64) -> Self {
        let mut rng = rng::stream(seed, Tag::Disturbance, trial);
        let source = match kind {
            DisturbanceKind::Zero => Source::Zero,
            DisturbanceKind::Uniform => Source::Uniform,
            DisturbanceKind::TwoPoint => Source::TwoPoint,
            DisturbanceKind::AdversarialRandom => {
                Source::Mixed(STRATEGIES[rng.random_range(0..STRATEGIES.len())])
            }
        };
        Self {
            half_omega: omega / 2.0,
            source,
            rng,
        }
    }

    pub fn callback(omega: f64, adversary: Box<dyn Adversary>) -> Self {
        Self {
            half_omega: omega / 2.0,
            source: Source::Callback(adversary),
            rng: rng::stream(0, Tag::Disturbance, 0),
        }
    }

    pub fn sample(&mut self, state: &PlantState) -> Result<f64> {
        let h = self.half_omega;
        let w = match &mut self.source {
            Source::Zero => 0.0,
            Source::Uniform => h * (2.0 * self.rng.random::<f64>() - 1.0),
            Source::TwoPoint => {
                if self.rng.random::<bool>() {
                    h
                } else {
                    -h
                }
            }
            Source::Mixed(strategy) => {
                if self.rng.random::<f64>() < 0.02 {
                    *strategy = STRATEGIES[self.rng.random_range(0..STRATEGIES.len())];
                }
                let sgn = if state.x >= 0.0 { 1.0 } else { -1.0 };
                match strategy {
                    Strategy::Uniform => h * (2.0 * self.rng.random::<f64>() - 1.0),
                    Strategy::TwoPoint => {
                        if self.rng.random::<bool>() {
                            h
                        } else {
                            -h
                        }
                    }
                    Strategy::AwayFromZero => sgn * h,
                    Strategy::TowardZero => -sgn * h,
                    Strategy::Alternate => {
                        if state.t.is_multiple_of(2) {
                            h
                        } else {
                            -h
                        }
                    }
                    Strategy::HoldHigh => h,
                    Strategy::HoldLow => -h,
                }
            }
            Source::Callback(adv) => adv.next(&AdversaryView {
                t: state.t,
                x: state.x,
                half_omega: h,
                history: state.history(),
            }),
        };
        if !(w.abs() <= h) {
            return Err(Error::DisturbanceBound { w, half_omega: h });
        }
        Ok(w)
    }
}

/// A nonincreasing bound `f(m)` on `P(|X_t| > m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TailFunction {
    /// `min(1, k m^{-beta})`
    Pareto { k: f64, beta: f64 },
    /// `min(1, 2 exp(-(m - c)^2 / (2 var)))` for `m > c`, else 1.
    Gaussian { c: f64, var: f64 },
    /// Piecewise-constant bound given at increasing `m`.
    Table { points: Vec<(f64, f64)> },
}

impl TailFunction {
    pub fn eval(&self, m: f64) -> f64 {
        match self {
            TailFunction::Pareto { k, beta } => (k * m.powf(-beta)).min(1.0),
            TailFunction::Gaussian { c, var } => {
                if m <= *c {
                    1.0
                } else {
                    (2.0 * (-(m - c).powi(2) / (2.0 * var)).exp()).min(1.0)
                }
            }
            TailFunction::Table { points } => points
                .iter()
                .take_while(|(mm, _)| *mm <= m)
                .last()
                .map_or(1.0, |(_, f)| *f),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TailFunction::Pareto { k, beta } if *k > 0.0 && *beta > 0.0 => Ok(()),
            TailFunction::Gaussian { c, var } if *c >= 0.0 && *var > 0.0 => Ok(()),
            TailFunction::Table { points } => {
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(invalid("tail.points", "m values must increase"));
                    }
                    if w[1].1 > w[0].1 {
                        return Err(invalid("tail.points", "f must be nonincreasing"));
                    }
                }
                Ok(())
            }
            _ => Err(invalid("tail", "parameters must be positive")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StabilityTarget {
    EtaMoment { eta: f64, k: f64 },
    Tail { f: TailFunction },
    AlmostSure,
}

impl StabilityTarget {
    pub fn validate(&self) -> Result<()> {
        match self {
            StabilityTarget::EtaMoment { eta, k } => {
                if !(*eta > 0.0) {
                    return Err(invalid("eta", "must be > 0"));
                }
                if !(*k > 0.0) {
                    return Err(invalid("k", "must be > 0"));
                }
                Ok(())
            }
            StabilityTarget::Tail { f } => f.validate(),
            StabilityTarget::AlmostSure => Ok(()),
        }
    }
}

/// Zero-order-hold sampling of `dX = (λX + U + W) dt` every `tau` seconds.
pub fn sample_continuous(lambda_ct: f64, omega_ct: f64, tau: f64) -> Result<PlantParams> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("tau", "must be > 0"));
    }
    let lambda = (lambda_ct * tau).exp();
    let omega = omega_ct * zoh_gain(lambda_ct, tau);
    PlantParams::new(lambda, omega)
}

/// `(e^{λτ} − 1)/λ`, the factor a constant input picks up over one sample
/// period; equals `τ` at `λ = 0`.
pub fn zoh_gain(lambda_ct: f64, tau: f64) -> f64 {
    if lambda_ct == 0.0 {
        tau
    } else {
        (lambda_ct * tau).exp_m1() / lambda_ct
    }
}

/// Parameters of the plant observed every `n` steps, with the control
/// applied only at the last step of each block.
pub fn block_time(params: &PlantParams, n: u32) -> Result<PlantParams> {
    if n == 0 {
        return Err(invalid("n", "block length must be >= 1"));
    }
    params.require_unstable("block_time")?;
    let ln = params.lambda.powi(n as i32);
    PlantParams::new(ln, ln * params.omega / (params.lambda - 1.0))
}

/// Maps an undisturbed plant with gain `lambda` onto a disturbed plant with
/// the larger gain `lambda_design`, so that a stabilizer for the latter
/// drives the former to zero geometrically.
///
/// With `r = λ'/λ` the design plant sees `X'_{t+1} = r^t X_t` and its
/// control `U'_{t+1}` is applied to the real plant as `U_t = r^{-(t+1)} U'_{t+1}`.
#[derive(Debug, Clone, Copy)]
pub struct AlmostSureMap {
    lambda: f64,
    lambda_design: f64,
    ratio: f64,
}

impl AlmostSureMap {
    pub fn new(lambda: f64, lambda_design: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("lambda", "must be > 0"));
        }
        if !(lambda < lambda_design) {
            return Err(invalid(
                "lambda_design",
                format!("must exceed λ = {lambda}, got {lambda_design}"),
            ));
        }
        Ok(Self {
            lambda,
            lambda_design,
            ratio: lambda_design / lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_design(&self) -> f64 {
        self.lambda_design
    }

    /// Design-plant state `X'_{t+1}` seen when the real plant is at `X_t`.
    pub fn design_state(&self, t: u64, x: f64) -> f64 {
        self.ratio.powi(t as i32) * x
    }

    /// Real control `U_t` from the design control `U'_{t+1}`.
    pub fn plant_control(&self, t: u64, u_design: f64) -> f64 {
        u_design / self.ratio.powi(t as i32 + 1)
    }

    /// Per-step contraction of the `eta`-th moment, `(λ/λ')^η`.
    pub fn decay_rate(&self, eta: f64) -> f64 {
        (self.lambda / self.lambda_design).powf(eta)
    }
}
