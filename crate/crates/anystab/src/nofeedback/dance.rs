//! Signaling channel outputs back to the observer through the plant.
//!
//! The controller adds `3Γ_u·c(B_t)` to its control, where `c` maps outputs
//! to integers, and takes the move back one step later. The observer sees
//! the move in `X_{t+1} − λX_t` and, knowing every earlier move and the
//! controller's intended control, rounds it to recover `B_t` exactly. With
//! the outputs recovered it runs the feedback stabilizer on the state with
//! the pending move removed. The controller runs that stabilizer's decoder
//! with at least one step of delay, so its intended control never depends
//! on the output it is about to signal.

use serde::Serialize;

use crate::channels::{ChannelSession, ChannelSpec, DmcSpec, FeedbackMode, Input, Output};
use crate::control::{Controller, Observer};
use crate::error::{invalid, Error, Result};
use crate::feedback::{run_feedback_loop, FbController, FbObserver, FbParams, Link};
use crate::model::{DisturbanceSource, PlantParams, PlantState};
use crate::rate::Rate;
use crate::rng::{open_unit, stream, Tag};

#[derive(Debug, Clone, PartialEq)]
pub struct DanceParams {
    /// Inner feedback stabilizer; its observation noise is the dance
    /// observation noise and its delay is at least one step.
    pub inner: FbParams,
    pub dmc: DmcSpec,
}

impl DanceParams {
    /// Observation noise is uniform on `(−Γ/2, Γ/2)`.
    pub fn new(lambda: f64, omega: f64, rate: Rate, gamma: f64, dmc: DmcSpec) -> Result<Self> {
        let inner = FbParams::new(lambda, omega, rate)?.with_noise(gamma, 0.0)?.with_delay(1);
        let p = Self { inner, dmc };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if self.inner.delay == 0 {
            return Err(invalid("delay", "the intended control must lag the outputs by a step"));
        }
        if self.inner.gamma_ctrl != 0.0 {
            return Err(invalid("gamma_ctrl", "control noise would hide the moves"));
        }
        Link::for_channel(&ChannelSpec::Dmc(self.dmc.clone()))?;
        Ok(())
    }

    /// `Γ_u = Ω + (λ+1)Γ`.
    pub fn gamma_u(&self) -> f64 {
        gamma_u(self.inner.lambda, self.inner.omega, self.inner.gamma_obs)
    }

    /// Move size `3Γ_u` per unit of output index.
    pub fn amplitude(&self) -> f64 {
        3.0 * self.gamma_u()
    }

    pub fn index(&self, b: usize) -> i64 {
        centered_index(b, self.dmc.outputs())
    }
}

pub fn gamma_u(lambda: f64, omega: f64, gamma: f64) -> f64 {
    omega + (lambda + 1.0) * gamma
}

/// Output `b` of `m` mapped to `b − ⌊m/2⌋`.
pub fn centered_index(b: usize, m: usize) -> i64 {
    b as i64 - (m / 2) as i64
}

/// Checks `P(|c(B)| ≥ i | a) ≤ K i^{−β}` for every input `a` and every
/// `i ≥ 1`, and that `β > η` so the moves keep an `η`-moment.
pub fn validate_tail(dmc: &DmcSpec, k: f64, beta: f64, eta: f64) -> Result<()> {
    if !(beta > eta) {
        return Err(Error::Incompatible(format!("output tail exponent {beta} must exceed η = {eta}")));
    }
    let m = dmc.outputs();
    let max_index = (0..m).map(|b| centered_index(b, m).unsigned_abs()).max().unwrap_or(0);
    for a in 0..dmc.inputs() {
        for i in 1..=max_index {
            let p: f64 = (0..m)
                .filter(|&b| centered_index(b, m).unsigned_abs() >= i)
                .map(|b| dmc.prob(a, b))
                .sum();
            let bound = k * (i as f64).powf(-beta);
            if p > bound {
                return Err(Error::Incompatible(format!(
                    "P(|B| ≥ {i} | input {a}) = {p} exceeds K i^(−β) = {bound}"
                )));
            }
        }
    }
    Ok(())
}

/// Smallest `K` making the tail law hold with exponent `β` on a finite
/// alphabet.
pub fn tail_constant(dmc: &DmcSpec, beta: f64) -> f64 {
    let m = dmc.outputs();
    (1..=m as u64)
        .map(|i| {
            let worst = (0..dmc.inputs())
                .map(|a| {
                    (0..m)
                        .filter(|&b| centered_index(b, m).unsigned_abs() >= i)
                        .map(|b| dmc.prob(a, b))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            worst * (i as f64).powf(beta)
        })
        .fold(0.0, f64::max)
}

/// Adds the moves to the inner controller's controls.
#[derive(Debug, Clone)]
pub struct DanceController {
    inner: FbController,
    amp: f64,
    lambda: f64,
    outputs: usize,
    prev: i64,
    last_intended: f64,
}

impl DanceController {
    pub fn new(params: &DanceParams) -> Result<Self> {
        params.validate()?;
        let link = Link::for_channel(&ChannelSpec::Dmc(params.dmc.clone()))?;
        Ok(Self {
            inner: FbController::new(params.inner, link)?,
            amp: params.amplitude(),
            lambda: params.inner.lambda,
            outputs: params.dmc.outputs(),
            prev: 0,
            last_intended: 0.0,
        })
    }

    /// The inner controller's `U_t` at the last step.
    pub fn last_intended(&self) -> f64 {
        self.last_intended
    }
}

impl Controller for DanceController {
    fn act(&mut self, t: u64, b: &Output) -> Result<f64> {
        let Output::Symbol(s) = b else {
            return Err(Error::Incompatible("moves need DMC outputs".into()));
        };
        let u = self.inner.act(t, b)?;
        let c = centered_index(*s, self.outputs);
        let applied = u + self.amp * c as f64 - self.lambda * self.amp * self.prev as f64;
        self.prev = c;
        self.last_intended = u;
        Ok(applied)
    }
}

/// Recovers each output from the plant and feeds it to the inner observer.
#[derive(Debug, Clone)]
pub struct DanceObserver {
    inner: FbObserver,
    /// Tracks the controller to predict its intended control.
    mirror: FbController,
    amp: f64,
    lambda: f64,
    outputs: usize,
    gamma_u: f64,
    prev_y: f64,
    /// Index recovered for the output two steps back.
    prev_c: i64,
    last: Option<Recovery>,
}

/// One recovered output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recovery {
    pub t: u64,
    pub b: usize,
    /// Move-free part of `X_{t+1} − λX_t`: disturbance plus noise.
    pub residual: f64,
}

impl DanceObserver {
    pub fn new(params: &DanceParams) -> Result<Self> {
        params.validate()?;
        let link = Link::for_channel(&ChannelSpec::Dmc(params.dmc.clone()))?;
        Ok(Self {
            inner: FbObserver::new(params.inner, link.clone())?,
            mirror: FbController::new(params.inner, link)?,
            amp: params.amplitude(),
            lambda: params.inner.lambda,
            outputs: params.dmc.outputs(),
            gamma_u: params.gamma_u(),
            prev_y: 0.0,
            prev_c: 0,
            last: None,
        })
    }

    /// Output recovered at the last emission (none at `t = 0`).
    pub fn last_recovery(&self) -> Option<Recovery> {
        self.last
    }

    fn recover(&mut self, t: u64, y: f64) -> Result<Recovery> {
        // the intended control of step t−1 does not depend on B_{t−1}
        let intended = self.mirror.clone().act(t - 1, &Output::Erased)?;
        let r = (y - self.lambda * self.prev_y) - intended + self.lambda * self.amp * self.prev_c as f64;
        let c = (r / self.amp).round();
        let residual = r - c * self.amp;
        let b = c as i64 + (self.outputs / 2) as i64;
        if residual.abs() > self.gamma_u || !(0..self.outputs as i64).contains(&b) {
            return Err(Error::DanceDecode { t: t - 1, residual });
        }
        let u = self.mirror.act(t - 1, &Output::Symbol(b as usize))?;
        if u != intended {
            return Err(Error::ControllerDesync {
                t: t - 1,
                enc: intended,
                dec: u,
            });
        }
        self.prev_c = c as i64;
        Ok(Recovery {
            t: t - 1,
            b: b as usize,
            residual,
        })
    }
}

impl Observer for DanceObserver {
    fn emit(&mut self, t: u64, y: f64, _feedback: Option<&Output>) -> Result<Input> {
        let fb = if t == 0 {
            self.last = None;
            None
        } else {
            let rec = self.recover(t, y)?;
            self.last = Some(rec);
            Some(Output::Symbol(rec.b))
        };
        self.prev_y = y;
        let pending_move = self.amp * self.prev_c as f64;
        self.inner.emit(t, y - pending_move, fb.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DanceStep {
    pub t: u64,
    pub x: f64,
    /// `X_t` with the pending move removed.
    pub x_virtual: f64,
    pub input: Input,
    /// `B_{t−1}` and what the observer recovered for it.
    pub recovered: Option<(usize, Recovery)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DanceSummary {
    pub steps: u64,
    pub recoveries: u64,
    pub recovery_failures: u64,
    pub max_abs_residual: f64,
    pub max_abs_x: f64,
    /// Steps where the physical update and the move-free one disagreed
    /// beyond rounding.
    pub physics_mismatches: u64,
}

/// Runs the scheme with no feedback link from `X_0 = 0`.
///
/// The plant is integrated in move-free coordinates, `X'_{t+1} = λX'_t +
/// U_t + W_t` with `X_t = X'_t + 3Γ_u·c(B_{t−1})`, using the same floating
/// point operations as [`run_feedback_loop`]. Both loops have identical
/// controls, so any rounding difference between them would grow like `λ^t`
/// and eventually flip a quantizer decision; this way they stay in step.
/// Each step also checks that the applied control moves the physical state
/// `λX_t + U'_t + W_t` onto the same point, up to rounding.
pub fn run_dance_loop(
    params: &DanceParams,
    disturbance: &mut DisturbanceSource,
    horizon: u64,
    seed: u64,
    trial: u64,
    mut on_step: impl FnMut(&DanceStep),
) -> Result<DanceSummary> {
    let mut observer = DanceObserver::new(params)?;
    let mut controller = DanceController::new(params)?;
    let mut channel = ChannelSession::new(ChannelSpec::Dmc(params.dmc.clone()), FeedbackMode::None, seed, trial)?;
    let plant = PlantParams::new(params.inner.lambda, params.inner.omega)?;
    let mut virt = PlantState::new(&plant);
    let mut obs_rng = stream(seed, Tag::ObsNoise, trial);
    let gamma = params.inner.gamma_obs;
    let lam = params.inner.lambda;
    let amp = params.amplitude();

    let mut summary = DanceSummary::default();
    let mut prev_b: Option<usize> = None;
    for t in 0..horizon {
        let pending = amp * prev_b.map_or(0, |b| params.index(b)) as f64;
        let x = virt.x + pending;
        let n = if gamma > 0.0 { gamma * (open_unit(&mut obs_rng) - 0.5) } else { 0.0 };
        let a = observer.emit(t, (virt.x + n) + pending, None)?;
        let recovered = match (prev_b, observer.last_recovery()) {
            (Some(b), Some(r)) => {
                summary.recoveries += 1;
                if r.b != b {
                    summary.recovery_failures += 1;
                }
                summary.max_abs_residual = summary.max_abs_residual.max(r.residual.abs());
                Some((b, r))
            }
            _ => None,
        };
        summary.max_abs_x = summary.max_abs_x.max(x.abs());
        on_step(&DanceStep {
            t,
            x,
            x_virtual: virt.x,
            input: a,
            recovered,
        });

        let b = channel.step(a)?;
        let applied = controller.act(t, &b)?;
        let w = disturbance.sample(&virt)?;
        let physical = lam * x + applied + w;
        virt.advance(&plant, controller.last_intended(), w)?;
        prev_b = match b {
            Output::Symbol(s) => Some(s),
            _ => None,
        };
        let next = virt.x + amp * prev_b.map_or(0, |b| params.index(b)) as f64;
        if (physical - next).abs() > 1e-9 * (1.0 + next.abs()) {
            summary.physics_mismatches += 1;
        }
        summary.steps += 1;
    }
    Ok(summary)
}

/// The same stabilizer with an explicit unit-delay feedback link, same
/// seeds. Reports the channel input and state of every step.
pub fn run_explicit_twin(
    params: &DanceParams,
    disturbance: &mut DisturbanceSource,
    horizon: u64,
    seed: u64,
    trial: u64,
    mut on_step: impl FnMut(u64, Input, f64),
) -> Result<()> {
    let mut channel = ChannelSession::new(ChannelSpec::Dmc(params.dmc.clone()), FeedbackMode::UnitDelay, seed, trial)?
        .with_log_cap(4);
    run_feedback_loop(&params.inner, &mut channel, disturbance, horizon, seed, trial, |s| {
        on_step(s.t, s.input, s.x)
    })?;
    Ok(())
}
