//! Observer and controller interfaces and a plain closed-loop driver.
//!
//! Per step `t` the observer sees `X_t` (plus the previous channel output
//! when feedback is on) and emits `a_t`, the channel returns `B_t`, the
//! controller maps the outputs seen so far to `U_t`, and the plant moves to
//! `X_{t+1} = λX_t + U_t + W_t`.

use crate::channels::{ChannelSession, Input, Output};
use crate::error::Result;
use crate::model::{DisturbanceSource, PlantParams, PlantState};

pub trait Observer: Send {
    /// Channel input for time `t`. `feedback` is `B_{t-1}` when the channel
    /// has unit-delay output feedback.
    fn emit(&mut self, t: u64, x: f64, feedback: Option<&Output>) -> Result<Input>;
}

pub trait Controller: Send {
    /// Control `U_t` after receiving `B_t`.
    fn act(&mut self, t: u64, b: &Output) -> Result<f64>;
}

/// Builds identical controller copies, e.g. one for a plant and one for a
/// decoder that must reproduce its controls.
pub trait ControllerFactory {
    fn build(&self, shared_seed: Option<u64>) -> Result<Box<dyn Controller>>;

    /// Whether the controller draws random numbers, in which case every copy
    /// must be built from the same seed.
    fn randomized(&self) -> bool {
        false
    }
}

impl<F> ControllerFactory for F
where
    F: Fn(Option<u64>) -> Result<Box<dyn Controller>>,
{
    fn build(&self, shared_seed: Option<u64>) -> Result<Box<dyn Controller>> {
        self(shared_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopStep {
    pub t: u64,
    pub x: f64,
    pub a: Input,
    pub b: Output,
    pub u: f64,
    pub w: f64,
}

/// Runs `horizon` steps and reports each one to `on_step`. Returns the final
/// plant state.
pub fn simulate(
    params: &PlantParams,
    observer: &mut dyn Observer,
    controller: &mut dyn Controller,
    channel: &mut ChannelSession,
    disturbance: &mut DisturbanceSource,
    horizon: u64,
    mut on_step: impl FnMut(&LoopStep),
) -> Result<PlantState> {
    let feedback_on = channel.latest_feedback(1).is_ok();
    let mut state = PlantState::new(params);
    for t in 0..horizon {
        let fb = if feedback_on { channel.latest_feedback(t + 1)? } else { None };
        let x = state.x;
        let a = observer.emit(t, x, fb.as_ref())?;
        let b = channel.step(a)?;
        let u = controller.act(t, &b)?;
        let w = disturbance.sample(&state)?;
        state.advance(params, u, w)?;
        on_step(&LoopStep { t, x, a, b, u, w });
    }
    Ok(state)
}

/// Example 1: a noiseless one-bit link carrying the sign of the state.
#[derive(Debug, Clone, Copy, Default)]
pub struct SignObserver;

impl Observer for SignObserver {
    fn emit(&mut self, _t: u64, x: f64, _fb: Option<&Output>) -> Result<Input> {
        Ok(Input::Symbol(usize::from(x >= 0.0)))
    }
}

/// Pushes the state by `∓gain` according to the received sign bit.
#[derive(Debug, Clone, Copy)]
pub struct BangController {
    pub gain: f64,
}

impl Controller for BangController {
    fn act(&mut self, _t: u64, b: &Output) -> Result<f64> {
        Ok(match b {
            Output::Symbol(1) => -self.gain,
            Output::Symbol(_) => self.gain,
            _ => 0.0,
        })
    }
}
