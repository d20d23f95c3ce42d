use std::collections::VecDeque;

use super::controller::FbController;
use super::link::{Link, Sender};
use super::{FbParams, Window};
use crate::channels::{Input, Output};
use crate::control::{Controller, Observer};
use crate::error::{Error, Result};

/// Runs the virtual loop and sends virtual-control indices.
///
/// A mirror of the controller, fed the fed-back outputs, tells the observer
/// which virtual controls the plant has received, so it can subtract their
/// missing contribution from the observed state to recover `X̄_t`.
#[derive(Debug, Clone)]
pub struct FbObserver {
    params: FbParams,
    link: Link,
    window: Window,
    sender: Sender,
    mirror: FbController,
    /// `Ū_s` for `s ≥ base` not yet applied by the controller.
    pending: VecDeque<f64>,
    base: u64,
    next_t: u64,
    last_width: f64,
    last_offset: f64,
}

impl FbObserver {
    pub fn new(params: FbParams, link: Link) -> Result<Self> {
        let mirror = FbController::new(params, link.clone())?;
        Ok(Self {
            params,
            window: params.window(),
            sender: Sender::default(),
            mirror,
            link,
            pending: VecDeque::new(),
            base: 0,
            next_t: 0,
            last_width: params.delta,
            last_offset: 0.0,
        })
    }

    /// Index of the oldest virtual control not yet applied and the pending
    /// controls from there on.
    pub fn pending(&self) -> (u64, &VecDeque<f64>) {
        (self.base, &self.pending)
    }

    /// The last chosen `Ū_t`.
    pub fn last_control(&self) -> Option<f64> {
        self.pending.back().copied()
    }

    /// Window width `w_t` used at the last emission.
    pub fn last_width(&self) -> f64 {
        self.last_width
    }

    /// `X_t − X̄_t` at the last emission.
    pub fn last_offset(&self) -> f64 {
        self.last_offset
    }

    pub fn backlog_bits(&self) -> usize {
        self.sender.backlog()
    }

    fn offset(&self, t: u64) -> f64 {
        let lam = self.params.lambda;
        -self
            .pending
            .iter()
            .enumerate()
            .map(|(i, u)| lam.powi((t - 1 - (self.base + i as u64)) as i32) * u)
            .sum::<f64>()
    }
}

impl Observer for FbObserver {
    fn emit(&mut self, t: u64, y: f64, feedback: Option<&Output>) -> Result<Input> {
        if t != self.next_t {
            return Err(crate::error::invalid("t", format!("observer expected step {}, got {t}", self.next_t)));
        }
        self.next_t += 1;
        if t > 0 {
            let b = feedback.ok_or(Error::FeedbackDisabled)?;
            self.mirror.act(t - 1, b)?;
            self.sender.acknowledge(self.link.decode(b).is_some());
            while self.base < self.mirror.applied() {
                self.pending.pop_front();
                self.base += 1;
            }
        }
        let d = if self.pending.is_empty() { 0.0 } else { self.offset(t) };
        let estimate = y - d;
        let q = self.window.quantizer();
        let idx = q.index(self.params.lambda * estimate);
        let ubar = -q.center(idx);
        self.last_width = self.window.width();
        self.last_offset = d;
        self.sender.push(t, idx, self.window.code_bits());
        self.window.advance();
        self.pending.push_back(ubar);
        Ok(self.link.encode(self.sender.word(self.link.word_bits())))
    }
}
