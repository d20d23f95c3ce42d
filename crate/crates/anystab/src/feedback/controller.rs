use std::collections::VecDeque;

use super::link::{Link, Receiver};
use super::{FbParams, Quantizer, Window};
use crate::channels::Output;
use crate::control::Controller;
use crate::error::{invalid, Result};

/// Decodes virtual-control indices from channel outputs and applies each
/// learned control, `v` steps after it settles, scaled by `λ^{t−s}`.
#[derive(Debug, Clone)]
pub struct FbController {
    params: FbParams,
    link: Link,
    window: Window,
    receiver: Receiver,
    /// Quantizers of symbols not yet decoded, oldest first.
    meta: VecDeque<(u64, Quantizer)>,
    /// Decoded symbols awaiting application: `(s, settled at, Ū_s)`.
    settled: VecDeque<(u64, u64, f64)>,
    applied: u64,
    next_t: u64,
}

impl FbController {
    pub fn new(params: FbParams, link: Link) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            link,
            window: params.window(),
            receiver: Receiver::default(),
            meta: VecDeque::new(),
            settled: VecDeque::new(),
            applied: 0,
            next_t: 0,
        })
    }

    /// Number of leading virtual controls already folded into `U`.
    pub fn applied(&self) -> u64 {
        self.applied
    }

    /// Symbols the decoder has not fully received.
    pub fn undecoded(&self) -> usize {
        self.meta.len()
    }

    fn settle(&mut self, s: u64, index: u64, at: u64) {
        let pos = self.meta.iter().position(|(m, _)| *m == s).expect("settled symbol was registered");
        let (_, q) = self.meta.remove(pos).unwrap();
        self.settled.push_back((s, at, -q.center(index)));
    }
}

impl Controller for FbController {
    fn act(&mut self, t: u64, b: &Output) -> Result<f64> {
        if t != self.next_t {
            return Err(invalid("t", format!("controller expected step {}, got {t}", self.next_t)));
        }
        self.next_t += 1;

        let q = self.window.quantizer();
        let c = self.window.code_bits();
        self.window.advance();
        self.meta.push_back((t, q));
        if let Some(idx) = self.receiver.expect(t, c) {
            self.settle(t, idx, t);
        }
        let bits = self.link.word_bits();
        if let Some(word) = self.link.decode(b) {
            for (s, idx) in self.receiver.receive(word, bits) {
                self.settle(s, idx, t);
            }
        }

        let mut u = 0.0;
        while let Some(&(s, at, ubar)) = self.settled.front() {
            if at + self.params.delay > t {
                break;
            }
            self.settled.pop_front();
            u += self.params.lambda.powi((t - s) as i32) * ubar;
            self.applied = s + 1;
        }
        Ok(u)
    }
}
