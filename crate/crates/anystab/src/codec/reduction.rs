//! Anytime encoder/decoder built around a black-box stabilizer.
//!
//! The encoder simulates a plant whose disturbance carries the bits and
//! closes it with the given observer and a controller copy driven by
//! channel feedback. The plant splits as `X = X̃ + X̌` with `X̌` driven only
//! by the bit disturbances and `X̃` only by the controls. The decoder runs
//! its own controller copy on the received outputs, integrates `X̃` through
//! the undisturbed plant, and reads the bits out of `−X̃ = X̌ − X`.

use serde::Serialize;

use super::cantor::{BitStream, CantorEncoder, CantorParams};
use super::table::{error_depth, oldest_wrong, ErrorSample, EstimateTable};
use crate::channels::{ChannelSession, FeedbackMode, Input};
use crate::control::{ControllerFactory, Observer};
use crate::error::{invalid, Error, Result};
use crate::rate::Rate;

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionConfig {
    pub lambda: f64,
    pub omega: f64,
    pub code_rate: Rate,
    pub horizon: u64,
    pub shared_seed: Option<u64>,
    pub keep_table: bool,
    pub keep_inputs: bool,
}

/// Decode time `t` of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionStep {
    pub t: u64,
    /// Simulated plant state `X_t`.
    pub x: f64,
    pub oldest_wrong: Option<u64>,
    pub depth: Option<u64>,
    /// `λ^{t−j/R} γε₁/(1+ε₁)` for the oldest wrong bit `j`.
    pub threshold: Option<f64>,
    /// The error event, if any, lies inside `{|X_t| ≥ threshold}`.
    pub sound: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionTrace {
    pub params: CantorParams,
    pub steps: Vec<ReductionStep>,
    pub table: Option<EstimateTable>,
    pub inputs: Vec<Input>,
}

impl ReductionTrace {
    pub fn violations(&self) -> usize {
        self.steps.iter().filter(|s| !s.sound).count()
    }

    pub fn error_samples(&self, trial: u64) -> Vec<ErrorSample> {
        self.steps
            .iter()
            .map(|s| ErrorSample {
                trial,
                t: s.t,
                depth: s.depth,
            })
            .collect()
    }
}

/// Runs one trial of the reduction for `cfg.horizon` channel uses.
///
/// Float arithmetic limits the horizon to `λ^T ≤ 2^40`, beyond which the
/// newest bits can no longer be resolved against the size of `X̃`.
pub fn run_reduction(
    cfg: &ReductionConfig,
    bits: &BitStream,
    observer: &mut dyn Observer,
    controllers: &dyn ControllerFactory,
    channel: &mut ChannelSession,
) -> Result<ReductionTrace> {
    if channel.feedback_mode() != FeedbackMode::UnitDelay {
        return Err(Error::FeedbackDisabled);
    }
    if controllers.randomized() && cfg.shared_seed.is_none() {
        return Err(Error::MissingSharedSeed);
    }
    let params = CantorParams::new(cfg.lambda, cfg.omega, cfg.code_rate)?;
    if cfg.horizon > params.float_horizon() {
        return Err(invalid(
            "horizon",
            format!("float decoding supports at most {} steps at λ = {}", params.float_horizon(), cfg.lambda),
        ));
    }
    if bits.rate() != cfg.code_rate || !bits.covers(cfg.horizon) {
        return Err(invalid("bits", "stream rate or length does not match the configuration"));
    }
    let mut enc_ctrl = controllers.build(cfg.shared_seed)?;
    let mut dec_ctrl = controllers.build(cfg.shared_seed)?;
    let mut encoder = CantorEncoder::new(params, bits)?;
    let truth = bits.bits();

    let mut x = encoder.initial_state();
    let mut input = 0.0;
    let mut steps = Vec::with_capacity(cfg.horizon as usize + 1);
    let mut table = cfg.keep_table.then(|| EstimateTable::new(cfg.code_rate));
    let mut inputs = Vec::new();

    let mut record = |t: u64, x: f64, input: f64, table: &mut Option<EstimateTable>| -> Result<()> {
        let est = params.extract(input, t);
        let j = oldest_wrong(&est, truth);
        let threshold = j.map(|j| params.error_threshold(t, j));
        steps.push(ReductionStep {
            t,
            x,
            oldest_wrong: j,
            depth: j.map(|j| error_depth(cfg.code_rate, t, j)),
            threshold,
            sound: threshold.is_none_or(|th| x.abs() >= th),
        });
        if let Some(tab) = table {
            tab.push(est)?;
        }
        Ok(())
    };
    record(0, x, input, &mut table)?;

    for t in 0..cfg.horizon {
        let fb = channel.latest_feedback(t + 1)?;
        let a = observer.emit(t, x, fb.as_ref())?;
        if cfg.keep_inputs {
            inputs.push(a);
        }
        let b = channel.step(a)?;
        let u_enc = enc_ctrl.act(t, &b)?;
        let u_dec = dec_ctrl.act(t, &b)?;
        if u_enc.to_bits() != u_dec.to_bits() {
            return Err(Error::ControllerDesync {
                t,
                enc: u_enc,
                dec: u_dec,
            });
        }
        let w = encoder.step(bits)?;
        x = cfg.lambda * x + u_enc + w;
        input = cfg.lambda * input - u_dec;
        record(t + 1, x, input, &mut table)?;
    }
    Ok(ReductionTrace {
        params,
        steps,
        table,
        inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ChannelSpec, DmcSpec, ErasureSpec};
    use crate::control::{BangController, Controller, SignObserver};

    fn example_one(_seed: Option<u64>) -> Result<Box<dyn Controller>> {
        Ok(Box::new(BangController { gain: 1.5 }))
    }

    #[test]
    fn example_one_pair_decodes_old_bits_without_error() {
        let rate = Rate::new(1, 2).unwrap();
        let cfg = ReductionConfig {
            lambda: 1.5,
            omega: 1.0,
            code_rate: rate,
            horizon: 60,
            shared_seed: None,
            keep_table: true,
            keep_inputs: false,
        };
        let p = CantorParams::new(1.5, 1.0, rate).unwrap();
        // |X| ≤ 2 forces correct decoding once λ^{age} γε₁/(1+ε₁) > 2
        let safe_age = (2.0 / p.half_gap()).ln() / 1.5f64.ln();
        for trial in 0..20 {
            let bits = BitStream::random(rate, 60, 11, trial);
            let mut ch = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::identity(2)), FeedbackMode::UnitDelay, 11, trial)
                .unwrap()
                .with_log_cap(2);
            let tr = run_reduction(&cfg, &bits, &mut SignObserver, &example_one, &mut ch).unwrap();
            assert_eq!(tr.violations(), 0);
            for s in &tr.steps {
                assert!(s.x.abs() <= 2.0);
                if let Some(j) = s.oldest_wrong {
                    assert!(rate.age(s.t, j) < safe_age);
                }
            }
        }
    }

    #[test]
    fn refuses_without_feedback_or_shared_seed() {
        let rate = Rate::new(1, 2).unwrap();
        let cfg = ReductionConfig {
            lambda: 1.5,
            omega: 1.0,
            code_rate: rate,
            horizon: 10,
            shared_seed: None,
            keep_table: false,
            keep_inputs: false,
        };
        let bits = BitStream::random(rate, 10, 1, 0);
        let mut ch = ChannelSession::new(ChannelSpec::Erasure(ErasureSpec::packet(1, 0.1).unwrap()), FeedbackMode::None, 1, 0).unwrap();
        assert_eq!(
            run_reduction(&cfg, &bits, &mut SignObserver, &example_one, &mut ch).unwrap_err(),
            Error::FeedbackDisabled
        );

        struct Randomized;
        impl ControllerFactory for Randomized {
            fn build(&self, _s: Option<u64>) -> Result<Box<dyn Controller>> {
                Ok(Box::new(BangController { gain: 1.5 }))
            }
            fn randomized(&self) -> bool {
                true
            }
        }
        let mut ch = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::identity(2)), FeedbackMode::UnitDelay, 1, 0).unwrap();
        assert_eq!(
            run_reduction(&cfg, &bits, &mut SignObserver, &Randomized, &mut ch).unwrap_err(),
            Error::MissingSharedSeed
        );
    }
}
