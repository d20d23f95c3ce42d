use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use super::controller::FbController;
use super::link::Link;
use super::observer::FbObserver;
use super::FbParams;
use crate::channels::{ChannelSession, FeedbackMode, Input};
use crate::control::{Controller, Observer};
use crate::error::{Error, Result};
use crate::model::{DisturbanceSource, PlantParams, PlantState};
use crate::rng::{open_unit, stream, Tag};

/// Instrumented view of one step of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbStep {
    pub t: u64,
    pub x: f64,
    /// Channel input sent at `t`.
    pub input: Input,
    /// `X_t` minus the pending virtual controls, compounded.
    pub xbar: f64,
    pub width: f64,
    /// `(t − s).saturating_sub(v)` for the oldest nonzero virtual control
    /// `s` still missing from the plant; 0 when none is missing.
    pub depth: u64,
    /// `λ^{depth+v} · 2W_max / (1 − λ^{−1})`.
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FbSummary {
    pub steps: u64,
    pub bound_violations: u64,
    pub window_violations: u64,
    pub max_abs_x: f64,
    pub max_depth: u64,
    pub max_backlog_bits: usize,
}

/// Runs the feedback stabilizer for `horizon` steps from `X_0 = 0`.
///
/// Observation noise is uniform on `(−Γ/2, Γ/2)` and control noise uniform
/// on `[−Γ_c/2, Γ_c/2]`. Every step checks the window of the virtual state
/// and the state bound implied by the oldest missing virtual control.
pub fn run_feedback_loop(
    params: &FbParams,
    channel: &mut ChannelSession,
    disturbance: &mut DisturbanceSource,
    horizon: u64,
    seed: u64,
    trial: u64,
    mut on_step: impl FnMut(&FbStep),
) -> Result<FbSummary> {
    if channel.feedback_mode() != FeedbackMode::UnitDelay {
        return Err(Error::FeedbackDisabled);
    }
    params.validate()?;
    let link = Link::for_channel(channel.spec())?;
    let mut observer = FbObserver::new(*params, link.clone())?;
    let mut controller = FbController::new(*params, link)?;
    let plant = PlantParams::new(params.lambda, params.omega)?;
    let mut state = PlantState::new(&plant);
    let mut obs_rng = stream(seed, Tag::ObsNoise, trial);
    let mut ctrl_rng = stream(seed, Tag::CtrlNoise, trial);
    let w_max = params.window_max();
    let lam = params.lambda;

    // virtual controls not yet applied by the real controller, from `base`
    let mut missing: VecDeque<f64> = VecDeque::new();
    let mut base = 0u64;
    let mut summary = FbSummary::default();
    for t in 0..horizon {
        let x = state.x;
        let fb = channel.latest_feedback(t + 1)?;
        let n = if params.gamma_obs > 0.0 {
            params.gamma_obs * (open_unit(&mut obs_rng) - 0.5)
        } else {
            0.0
        };
        let a = observer.emit(t, x + n, fb.as_ref())?;
        let width = observer.last_width();
        if t > 0 && observer.pending().0 != controller.applied() {
            return Err(Error::ControllerDesync {
                t,
                enc: observer.pending().0 as f64,
                dec: controller.applied() as f64,
            });
        }

        let offset: f64 = -missing
            .iter()
            .enumerate()
            .map(|(i, u)| lam.powi((t - 1 - (base + i as u64)) as i32) * u)
            .sum::<f64>();
        let xbar = x - offset;
        let oldest = missing.iter().position(|u| *u != 0.0);
        let depth = oldest.map_or(0, |i| (t - (base + i as u64)).saturating_sub(params.delay));
        let bound = params.state_bound(depth, w_max);
        if x.abs() > bound {
            summary.bound_violations += 1;
        }
        if xbar.abs() > width / 2.0 * (1.0 + 1e-9) || width > w_max * (1.0 + 1e-12) {
            summary.window_violations += 1;
        }
        summary.max_abs_x = summary.max_abs_x.max(x.abs());
        summary.max_depth = summary.max_depth.max(depth);
        summary.max_backlog_bits = summary.max_backlog_bits.max(observer.backlog_bits());
        on_step(&FbStep {
            t,
            x,
            input: a,
            xbar,
            width,
            depth,
            bound,
        });

        let b = channel.step(a)?;
        let u = controller.act(t, &b)?;
        let nc = if params.gamma_ctrl > 0.0 {
            params.gamma_ctrl * (ctrl_rng.random::<f64>() - 0.5)
        } else {
            0.0
        };
        let w = disturbance.sample(&state)?;
        state.advance(&plant, u + nc, w)?;
        missing.push_back(observer.last_control().expect("emit pushes a control"));
        while base < controller.applied() {
            missing.pop_front();
            base += 1;
        }
        summary.steps += 1;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ChannelSpec, DmcSpec, ErasureSpec};
    use crate::model::DisturbanceKind;
    use crate::rate::Rate;

    fn session(spec: ChannelSpec, trial: u64) -> ChannelSession {
        ChannelSession::new(spec, FeedbackMode::UnitDelay, 9, trial).unwrap().with_log_cap(4)
    }

    #[test]
    fn noiseless_channel_tracks_virtual_state_exactly() {
        let p = FbParams::new(1.5, 1.0, Rate::integer(1)).unwrap();
        let lim = 2.0 * p.delta / (1.0 - 1.0 / 1.5);
        for trial in 0..20 {
            let mut ch = session(ChannelSpec::Dmc(DmcSpec::identity(2)), trial);
            let mut w = DisturbanceSource::new(DisturbanceKind::AdversarialRandom, 1.0, 9, trial);
            let s = run_feedback_loop(&p, &mut ch, &mut w, 2000, 9, trial, |st| {
                assert_eq!(st.depth, 0);
                assert_eq!(st.x, st.xbar);
                assert!(st.xbar.abs() <= p.delta / 2.0);
            })
            .unwrap();
            assert_eq!((s.bound_violations, s.window_violations), (0, 0));
            assert!(s.max_abs_x <= lim);
        }
    }

    #[test]
    fn zero_disturbance_stays_in_window() {
        let p = FbParams::new(1.5, 1.0, Rate::integer(1)).unwrap();
        let mut ch = session(ChannelSpec::Dmc(DmcSpec::identity(2)), 0);
        let mut w = DisturbanceSource::new(DisturbanceKind::Zero, 1.0, 0, 0);
        // zero sits on a bin edge, so the state cycles inside the window
        let mut xs = Vec::new();
        let s = run_feedback_loop(&p, &mut ch, &mut w, 200, 0, 0, |st| xs.push(st.x)).unwrap();
        assert_eq!((s.bound_violations, s.window_violations), (0, 0));
        assert!(s.max_abs_x <= p.delta / 2.0);
        assert!(xs.iter().any(|x| *x != 0.0));
    }

    #[test]
    fn erasures_respect_state_bound_with_and_without_delay() {
        let spec = ChannelSpec::Erasure(ErasureSpec::packet(1, 0.3).unwrap());
        for v in [0, 3] {
            let p = FbParams::new(1.2, 1.0, Rate::new(1, 2).unwrap()).unwrap().with_delay(v);
            for trial in 0..10 {
                let mut ch = session(spec.clone(), trial);
                let mut w = DisturbanceSource::new(DisturbanceKind::AdversarialRandom, 1.0, 9, trial);
                let s = run_feedback_loop(&p, &mut ch, &mut w, 5000, 9, trial, |_| {}).unwrap();
                assert_eq!((s.bound_violations, s.window_violations), (0, 0), "v={v} trial={trial}");
                assert!(s.max_depth > 0);
            }
        }
    }

    #[test]
    fn noisy_observation_and_control_keep_invariants() {
        let rate = Rate::new(3, 2).unwrap();
        let p = FbParams::new(1.3, 1.0, rate).unwrap().with_noise(0.2, 0.3).unwrap();
        let spec = ChannelSpec::Erasure(ErasureSpec::packet(3, 0.1).unwrap());
        for trial in 0..10 {
            let mut ch = session(spec.clone(), trial);
            let mut w = DisturbanceSource::new(DisturbanceKind::AdversarialRandom, 1.0, 5, trial);
            let s = run_feedback_loop(&p, &mut ch, &mut w, 5000, 5, trial, |_| {}).unwrap();
            assert_eq!((s.bound_violations, s.window_violations), (0, 0));
        }
    }

    #[test]
    fn erasing_dmc_link_works() {
        let dmc = DmcSpec::new(vec![vec![0.8, 0.2, 0.0], vec![0.0, 0.2, 0.8]]).unwrap();
        let p = FbParams::new(1.1, 1.0, Rate::new(1, 2).unwrap()).unwrap().with_delay(1);
        let mut ch = session(ChannelSpec::Dmc(dmc), 0);
        let mut w = DisturbanceSource::new(DisturbanceKind::Uniform, 1.0, 1, 0);
        let s = run_feedback_loop(&p, &mut ch, &mut w, 5000, 1, 0, |_| {}).unwrap();
        assert_eq!((s.bound_violations, s.window_violations), (0, 0));
    }

    #[test]
    fn refuses_without_feedback() {
        let p = FbParams::new(1.5, 1.0, Rate::integer(1)).unwrap();
        let mut ch = ChannelSession::new(ChannelSpec::Dmc(DmcSpec::identity(2)), FeedbackMode::None, 0, 0).unwrap();
        let mut w = DisturbanceSource::new(DisturbanceKind::Zero, 1.0, 0, 0);
        assert_eq!(
            run_feedback_loop(&p, &mut ch, &mut w, 10, 0, 0, |_| {}).unwrap_err(),
            Error::FeedbackDisabled
        );
    }
}
