//! The built-in experiments.
//!
//! Each scenario runs its trials through the engine, fills a [`RunReport`]
//! with state moments and tails plus its own diagnostics, and records the
//! checks that `--check` enforces.
//!
//! Scenario tables:
//!
//! | scenario | table | columns |
//! |---|---|---|
//! | erasure-reset | `reset_second_moment` | `t,estimate,ci_lo,ci_hi,n,plain_mean,lower_series,exact` |
//! | passive-observer | `passive` | `t,mse,mse_ci_lo,mse_ci_hi,second_moment` |
//! | nofeedback-trellis | `trellis` | `trial,stage,true_bin,ml_bin,error_depth` |
//! | nofeedback-trellis | `trellis_depths` | `d,errors,stages,p_hat,ci_lo,ci_hi,bound` |
//! | dance | `dance` | `trial,t,b_true,b_decoded,residual` |
//!
//! Per-step tables (`trellis`, `dance`) are only built when an output
//! directory is configured.

use statrs::distribution::{ContinuousCDF, Normal};

use super::config::{Scenario, ScenarioConfig};
use super::engine::run_trials;
use super::estimators::{column_moments, estimate_moment, estimate_tail, trend, EstimatorOptions};
use super::report::{MomentSeries, RunReport, Table};
use super::reset;
use crate::awgn::{self, AwgnSchemeParams};
use crate::channels::{ChannelSession, ChannelSpec, DmcSpec, ErasureSpec, FeedbackMode};
use crate::codec::{estimate_reliability, run_reduction, BitStream, CantorParams, ReductionConfig, ReliabilityReport};
use crate::control::{simulate, BangController, Controller, SignObserver};
use crate::error::{invalid, Result};
use crate::feedback::{run_feedback_loop, FbController, FbObserver, FbParams, Link};
use crate::model::{DisturbanceSource, PlantParams};
use crate::nofeedback::dance::{run_dance_loop, run_explicit_twin, validate_tail, DanceParams};
use crate::nofeedback::trellis::{run_trellis_loop, StageRecord, TrellisParams, TrellisSetup};
use crate::stats::{clopper_pearson, ks_test, TrendVerdict};

/// Depths checked against the trellis error bound.
pub const TRELLIS_CHECK_DEPTHS: u64 = 5;

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::Example1 => example1(cfg),
        Scenario::ErasureReset => erasure_reset(cfg),
        Scenario::FeedbackSufficiency => feedback_sufficiency(cfg),
        Scenario::NofeedbackTrellis => trellis(cfg),
        Scenario::Dance => dance(cfg),
        Scenario::Awgn => awgn_scheme(cfg),
        Scenario::PassiveObserver => passive_observer(cfg),
    }
}

fn options(cfg: &ScenarioConfig) -> EstimatorOptions {
    let e = &cfg.estimators;
    EstimatorOptions {
        conf: e.conf,
        bootstrap: e.bootstrap,
        burn_in: e.burn_in,
        windows: e.windows,
        stride: e.stride,
        seed: cfg.seed,
    }
}

fn verdict_name(v: Option<TrendVerdict>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Moments for every configured `η`, the tail surface, and the trajectories
/// themselves.
fn add_state_estimates(cfg: &ScenarioConfig, report: &mut RunReport, traj: Vec<Vec<f64>>) -> Result<()> {
    let opts = options(cfg);
    for &eta in &cfg.estimators.eta {
        let m = estimate_moment(&traj, eta, &opts)?;
        report.put(&format!("sup_moment_eta{eta}"), m.sup_mean());
        report.moments.push(MomentSeries {
            quantity: "abs_x".into(),
            eta,
            points: m.points,
            trend: m.trend,
        });
    }
    let tail = estimate_tail(&traj, &cfg.estimators.m_grid, cfg.estimators.burn_in, &opts)?;
    if let Some(fit) = &tail.slope {
        let (lo, hi) = fit.slope_ci(cfg.estimators.conf);
        report.put("tail_slope", fit.slope);
        report.put("tail_slope_ci_lo", lo);
        report.put("tail_slope_ci_hi", hi);
    }
    report.tail = Some(tail);
    let max_abs = traj.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
    report.put("max_abs_x", max_abs);
    report.trajectories = traj;
    Ok(())
}

fn moment_trend_check(report: &mut RunReport, name: &str, quantity: &str, eta: f64, want: TrendVerdict) {
    let got = report.moment(quantity, eta).and_then(|m| m.trend);
    let detail = got.map_or_else(
        || "no trend estimate".to_string(),
        |t| format!("verdict {} (z = {:.3}, {} points)", t.verdict, t.z, t.points),
    );
    report.check(name, got.map(|t| t.verdict) == Some(want), detail);
}

/// Smallest `B` with `[−B, B]` invariant under the sign-bit scheme, if any:
/// `B = gain + Ω/2` works when `λB − gain + Ω/2 ≤ B`.
pub fn sign_scheme_bound(lambda: f64, omega: f64, gain: f64) -> Option<f64> {
    let b = gain + omega / 2.0;
    (gain >= omega / 2.0 && lambda * b - gain + omega / 2.0 <= b * (1.0 + 1e-12)).then_some(b)
}

fn example1(cfg: &ScenarioConfig) -> Result<RunReport> {
    let (lam, omega) = (cfg.lambda()?, cfg.omega()?);
    let gain = cfg.scheme.gain.unwrap_or(lam);
    let plant = PlantParams::new(lam, omega)?;
    let spec = cfg.channel.clone().unwrap_or(ChannelSpec::Dmc(DmcSpec::identity(2)));
    let traj = run_trials(cfg.trials, |k| {
        let mut ch = ChannelSession::new(spec.clone(), FeedbackMode::None, cfg.seed, k)?.with_log_cap(1);
        let mut w = DisturbanceSource::new(cfg.plant.disturbance, omega, cfg.seed, k);
        let mut xs = Vec::with_capacity(cfg.horizon as usize + 1);
        let last = simulate(&plant, &mut SignObserver, &mut BangController { gain }, &mut ch, &mut w, cfg.horizon, |s| {
            xs.push(s.x)
        })?;
        xs.push(last.x);
        Ok(xs)
    })?;
    let mut report = RunReport::new(cfg.scenario);
    report.put("gain", gain);
    let bound = sign_scheme_bound(lam, omega, gain);
    report.put("bound", bound.unwrap_or(f64::NAN));
    let violations = bound.map_or(0, |b| traj.iter().flatten().filter(|x| x.abs() > b).count());
    add_state_estimates(cfg, &mut report, traj)?;
    report.put("bound_violations", violations as f64);
    match bound {
        Some(b) => {
            let max_abs = report.get("max_abs_x").unwrap_or(0.0);
            report.check(
                "state_within_bound",
                violations == 0,
                format!("max |X| = {max_abs}, bound {b}, {violations} violations"),
            );
            let tail = report.tail.as_ref().expect("set above");
            let leaks = tail.surface.iter().filter(|p| p.m >= b && p.exceed > 0).count();
            report.check("tail_zero_beyond_bound", leaks == 0, format!("{leaks} grid points at m ≥ {b} with exceedances"));
        }
        None => report.check("state_within_bound", false, "this gain admits no invariant interval"),
    }
    Ok(report)
}

fn erasure_spec(cfg: &ScenarioConfig) -> Result<ErasureSpec> {
    match cfg.channel()? {
        ChannelSpec::Erasure(e) => Ok(*e),
        _ => Err(invalid("channel", "expected an erasure channel")),
    }
}

fn erasure_reset(cfg: &ScenarioConfig) -> Result<RunReport> {
    let (lam, omega) = (cfg.lambda()?, cfg.omega()?);
    let plant = PlantParams::new(lam, omega)?;
    let ch = erasure_spec(cfg)?;
    let kind = cfg.plant.disturbance;
    let horizon = cfg.horizon;
    let traj = run_trials(cfg.trials, |k| reset::plain_trial(&plant, &ch, kind, horizon, cfg.seed, k))?;
    let mut report = RunReport::new(cfg.scenario);
    let opts = options(cfg);
    let plain_sq = estimate_moment(&traj, 2.0, &opts)?;
    if !cfg.estimators.eta.contains(&1.0) {
        let m = estimate_moment(&traj, 1.0, &opts)?;
        report.moments.push(MomentSeries {
            quantity: "abs_x".into(),
            eta: 1.0,
            points: m.points,
            trend: m.trend,
        });
    }
    add_state_estimates(cfg, &mut report, traj)?;
    moment_trend_check(&mut report, "first_moment_bounded", "abs_x", 1.0, TrendVerdict::Bounded);
    report.put("lambda_delta", lam * ch.delta);
    report.put("lambda_sq_delta", lam * lam * ch.delta);

    let var = reset::disturbance_variance(kind, omega);
    if cfg.scheme.importance {
        let var = var.ok_or_else(|| invalid("plant.disturbance", "importance sampling needs iid disturbances"))?;
        let est = run_trials(cfg.trials, |k| {
            let target = 1 + k % horizon;
            Ok((target, reset::importance_trial(&plant, ch.delta, kind, target, cfg.seed, k)?))
        })?;
        let mut columns = vec![Vec::new(); horizon as usize + 1];
        for (t, v) in est {
            columns[t as usize].push(v);
        }
        let points = column_moments(&columns, cfg.estimators.conf)?;
        let series: Vec<f64> = points
            .iter()
            .filter(|p| p.t >= cfg.estimators.burn_in.max(1))
            .map(|p| p.mean)
            .collect();
        let tr = trend(&series, cfg.estimators.windows).ok();

        let mut table = Table::new(
            "reset_second_moment",
            &["t", "estimate", "ci_lo", "ci_hi", "n", "plain_mean", "lower_series", "exact"],
        );
        let mut below = Vec::new();
        let mut worst = (f64::INFINITY, 0u64);
        for p in &points {
            let lower = reset::lower_series(lam, ch.delta, var, p.t);
            let exact = reset::exact_second_moment(lam, ch.delta, var, p.t);
            let plain = plain_sq.points.iter().find(|q| q.t == p.t).map_or(f64::NAN, |q| q.mean);
            table.push(vec![
                p.t.to_string(),
                p.mean.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
                p.n.to_string(),
                plain.to_string(),
                lower.to_string(),
                exact.to_string(),
            ]);
            if p.t >= 1 {
                let ratio = p.ci_hi / lower;
                if ratio < worst.0 {
                    worst = (ratio, p.t);
                }
                if p.ci_hi < lower {
                    below.push(p.t);
                }
            }
        }
        report.check(
            "second_moment_above_lower_series",
            below.is_empty() && !points.is_empty(),
            format!(
                "upper CI below the series at {} of {} times; smallest upper-CI/series ratio {:.4} at t = {}",
                below.len(),
                points.len().saturating_sub(1),
                worst.0,
                worst.1
            ),
        );
        report.check(
            "second_moment_diverging",
            tr.map(|t| t.verdict) == Some(TrendVerdict::Diverging),
            format!(
                "verdict {} (z = {:.3})",
                verdict_name(tr.map(|t| t.verdict)),
                tr.map_or(f64::NAN, |t| t.z)
            ),
        );
        report.moments.push(MomentSeries {
            quantity: "sq_x_importance".into(),
            eta: 2.0,
            points,
            trend: tr,
        });
        report.tables.push(table);
    }
    if let Some(t) = plain_sq.trend {
        report.put("plain_second_moment_z", t.z);
    }
    Ok(report)
}

fn passive_observer(cfg: &ScenarioConfig) -> Result<RunReport> {
    let (lam, omega) = (cfg.lambda()?, cfg.omega()?);
    let gain = cfg.scheme.gain.unwrap_or(lam);
    let plant = PlantParams::new(lam, omega)?;
    let ch = erasure_spec(cfg)?;
    let pairs = run_trials(cfg.trials, |k| {
        reset::passive_trial(&plant, gain, &ch, cfg.plant.disturbance, cfg.horizon, cfg.seed, k)
    })?;
    let errors: Vec<Vec<f64>> = pairs.iter().map(|r| r.iter().map(|(x, xh)| x - xh).collect()).collect();
    let traj: Vec<Vec<f64>> = pairs.into_iter().map(|r| r.into_iter().map(|(x, _)| x).collect()).collect();
    let opts = EstimatorOptions {
        stride: 1,
        ..options(cfg)
    };
    let mse = estimate_moment(&errors, 2.0, &opts)?;
    let sq = estimate_moment(&traj, 2.0, &opts)?;
    let k_hat = sq.points.iter().map(|p| p.mean).fold(0.0, f64::max);
    let limit = ch.delta * k_hat;
    let mut report = RunReport::new(cfg.scenario);
    let mut table = Table::new("passive", &["t", "mse", "mse_ci_lo", "mse_ci_hi", "second_moment"]);
    let mut over = 0;
    for (p, q) in mse.points.iter().zip(&sq.points) {
        if p.ci_lo > limit {
            over += 1;
        }
        table.push(vec![
            p.t.to_string(),
            p.mean.to_string(),
            p.ci_lo.to_string(),
            p.ci_hi.to_string(),
            q.mean.to_string(),
        ]);
    }
    let sup_mse = mse.points.iter().map(|p| p.mean).fold(0.0, f64::max);
    report.put("k_hat", k_hat);
    report.put("sup_mse", sup_mse);
    report.put("mse_limit", limit);
    report.check(
        "listener_error_within_limit",
        over == 0,
        format!("sup MSE {sup_mse:.5} vs δ·K̂ = {limit:.5}; {over} times significantly above"),
    );
    report.moments.push(MomentSeries {
        quantity: "abs_error".into(),
        eta: 2.0,
        points: mse.points,
        trend: mse.trend,
    });
    report.tables.push(table);
    add_state_estimates(cfg, &mut report, traj)?;
    Ok(report)
}

fn fb_params(cfg: &ScenarioConfig) -> Result<FbParams> {
    let s = &cfg.scheme;
    Ok(FbParams::new(cfg.lambda()?, cfg.omega()?, cfg.rate()?)?
        .with_noise(s.gamma_obs, s.gamma_ctrl)?
        .with_delay(s.delay))
}

fn reliability(cfg: &ScenarioConfig, samples: &[crate::codec::table::ErrorSample]) -> Result<ReliabilityReport> {
    let e = &cfg.estimators;
    let window = e.delay_window.map_or((1, e.max_delay), |[a, b]| (a, b));
    estimate_reliability(samples, e.max_delay, window)
}

fn feedback_sufficiency(cfg: &ScenarioConfig) -> Result<RunReport> {
    let params = fb_params(cfg)?;
    let spec = cfg.channel()?.clone();
    let link = Link::for_channel(&spec)?;
    let mut report = RunReport::new(cfg.scenario);
    report.put("delta", params.delta);
    report.put("window_max", params.window_max());
    report.put("delay", params.delay as f64);

    let Some(code_rate) = cfg.scheme.code_rate else {
        let runs = run_trials(cfg.trials, |k| {
            let mut ch = ChannelSession::new(spec.clone(), FeedbackMode::UnitDelay, cfg.seed, k)?.with_log_cap(4);
            let mut w = DisturbanceSource::new(cfg.plant.disturbance, params.omega, cfg.seed, k);
            let mut xs = Vec::with_capacity(cfg.horizon as usize);
            let s = run_feedback_loop(&params, &mut ch, &mut w, cfg.horizon, cfg.seed, k, |s| xs.push(s.x))?;
            Ok((xs, s))
        })?;
        let (mut bound_v, mut window_v, mut max_depth, mut backlog) = (0, 0, 0, 0);
        let mut traj = Vec::with_capacity(runs.len());
        for (xs, s) in runs {
            bound_v += s.bound_violations;
            window_v += s.window_violations;
            max_depth = max_depth.max(s.max_depth);
            backlog = backlog.max(s.max_backlog_bits);
            traj.push(xs);
        }
        report.put("bound_violations", bound_v as f64);
        report.put("window_violations", window_v as f64);
        report.put("max_depth", max_depth as f64);
        report.put("max_backlog_bits", backlog as f64);
        report.check(
            "state_bound",
            bound_v == 0,
            format!("{bound_v} steps with |X_t| above λ^(d+v)·2W_max/(1−1/λ)"),
        );
        report.check("virtual_window", window_v == 0, format!("{window_v} steps with the virtual state outside its window"));
        add_state_estimates(cfg, &mut report, traj)?;
        return Ok(report);
    };

    if params.gamma_obs > 0.0 || params.gamma_ctrl > 0.0 {
        return Err(invalid("scheme.code_rate", "the reduction runs without observation or control noise"));
    }
    let cantor = CantorParams::new(params.lambda, params.omega, code_rate)?;
    if cfg.horizon > cantor.float_horizon() {
        return Err(invalid(
            "horizon",
            format!("at most {} steps fit the float decoder at λ = {}", cantor.float_horizon(), params.lambda),
        ));
    }
    let runs = run_trials(cfg.trials, |k| {
        let bits = BitStream::random(code_rate, cfg.horizon, cfg.seed, k);
        let rc = ReductionConfig {
            lambda: params.lambda,
            omega: params.omega,
            code_rate,
            horizon: cfg.horizon,
            shared_seed: None,
            keep_table: false,
            keep_inputs: false,
        };
        let mut observer = FbObserver::new(params, link.clone())?;
        let l2 = link.clone();
        let factory = move |_: Option<u64>| -> Result<Box<dyn Controller>> { Ok(Box::new(FbController::new(params, l2.clone())?)) };
        let mut ch = ChannelSession::new(spec.clone(), FeedbackMode::UnitDelay, cfg.seed, k)?.with_log_cap(4);
        let trace = run_reduction(&rc, &bits, &mut observer, &factory, &mut ch)?;
        let errors = trace.steps.iter().filter(|s| s.depth.is_some()).count();
        Ok((trace.steps.iter().map(|s| s.x).collect::<Vec<f64>>(), trace.violations(), errors, trace.error_samples(k)))
    })?;
    let (mut violations, mut errors, mut steps) = (0usize, 0usize, 0usize);
    let mut samples = Vec::new();
    let mut traj = Vec::with_capacity(runs.len());
    for (xs, v, e, s) in runs {
        violations += v;
        errors += e;
        steps += xs.len();
        samples.extend(s);
        traj.push(xs);
    }
    report.put("code_rate", code_rate.as_f64());
    report.put("logged_steps", steps as f64);
    report.put("prefix_errors", errors as f64);
    report.put("unsound_errors", violations as f64);
    report.check(
        "reduction_sound",
        violations == 0,
        format!("{violations} of {errors} prefix errors outside |X_t| ≥ threshold over {steps} logged steps"),
    );
    let rel = reliability(cfg, &samples)?;
    add_state_estimates(cfg, &mut report, traj)?;
    tail_consistency(cfg, &mut report, &rel, params.lambda);
    report.reliability = Some(rel);
    Ok(report)
}

/// Compares the power-law tail slope of `|X|` with `−α̂/log₂λ` from the
/// reliability fit of the same runs.
fn tail_consistency(cfg: &ScenarioConfig, report: &mut RunReport, rel: &ReliabilityReport, lambda: f64) {
    let l2 = lambda.log2();
    let fit = rel.fit.as_ref();
    let slope = report.tail.as_ref().and_then(|t| t.slope.clone());
    if let Some(f) = fit {
        report.put("alpha", f.alpha);
        report.put("alpha_ci_lo", f.alpha_lo);
        report.put("alpha_ci_hi", f.alpha_hi);
        report.put("predicted_tail_slope", -f.alpha / l2);
    }
    match (fit, slope) {
        (Some(f), Some(s)) => {
            let (pl, ph) = (-f.alpha_hi / l2, -f.alpha_lo / l2);
            let (sl, sh) = s.slope_ci(cfg.estimators.conf);
            let overlap = sl <= ph && pl <= sh;
            report.check(
                "tail_matches_reliability",
                overlap,
                format!(
                    "tail slope {:.3} [{sl:.3}, {sh:.3}] vs −α̂/log2λ {:.3} [{pl:.3}, {ph:.3}]",
                    s.slope,
                    -f.alpha / l2
                ),
            );
        }
        _ => report.check(
            "tail_matches_reliability",
            false,
            rel.note.clone().unwrap_or_else(|| "no tail fit (too few exceedances)".into()),
        ),
    }
}

fn dmc_spec(cfg: &ScenarioConfig) -> Result<DmcSpec> {
    match cfg.channel()? {
        ChannelSpec::Dmc(d) => Ok(d.clone()),
        _ => Err(invalid("channel", "expected a DMC")),
    }
}

fn trellis(cfg: &ScenarioConfig) -> Result<RunReport> {
    let s = &cfg.scheme;
    let mut tp = TrellisParams::new(
        cfg.lambda()?,
        cfg.omega()?,
        s.delta.expect("validated"),
        s.trellis_rate.expect("validated"),
    );
    tp.gamma = s.gamma_obs;
    tp.block = s.block;
    if let Some(w) = s.window {
        tp.window = w;
    }
    let setup = TrellisSetup::new(tp, dmc_spec(cfg)?)?;
    let keep_stages = cfg.output.dir.is_some();
    let runs = run_trials(cfg.trials, |k| {
        let mut w = DisturbanceSource::new(cfg.plant.disturbance, setup.params.omega, cfg.seed, k);
        let mut xs = Vec::with_capacity(cfg.horizon as usize);
        let mut stages: Vec<StageRecord> = Vec::new();
        let summary = run_trellis_loop(&setup, &mut w, cfg.horizon, cfg.seed, k, |st| {
            xs.push(st.x);
            if let Some(r) = st.stage {
                stages.push(r);
            }
        })?;
        Ok((xs, stages, summary))
    })?;

    let mut report = RunReport::new(cfg.scenario);
    report.put("block", setup.n as f64);
    report.put("exponent", setup.exponent);
    report.put("k", setup.params.k()?);
    let mut depth_ge: Vec<u64> = vec![0; TRELLIS_CHECK_DEPTHS as usize + 2];
    let (mut stages_total, mut bound_v, mut contain_v, mut overruns) = (0u64, 0u64, 0u64, 0u64);
    let mut table = Table::new("trellis", &["trial", "stage", "true_bin", "ml_bin", "error_depth"]);
    let mut traj = Vec::with_capacity(runs.len());
    for (k, (xs, stages, summary)) in runs.into_iter().enumerate() {
        bound_v += summary.bound_violations;
        contain_v += summary.containment_violations;
        overruns += summary.window_overruns;
        for r in &stages {
            stages_total += 1;
            for (d, c) in depth_ge.iter_mut().enumerate() {
                if r.error_depth >= d as u64 {
                    *c += 1;
                }
            }
            if keep_stages {
                table.push(vec![
                    k.to_string(),
                    r.stage.to_string(),
                    r.true_bin.to_string(),
                    r.ml_bin.to_string(),
                    r.error_depth.to_string(),
                ]);
            }
        }
        traj.push(xs);
    }
    report.put("stages", stages_total as f64);
    report.put("bound_violations", bound_v as f64);
    report.put("containment_violations", contain_v as f64);
    report.put("window_overruns", overruns as f64);
    report.check(
        "state_bound",
        bound_v == 0,
        format!("{bound_v} stage starts with |X| above K'λ^((d+1)n)"),
    );
    report.check("bin_containment", contain_v == 0, format!("{contain_v} steps outside the assigned bin"));

    let conf = cfg.estimators.conf;
    let mut depths = Table::new("trellis_depths", &["d", "errors", "stages", "p_hat", "ci_lo", "ci_hi", "bound"]);
    let mut over = Vec::new();
    for d in 1..=TRELLIS_CHECK_DEPTHS {
        let e = depth_ge[d as usize];
        let (lo, hi) = clopper_pearson(e, stages_total, conf);
        let bound = setup.depth_bound(d);
        if hi > bound {
            over.push(d);
        }
        depths.push(vec![
            d.to_string(),
            e.to_string(),
            stages_total.to_string(),
            (e as f64 / stages_total.max(1) as f64).to_string(),
            lo.to_string(),
            hi.to_string(),
            bound.to_string(),
        ]);
    }
    report.check(
        "depth_errors_within_bound",
        over.is_empty() && stages_total > 0,
        format!("upper CI above 2^(−d·n·E_r) at depths {over:?} over {stages_total} stages"),
    );
    add_state_estimates(cfg, &mut report, traj)?;
    for &eta in &cfg.estimators.eta {
        report.put(&format!("eta{eta}_log2_lambda"), eta * setup.params.lambda.log2());
        moment_trend_check(&mut report, &format!("moment_bounded_eta{eta}"), "abs_x", eta, TrendVerdict::Bounded);
    }
    report.tables.push(depths);
    if keep_stages {
        report.tables.push(table);
    }
    Ok(report)
}

fn dance(cfg: &ScenarioConfig) -> Result<RunReport> {
    let params = DanceParams::new(cfg.lambda()?, cfg.omega()?, cfg.rate()?, cfg.scheme.gamma_obs, dmc_spec(cfg)?)?;
    if let (Some(k), Some(beta)) = (cfg.scheme.tail_k, cfg.scheme.tail_beta) {
        let eta = cfg.estimators.eta.iter().copied().fold(0.0, f64::max);
        validate_tail(&params.dmc, k, beta, eta)?;
    }
    let keep_rows = cfg.output.dir.is_some();
    let twin = cfg.scheme.twin;
    let runs = run_trials(cfg.trials, |k| {
        let mut w = DisturbanceSource::new(cfg.plant.disturbance, params.inner.omega, cfg.seed, k);
        let mut xs = Vec::with_capacity(cfg.horizon as usize);
        let mut virt = Vec::new();
        let mut inputs = Vec::new();
        let mut rows = Vec::new();
        let summary = run_dance_loop(&params, &mut w, cfg.horizon, cfg.seed, k, |s| {
            xs.push(s.x);
            if twin {
                virt.push(s.x_virtual);
                inputs.push(s.input);
            }
            if keep_rows {
                if let Some((b, r)) = s.recovered {
                    rows.push((s.t, b, r.b, r.residual));
                }
            }
        })?;
        let mut twin_mismatch = 0u64;
        if twin {
            let mut w2 = DisturbanceSource::new(cfg.plant.disturbance, params.inner.omega, cfg.seed, k);
            run_explicit_twin(&params, &mut w2, cfg.horizon, cfg.seed, k, |t, input, x| {
                let t = t as usize;
                if inputs[t] != input || virt[t].to_bits() != x.to_bits() {
                    twin_mismatch += 1;
                }
            })?;
        }
        Ok((xs, rows, summary, twin_mismatch))
    })?;
    let mut report = RunReport::new(cfg.scenario);
    report.put("amplitude", params.amplitude());
    report.put("gamma_u", params.gamma_u());
    let mut table = Table::new("dance", &["trial", "t", "b_true", "b_decoded", "residual"]);
    let (mut rec, mut fail, mut phys, mut twin_mm) = (0u64, 0u64, 0u64, 0u64);
    let mut max_res = 0.0f64;
    let mut traj = Vec::with_capacity(runs.len());
    for (k, (xs, rows, s, mm)) in runs.into_iter().enumerate() {
        rec += s.recoveries;
        fail += s.recovery_failures;
        phys += s.physics_mismatches;
        max_res = max_res.max(s.max_abs_residual);
        twin_mm += mm;
        for (t, b, bd, r) in rows {
            table.push(vec![k.to_string(), t.to_string(), b.to_string(), bd.to_string(), r.to_string()]);
        }
        traj.push(xs);
    }
    report.put("recoveries", rec as f64);
    report.put("recovery_failures", fail as f64);
    report.put("max_abs_residual", max_res);
    report.put("physics_mismatches", phys as f64);
    report.check("outputs_recovered", fail == 0 && rec > 0, format!("{fail} failures in {rec} recoveries"));
    report.check("physics_consistent", phys == 0, format!("{phys} steps where the applied control disagreed"));
    if twin {
        report.put("twin_mismatches", twin_mm as f64);
        report.check(
            "matches_explicit_feedback_twin",
            twin_mm == 0,
            format!("{twin_mm} steps differ from the explicit-feedback run"),
        );
    }
    add_state_estimates(cfg, &mut report, traj)?;
    if keep_rows {
        report.tables.push(table);
    }
    Ok(report)
}

fn awgn_params(cfg: &ScenarioConfig) -> Result<AwgnSchemeParams> {
    let spec = match cfg.channel()? {
        ChannelSpec::Awgn(a) => *a,
        _ => return Err(invalid("channel", "expected an AWGN channel")),
    };
    let rate = cfg.rate()?;
    match cfg.plant.lambda {
        Some(l) => AwgnSchemeParams::with_lambda(rate, spec.power, spec.noise_var, l),
        None => awgn::choose_params(rate, spec.power, spec.noise_var),
    }
}

fn awgn_scheme(cfg: &ScenarioConfig) -> Result<RunReport> {
    let p = awgn_params(cfg)?;
    let fh = p.cantor()?.float_horizon();
    if cfg.horizon > fh {
        return Err(invalid("horizon", format!("at most {fh} steps fit the float decoder at λ = {}", p.lambda)));
    }
    let horizon = cfg.horizon;
    let trials = run_trials(cfg.trials, |k| awgn::run_trial(&p, horizon, cfg.seed, k, false))?;
    let mut report = RunReport::new(cfg.scenario);
    report.put("lambda", p.lambda);
    report.put("omega", p.omega);
    report.put("phi", p.phi);
    report.put("p2", p.p2());
    report.put("disturbance_bound", p.disturbance_bound());
    report.put("stationary_power", p.beta * p.beta * p.stationary_var());

    let ledger = awgn::power_ledger(&p, &trials, 0, horizon as usize);
    report.put("power", ledger.total);
    report.put("power_se", ledger.total_se);
    report.put("power_disturbance", ledger.disturbance);
    report.put("power_noise", ledger.noise);
    report.put("power_cross", ledger.cross);
    let limit = p.power + 2.0 * ledger.total_se;
    report.check(
        "power_within_budget",
        ledger.total <= limit,
        format!("average input power {:.4} ± {:.4} vs P = {}", ledger.total, ledger.total_se, p.power),
    );

    // the noise-driven part at the horizon is exactly Gaussian
    let sd = p.noise_var_at(horizon).sqrt();
    let gauss: Vec<f64> = trials.iter().map(|t| t.noise_part[horizon as usize]).collect();
    let normal = Normal::new(0.0, sd).map_err(|e| invalid("noise_var", e.to_string()))?;
    let ks = ks_test(&gauss, |x| normal.cdf(x))?;
    report.put("ks_d", ks.d);
    report.put("ks_p", ks.p_value);
    report.check(
        "gaussian_component_ks",
        ks.p_value > 0.01,
        format!("KS D = {:.5}, p = {:.4} against N(0, {:.4})", ks.d, ks.p_value, sd * sd),
    );

    let mut samples = Vec::new();
    let mut traj = Vec::with_capacity(trials.len());
    for (k, t) in trials.into_iter().enumerate() {
        samples.extend(t.trace.error_samples(k as u64));
        traj.push(t.trace.steps.iter().map(|s| s.x).collect::<Vec<f64>>());
    }
    let rel = reliability(cfg, &samples)?;
    let level = cfg.scheme.collapse_level;
    match awgn::collapse(&rel, level) {
        Some(c) => {
            report.put("collapse_d_level", c.d_level as f64);
            report.put("collapse_d_last", c.d_last as f64);
            report.check(
                "error_collapse",
                c.width() <= 2,
                format!("ĝ ≥ {level} up to d = {}, last error at d = {}", c.d_level, c.d_last),
            );
        }
        None => report.check(
            "error_collapse",
            rel.last_error_delay().is_none(),
            format!("no delay with ĝ ≥ {level}"),
        ),
    }
    if let Some(s) = awgn::double_log_slope(&rel) {
        report.put("double_log_slope", s);
        report.put("double_log_slope_reference", 2.0 * p.rate.as_f64() * std::f64::consts::LN_2);
    }
    report.reliability = Some(rel);

    add_state_estimates(cfg, &mut report, traj)?;
    let tail = report.tail.as_ref().expect("set above");
    let over: Vec<f64> = tail
        .surface
        .iter()
        .filter(|q| q.t == horizon && q.ci_lo > p.tail_bound(q.m))
        .map(|q| q.m)
        .collect();
    report.check(
        "state_tail_within_bound",
        over.is_empty(),
        format!("P̂(|X_T| > m) significantly above 2exp(−(m−c)²/(2P''σ²)) at m = {over:?}"),
    );
    Ok(report)
}
