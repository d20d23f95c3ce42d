//! Command-line front end for the scenario harness.
//!
//! Exit status is 0 on success, 1 on a configuration or runtime error, and 2
//! when `--check` finds a failed check.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use anystab::harness::estimators::{estimate_moment, EstimatorOptions};
use anystab::harness::report::{read_moments, read_trajectories};
use anystab::harness::{run_scenario, RunReport, ScenarioConfig};

#[derive(Parser)]
#[command(name = "anystab", version, about = "Stabilization over noisy channels: scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        config: PathBuf,
        /// Exit with status 2 if any scenario check fails.
        #[arg(long)]
        check: bool,
        /// Write CSV artifacts here (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write `trajectories.csv`.
        #[arg(long)]
        trajectories: bool,
        /// Override `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `trials`.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Run a scenario once per value of a dotted config key.
    Sweep {
        config: PathBuf,
        /// Dotted key, e.g. `plant.lambda` or `channel.delta`.
        #[arg(long)]
        param: String,
        /// Values as TOML literals.
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        check: bool,
        /// Each value gets its own subdirectory `<param>=<value>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate configs without running them.
    Validate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Recompute moments from `trajectories.csv` and compare them with
    /// `moments.csv` in the same run directory.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Largest tolerated relative difference.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for failed checks
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Returns whether every enforced check passed.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run {
            config,
            check,
            out,
            trajectories,
            seed,
            trials,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = trials {
                cfg.trials = n;
            }
            cfg.validate()?;
            let ok = run_one(&cfg, out.as_deref(), trajectories)?;
            Ok(ok || !check)
        }
        Command::Sweep {
            config,
            param,
            values,
            check,
            out,
        } => {
            let base = load(&config)?;
            let mut all = true;
            for v in &values {
                let cfg = base
                    .with_param(&param, v)
                    .with_context(|| format!("setting {param} = {v}"))?;
                println!("== {param} = {v}");
                let dir = out.as_ref().map(|d| d.join(format!("{param}={v}")));
                all &= run_one(&cfg, dir.as_deref(), false)?;
            }
            Ok(all || !check)
        }
        Command::Validate { configs } => {
            for path in configs {
                let cfg = load(&path)?;
                println!("{}: ok ({})", path.display(), cfg.scenario.name());
            }
            Ok(true)
        }
        Command::Report { dirs, tol } => {
            let mut all = true;
            for d in dirs {
                all &= compare_moments(&d, tol)?;
            }
            Ok(all)
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run_one(cfg: &ScenarioConfig, out: Option<&Path>, trajectories: bool) -> Result<bool> {
    let report = run_scenario(cfg).with_context(|| format!("running {}", cfg.scenario.name()))?;
    print_report(&report);
    let dir = out.map(Path::to_path_buf).or_else(|| cfg.output.dir.clone());
    if let Some(dir) = dir {
        let files = report.write(&dir, trajectories || cfg.output.trajectories)?;
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(report.all_passed())
}

fn print_report(r: &RunReport) {
    println!("scenario {}", r.scenario.name());
    for (k, v) in &r.summary {
        println!("  {k:<28} {v}");
    }
    for m in &r.moments {
        if let Some(t) = m.trend {
            println!("  trend {}^{}: {} (z = {:.3})", m.quantity, m.eta, t.verdict, t.z);
        }
    }
    for c in &r.checks {
        println!("  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn compare_moments(dir: &Path, tol: f64) -> Result<bool> {
    let traj_path = dir.join("trajectories.csv");
    if !traj_path.exists() {
        bail!("{} is missing; rerun with --trajectories", traj_path.display());
    }
    let traj = read_trajectories(&traj_path)?;
    let logged = read_moments(&dir.join("moments.csv"))?;
    let opts = EstimatorOptions {
        conf: 0.95,
        bootstrap: 0,
        burn_in: 0,
        windows: 0,
        stride: 1,
        seed: 0,
    };
    let mut etas: Vec<f64> = Vec::new();
    for (q, eta, _, _) in &logged {
        if q == "abs_x" && !etas.contains(eta) {
            etas.push(*eta);
        }
    }
    let (mut compared, mut worst) = (0usize, 0.0f64);
    for eta in etas {
        let est = estimate_moment(&traj, eta, &opts)?;
        for (_, _, t, mean) in logged.iter().filter(|(q, e, _, _)| q == "abs_x" && *e == eta) {
            let Some(p) = est.points.get(*t as usize) else {
                bail!("moments.csv has t = {t} beyond the logged trajectories");
            };
            let rel = (p.mean - mean).abs() / mean.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(if p.mean == *mean { 0.0 } else { rel });
            compared += 1;
        }
    }
    let ok = worst <= tol;
    println!(
        "{}: {} moment points, worst relative difference {worst:.3e} [{}]",
        dir.display(),
        compared,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(ok)
}
