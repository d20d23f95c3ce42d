//! Scenario configuration files.
//!
//! A scenario is one TOML document. Unknown keys are rejected everywhere so
//! that typos surface as errors rather than silently falling back to
//! defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channels::{ChannelSpec, ErasureKind};
use crate::error::{invalid, Error, Result};
use crate::model::DisturbanceKind;
use crate::rate::Rate;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Sign bit over a noiseless one-bit link.
    Example1,
    /// Reset control over a real-valued erasure channel without feedback.
    ErasureReset,
    /// Virtual-loop stabilizer with channel-output feedback.
    FeedbackSufficiency,
    /// Lattice quantizer with random labels and ML trellis decoding.
    NofeedbackTrellis,
    /// Feedback through the plant by control perturbations.
    Dance,
    /// Linear scheme over a power-limited Gaussian channel.
    Awgn,
    /// An outside estimator listening to a stabilized loop over an erasure
    /// channel.
    PassiveObserver,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Example1 => "example1",
            Scenario::ErasureReset => "erasure-reset",
            Scenario::FeedbackSufficiency => "feedback-sufficiency",
            Scenario::NofeedbackTrellis => "nofeedback-trellis",
            Scenario::Dance => "dance",
            Scenario::Awgn => "awgn",
            Scenario::PassiveObserver => "passive-observer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    /// Required everywhere except `awgn`, where it defaults to the chosen
    /// operating point.
    pub lambda: Option<f64>,
    /// Disturbance bound; `awgn` derives it from the power budget.
    pub omega: Option<f64>,
    #[serde(default = "default_disturbance")]
    pub disturbance: DisturbanceKind,
}

fn default_disturbance() -> DisturbanceKind {
    DisturbanceKind::Uniform
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            omega: None,
            disturbance: default_disturbance(),
        }
    }
}

/// Scheme knobs. Each scenario reads the subset it needs and rejects
/// missing required ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// Control magnitude for `example1`; defaults to λ.
    pub gain: Option<f64>,
    /// Bits per step of the stabilizer (`feedback-sufficiency`, `dance`,
    /// `awgn`).
    pub rate: Option<Rate>,
    /// Extra delay before learned controls are applied.
    #[serde(default)]
    pub delay: u64,
    /// Observation noise bound `Γ`.
    #[serde(default)]
    pub gamma_obs: f64,
    /// Control noise bound `Γ_c`.
    #[serde(default)]
    pub gamma_ctrl: f64,
    /// Runs `feedback-sufficiency` as an anytime code at this bit rate.
    pub code_rate: Option<Rate>,
    /// Lattice bin width for `nofeedback-trellis`.
    pub delta: Option<f64>,
    /// Code rate in bits per channel use for `nofeedback-trellis`.
    pub trellis_rate: Option<f64>,
    /// Block length; the smallest admissible one when absent.
    pub block: Option<u32>,
    /// Trellis stages kept open before committing.
    pub window: Option<u32>,
    /// Output tail bound `P(|B| ≥ i) ≤ K i^{−β}` checked before a `dance`
    /// run, together with `tail_beta`.
    pub tail_k: Option<f64>,
    pub tail_beta: Option<f64>,
    /// Also run the explicit-feedback twin of a `dance` run and compare.
    #[serde(default)]
    pub twin: bool,
    /// Estimate the second moment of `erasure-reset` by run-length
    /// importance sampling as well.
    #[serde(default = "yes")]
    pub importance: bool,
    /// `ĝ` level defining the start of the collapse for `awgn`.
    #[serde(default = "default_collapse_level")]
    pub collapse_level: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            gain: None,
            rate: None,
            delay: 0,
            gamma_obs: 0.0,
            gamma_ctrl: 0.0,
            code_rate: None,
            delta: None,
            trellis_rate: None,
            block: None,
            window: None,
            tail_k: None,
            tail_beta: None,
            twin: false,
            importance: true,
            collapse_level: default_collapse_level(),
        }
    }
}

fn yes() -> bool {
    true
}

fn default_collapse_level() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Thresholds for `P(|X_t| > m)`.
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<f64>,
    /// Moment orders.
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    /// Leading time steps left out of trend tests and late-horizon fits.
    #[serde(default)]
    pub burn_in: u64,
    /// Number of block means fed to the trend test; 0 uses every step.
    #[serde(default = "default_windows")]
    pub windows: usize,
    /// Bootstrap replicates for moment intervals; 0 uses the normal
    /// approximation.
    #[serde(default)]
    pub bootstrap: usize,
    #[serde(default = "default_conf")]
    pub conf: f64,
    /// Report moments and tails every `stride` steps.
    #[serde(default = "one")]
    pub stride: u64,
    /// Largest delay in error-versus-delay curves.
    #[serde(default = "default_max_delay")]
    pub max_delay: u64,
    /// Delay window `[lo, hi]` of the exponential reliability fit.
    pub delay_window: Option<[u64; 2]>,
}

fn default_m_grid() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
}

fn default_eta() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_windows() -> usize {
    10
}

fn default_conf() -> f64 {
    0.95
}

fn one() -> u64 {
    1
}

fn default_max_delay() -> u64 {
    60
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            m_grid: default_m_grid(),
            eta: default_eta(),
            burn_in: 0,
            windows: default_windows(),
            bootstrap: 0,
            conf: default_conf(),
            stride: 1,
            max_delay: default_max_delay(),
            delay_window: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for CSV artifacts; nothing is written when absent.
    pub dir: Option<PathBuf>,
    /// Write every trajectory as `trial,t,x` rows.
    #[serde(default)]
    pub trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub seed: u64,
    pub trials: u64,
    pub horizon: u64,
    #[serde(default)]
    pub plant: PlantConfig,
    pub channel: Option<ChannelSpec>,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn field(name: &'static str, reason: impl Into<String>) -> Error {
    invalid(name, reason)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| invalid("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid("config", e.to_string()))
    }

    /// `λ`, required for every scenario but `awgn`.
    pub fn lambda(&self) -> Result<f64> {
        self.plant.lambda.ok_or_else(|| field("plant.lambda", "required for this scenario"))
    }

    pub fn omega(&self) -> Result<f64> {
        self.plant.omega.ok_or_else(|| field("plant.omega", "required for this scenario"))
    }

    pub fn channel(&self) -> Result<&ChannelSpec> {
        self.channel.as_ref().ok_or_else(|| field("channel", "required for this scenario"))
    }

    pub fn rate(&self) -> Result<Rate> {
        self.scheme.rate.ok_or_else(|| field("scheme.rate", "required for this scenario"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.trials == 0 {
            return Err(field("trials", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(field("horizon", "must be at least 1"));
        }
        if let Some(l) = self.plant.lambda {
            if !(l.is_finite() && l > 0.0) {
                return Err(field("plant.lambda", format!("must be positive and finite, got {l}")));
            }
        }
        if let Some(o) = self.plant.omega {
            if !(o.is_finite() && o >= 0.0) {
                return Err(field("plant.omega", format!("must be nonnegative and finite, got {o}")));
            }
        }
        if let Some(c) = &self.channel {
            c.validate()?;
        }
        self.validate_estimators()?;
        self.validate_scheme()
    }

    fn validate_estimators(&self) -> Result<()> {
        let e = &self.estimators;
        if e.m_grid.is_empty() || e.m_grid.iter().any(|m| !(*m > 0.0)) || e.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field("estimators.m_grid", "must be positive and strictly increasing"));
        }
        if e.eta.is_empty() || e.eta.iter().any(|v| !(*v > 0.0)) {
            return Err(field("estimators.eta", "moment orders must be positive"));
        }
        if !(e.conf > 0.0 && e.conf < 1.0) {
            return Err(field("estimators.conf", "must be in (0, 1)"));
        }
        if e.stride == 0 {
            return Err(field("estimators.stride", "must be at least 1"));
        }
        if e.burn_in >= self.horizon {
            return Err(field("estimators.burn_in", "must be below the horizon"));
        }
        if let Some([lo, hi]) = e.delay_window {
            if lo > hi {
                return Err(field("estimators.delay_window", "expected [lo, hi] with lo <= hi"));
            }
        }
        Ok(())
    }

    fn validate_scheme(&self) -> Result<()> {
        let s = &self.scheme;
        if !(s.gamma_obs >= 0.0) || !(s.gamma_ctrl >= 0.0) {
            return Err(field("scheme.gamma_obs", "noise bounds must be nonnegative"));
        }
        let needs_channel = |want: &str, ok: bool| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(field("channel", format!("{} needs {want}", self.scenario.name())))
            }
        };
        match self.scenario {
            Scenario::Example1 => {
                self.lambda()?;
                self.omega()?;
                if let Some(c) = &self.channel {
                    needs_channel("a noiseless two-input channel or none", matches!(c, ChannelSpec::Dmc(d) if d.inputs() == 2))?;
                }
            }
            Scenario::ErasureReset | Scenario::PassiveObserver => {
                self.lambda()?;
                self.omega()?;
                needs_channel(
                    "a real-valued erasure channel",
                    matches!(self.channel()?, ChannelSpec::Erasure(e) if e.kind == ErasureKind::Real),
                )?;
            }
            Scenario::FeedbackSufficiency => {
                self.lambda()?;
                self.omega()?;
                self.rate()?;
                needs_channel("an erasure or DMC channel", !matches!(self.channel()?, ChannelSpec::Awgn(_)))?;
            }
            Scenario::NofeedbackTrellis => {
                self.lambda()?;
                self.omega()?;
                if s.delta.is_none() {
                    return Err(field("scheme.delta", "required for nofeedback-trellis"));
                }
                if s.trellis_rate.is_none() {
                    return Err(field("scheme.trellis_rate", "required for nofeedback-trellis"));
                }
                needs_channel("a DMC", matches!(self.channel()?, ChannelSpec::Dmc(_)))?;
            }
            Scenario::Dance => {
                self.lambda()?;
                self.omega()?;
                self.rate()?;
                needs_channel("a DMC", matches!(self.channel()?, ChannelSpec::Dmc(_)))?;
                if s.tail_k.is_some() != s.tail_beta.is_some() {
                    return Err(field("scheme.tail_k", "give tail_k and tail_beta together"));
                }
            }
            Scenario::Awgn => {
                self.rate()?;
                if self.plant.omega.is_some() {
                    return Err(field("plant.omega", "derived from the power budget for awgn; remove it"));
                }
                needs_channel("an AWGN channel", matches!(self.channel()?, ChannelSpec::Awgn(_)))?;
                if !(s.collapse_level > 0.0 && s.collapse_level < 1.0) {
                    return Err(field("scheme.collapse_level", "must be in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Sets a dotted key such as `plant.lambda` or `scheme.rate` from a
    /// TOML literal and revalidates.
    pub fn with_param(&self, path: &str, value: &str) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml()?).map_err(|e| invalid("config", e.to_string()))?;
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key just written"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let keys: Vec<&str> = path.split('.').collect();
        let (last, parents) = keys.split_last().ok_or_else(|| field("param", "empty path"))?;
        let mut node = &mut doc;
        for k in parents {
            node = node
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| field("param", format!("`{k}` is not a table")))?;
        }
        node.insert(last.to_string(), parsed);
        Self::from_toml(&toml::to_string(&doc).map_err(|e| invalid("config", e.to_string()))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RESET: &str = r#"
schema_version = 1
scenario = "erasure-reset"
seed = 7
trials = 100
horizon = 60

[plant]
lambda = 1.5
omega = 1.0

[channel]
kind = "erasure"
variant = "real"
delta = 0.5
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ScenarioConfig::from_toml(RESET).unwrap();
        assert_eq!(cfg.scenario, Scenario::ErasureReset);
        assert_eq!(cfg.plant.disturbance, DisturbanceKind::Uniform);
        assert!(cfg.scheme.importance);
        let again = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = RESET.replace("schema_version = 1", "schema_version = 2");
        assert!(ScenarioConfig::from_toml(&bad).unwrap_err().to_string().contains("schema_version"));
        let bad = RESET.replace("omega = 1.0", "omega = 1.0\nomgea = 2");
        assert!(ScenarioConfig::from_toml(&bad).unwrap_err().to_string().contains("omgea"));
        let bad = RESET.replace("variant = \"real\"", "variant = \"packet\"\nbits = 1");
        assert!(ScenarioConfig::from_toml(&bad).unwrap_err().to_string().contains("channel"));
        let bad = RESET.replace("lambda = 1.5\n", "");
        assert!(ScenarioConfig::from_toml(&bad).unwrap_err().to_string().contains("plant.lambda"));
        let bad = format!("{RESET}\n[estimators]\nm_grid = [2.0, 1.0]\n");
        assert!(ScenarioConfig::from_toml(&bad).unwrap_err().to_string().contains("m_grid"));
    }

    #[test]
    fn param_override() {
        let cfg = ScenarioConfig::from_toml(RESET).unwrap();
        let c2 = cfg.with_param("plant.lambda", "1.25").unwrap();
        assert_eq!(c2.plant.lambda, Some(1.25));
        let c3 = cfg.with_param("estimators.burn_in", "10").unwrap();
        assert_eq!(c3.estimators.burn_in, 10);
        assert!(cfg.with_param("plant.lambda", "-1").is_err());
        let c4 = cfg.with_param("scheme.rate", "1/3").unwrap();
        assert_eq!(c4.scheme.rate, Some(Rate::new(1, 3).unwrap()));
    }
}
