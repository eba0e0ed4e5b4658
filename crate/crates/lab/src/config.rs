//! Run configurations. Every command has one record; a JSON config file
//! holds a single [`RunConfig`] (or a whole report, whose `config` field is
//! used). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use b92_core::analytic::HardwareParams;
use b92_core::channel::AttackModel;
use b92_core::estimation::OptimizerSettings;
use b92_core::montecarlo::{SamplingMode, Variant};
use serde::{Deserialize, Serialize};

use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub format: Format,
    /// Written to stdout (or the default output directory) when absent.
    pub path: Option<PathBuf>,
}

/// Which tallies a sweep evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TallyMode {
    /// Expected counts of a trial with `pulses` pulses.
    #[default]
    Expected,
    /// Seeded Monte Carlo trials.
    MonteCarlo,
}

impl TallyMode {
    pub fn default_pulses(self) -> u64 {
        match self {
            TallyMode::Expected => 1_000_000_000_000,
            TallyMode::MonteCarlo => 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    /// Direct for `b92dbar`, decoy-informed for `b92bar`, worst case for `b92`.
    #[default]
    Auto,
    WorstCase,
    DecoyInformed,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub variant: Variant,
    pub theta_deg: f64,
    pub attack: AttackModel,
    pub pulses: u64,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub estimator: EstimatorChoice,
    pub optimizer: OptimizerSettings,
    pub output: OutputSpec,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            variant: Variant::B92bar,
            theta_deg: 60.0,
            attack: AttackModel::DepolarizingLossy {
                loss: 0.0,
                depol: 0.01,
            },
            pulses: 1_000_000,
            seed: 0,
            sampling: SamplingMode::IidPerPulse,
            estimator: EstimatorChoice::Auto,
            optimizer: OptimizerSettings::default(),
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepLossConfig {
    pub theta_deg: f64,
    pub depol: f64,
    pub losses: Vec<f64>,
    pub tally: TallyMode,
    /// Defaults per tally mode.
    pub pulses: Option<u64>,
    pub seed: u64,
    pub optimizer: OptimizerSettings,
    pub output: OutputSpec,
}

impl Default for SweepLossConfig {
    fn default() -> Self {
        Self {
            theta_deg: 60.0,
            depol: 0.01,
            losses: (0..10).map(|k| k as f64 / 10.0).collect(),
            tally: TallyMode::Expected,
            pulses: None,
            seed: 0,
            optimizer: OptimizerSettings::default(),
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAngleConfig {
    pub depol: f64,
    pub theta_start_deg: f64,
    pub theta_stop_deg: f64,
    pub theta_step_deg: f64,
    /// Channel attenuations in dB; loss is `1 - 10^(-dB/10)`.
    pub eta_db: Vec<f64>,
    pub tally: TallyMode,
    pub pulses: Option<u64>,
    pub seed: u64,
    pub optimizer: OptimizerSettings,
    pub output: OutputSpec,
}

impl Default for SweepAngleConfig {
    fn default() -> Self {
        Self {
            depol: 0.01,
            theta_start_deg: 1.0,
            theta_stop_deg: 89.0,
            theta_step_deg: 4.0,
            eta_db: vec![0.0, 10.0, 20.0, 30.0],
            tally: TallyMode::Expected,
            pulses: None,
            seed: 0,
            optimizer: OptimizerSettings::default(),
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdsConfig {
    pub theta_deg: Vec<f64>,
    pub output: OutputSpec,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        Self {
            theta_deg: (1..=9).map(|k| 10.0 * k as f64).collect(),
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceConfig {
    pub p_star: Vec<f64>,
    pub hardware: HardwareParams,
    pub output: OutputSpec,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            p_star: vec![0.033, 0.080, 0.165],
            hardware: HardwareParams::reference(),
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsdDetectConfig {
    pub variant: Variant,
    pub theta_deg: f64,
    pub gamma: f64,
    pub pulses: u64,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub z_threshold: f64,
    /// Reference loss; the pooled arrival rate is used when absent.
    pub expected_loss: Option<f64>,
    pub output: OutputSpec,
}

impl Default for UsdDetectConfig {
    fn default() -> Self {
        Self {
            variant: Variant::B92bar,
            theta_deg: 60.0,
            gamma: 1.0,
            pulses: 100_000,
            seed: 0,
            sampling: SamplingMode::IidPerPulse,
            z_threshold: 5.0,
            expected_loss: None,
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate(SimulateConfig),
    SweepLoss(SweepLossConfig),
    SweepAngle(SweepAngleConfig),
    Thresholds(ThresholdsConfig),
    Distance(DistanceConfig),
    UsdDetect(UsdDetectConfig),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Simulate(_) => "simulate",
            RunConfig::SweepLoss(_) => "sweep-loss",
            RunConfig::SweepAngle(_) => "sweep-angle",
            RunConfig::Thresholds(_) => "thresholds",
            RunConfig::Distance(_) => "distance",
            RunConfig::UsdDetect(_) => "usd-detect",
        }
    }

    pub fn output(&self) -> &OutputSpec {
        match self {
            RunConfig::Simulate(c) => &c.output,
            RunConfig::SweepLoss(c) => &c.output,
            RunConfig::SweepAngle(c) => &c.output,
            RunConfig::Thresholds(c) => &c.output,
            RunConfig::Distance(c) => &c.output,
            RunConfig::UsdDetect(c) => &c.output,
        }
    }

    pub fn output_mut(&mut self) -> &mut OutputSpec {
        match self {
            RunConfig::Simulate(c) => &mut c.output,
            RunConfig::SweepLoss(c) => &mut c.output,
            RunConfig::SweepAngle(c) => &mut c.output,
            RunConfig::Thresholds(c) => &mut c.output,
            RunConfig::Distance(c) => &mut c.output,
            RunConfig::UsdDetect(c) => &mut c.output,
        }
    }

    /// Fills every default that depends on other fields, so the record
    /// alone reproduces the run.
    pub fn resolved(mut self) -> Self {
        match &mut self {
            RunConfig::SweepLoss(c) => {
                c.pulses.get_or_insert(c.tally.default_pulses());
            }
            RunConfig::SweepAngle(c) => {
                c.pulses.get_or_insert(c.tally.default_pulses());
            }
            _ => {}
        }
        self
    }

    /// Parses a config document: a bare [`RunConfig`] or a report carrying
    /// one under `config`.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let is_report = value.get("tool").is_some() && value.get("result").is_some();
        if let Some(inner) = value.get_mut("config").filter(|_| is_report).map(serde_json::Value::take) {
            value = inner;
        }
        serde_json::from_value(value).map_err(|e| LabError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
