//! Command-line front end. A subcommand starts from its default config (or
//! the `--config` file) and every flag given overrides one field.
//!
//! Exit codes: 0 ok, 1 usage or config error, 2 infeasible estimate.

use std::ffi::OsString;
use std::path::PathBuf;

use b92_core::montecarlo::{SamplingMode, Variant};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::commands::{execute, EXIT_OK, EXIT_USAGE};
use crate::config::{
    DistanceConfig, EstimatorChoice, Format, RunConfig, SimulateConfig, SweepAngleConfig, SweepLossConfig, TallyMode,
    ThresholdsConfig, UsdDetectConfig,
};
use crate::{output, LabError, Result};

#[derive(Debug, Parser)]
#[command(name = "b92lab", version, about = "B92 key distribution simulator and security estimator")]
pub struct Cli {
    /// JSON config file (a bare config or an earlier report).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; defaults to $B92LAB_OUT_DIR/<command>.<ext> or stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One protocol run with its estimate.
    Simulate(SimulateArgs),
    /// Gain against channel loss for B92 (worst case) and B92bar (decoy informed).
    SweepLoss(SweepLossArgs),
    /// Decoy-informed phase-error bound and gain against angle, per attenuation.
    SweepAngle(SweepAngleArgs),
    /// Tolerable depolarizing rate per angle.
    Thresholds(ThresholdsArgs),
    /// Working distance per tolerable depolarizing rate.
    Distance(DistanceArgs),
    /// Class-dependent loss test under the unambiguous-discrimination attack.
    UsdDetect(UsdDetectArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// b92, b92bar or b92dbar.
    #[arg(long, value_parser = serde_enum::<Variant>)]
    pub variant: Option<Variant>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_deg: Option<f64>,
    /// identity, depolarizing_lossy, usd_attack or restricted_pauli_loss.
    #[arg(long)]
    pub attack: Option<String>,
    #[arg(long)]
    pub loss: Option<f64>,
    #[arg(long)]
    pub depol: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub qx: Option<f64>,
    #[arg(long)]
    pub qy: Option<f64>,
    #[arg(long)]
    pub qz: Option<f64>,
    #[arg(long)]
    pub lam0: Option<f64>,
    #[arg(long)]
    pub lam1: Option<f64>,
    #[arg(long)]
    pub pulses: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// iid_per_pulse or exact_counts.
    #[arg(long, value_parser = serde_enum::<SamplingMode>)]
    pub sampling: Option<SamplingMode>,
    /// auto, worst-case, decoy-informed or direct.
    #[arg(long, value_parser = serde_enum::<EstimatorChoice>)]
    pub estimator: Option<EstimatorChoice>,
}

#[derive(Debug, Args)]
pub struct SweepLossArgs {
    #[arg(long)]
    pub theta_deg: Option<f64>,
    #[arg(long)]
    pub depol: Option<f64>,
    /// Comma-separated loss grid.
    #[arg(long, value_delimiter = ',')]
    pub losses: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub tally: Option<TallyMode>,
    #[arg(long)]
    pub pulses: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepAngleArgs {
    #[arg(long)]
    pub depol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_start_deg: Option<f64>,
    #[arg(long)]
    pub theta_stop_deg: Option<f64>,
    #[arg(long)]
    pub theta_step_deg: Option<f64>,
    /// Comma-separated attenuations in dB.
    #[arg(long, value_delimiter = ',')]
    pub eta_db: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub tally: Option<TallyMode>,
    #[arg(long)]
    pub pulses: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ThresholdsArgs {
    /// Comma-separated angles.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub theta_deg: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    /// Comma-separated tolerable depolarizing rates.
    #[arg(long, value_delimiter = ',')]
    pub p_star: Option<Vec<f64>>,
    #[arg(long)]
    pub p_dark: Option<f64>,
    #[arg(long)]
    pub eta_det: Option<f64>,
    /// Fiber attenuation in dB/km.
    #[arg(long)]
    pub xi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct UsdDetectArgs {
    #[arg(long, value_parser = serde_enum::<Variant>)]
    pub variant: Option<Variant>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_deg: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub pulses: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = serde_enum::<SamplingMode>)]
    pub sampling: Option<SamplingMode>,
    #[arg(long)]
    pub z_threshold: Option<f64>,
    #[arg(long)]
    pub expected_loss: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn attack_defaults(kind: &str) -> Result<Value> {
    Ok(match kind {
        "identity" => json!({"kind": kind}),
        "depolarizing_lossy" => json!({"kind": kind, "loss": 0.0, "depol": 0.0}),
        "usd_attack" => json!({"kind": kind, "gamma": 1.0}),
        "restricted_pauli_loss" => {
            json!({"kind": kind, "qx": 0.0, "qy": 0.0, "qz": 0.0, "lam0": 0.0, "lam1": 0.0})
        }
        other => return Err(LabError::config(format!("unknown attack kind {other:?}"))),
    })
}

impl SimulateArgs {
    fn apply(self, c: &mut SimulateConfig) -> Result<()> {
        set(&mut c.variant, self.variant);
        set(&mut c.theta_deg, self.theta_deg);
        set(&mut c.pulses, self.pulses);
        set(&mut c.seed, self.seed);
        set(&mut c.sampling, self.sampling);
        set(&mut c.estimator, self.estimator);

        let mut attack = serde_json::to_value(c.attack)?;
        if let Some(kind) = &self.attack {
            if attack["kind"] != Value::String(kind.clone()) {
                attack = attack_defaults(kind)?;
            }
        }
        let fields = [
            ("loss", self.loss),
            ("depol", self.depol),
            ("gamma", self.gamma),
            ("qx", self.qx),
            ("qy", self.qy),
            ("qz", self.qz),
            ("lam0", self.lam0),
            ("lam1", self.lam1),
        ];
        let obj = attack.as_object_mut().expect("attack serializes to an object");
        for (name, v) in fields {
            if let Some(v) = v {
                obj.insert(name.to_string(), json!(v));
            }
        }
        c.attack = serde_json::from_value(attack).map_err(|e| LabError::config(format!("attack: {e}")))?;
        Ok(())
    }
}

impl SweepLossArgs {
    fn apply(self, c: &mut SweepLossConfig) {
        set(&mut c.theta_deg, self.theta_deg);
        set(&mut c.depol, self.depol);
        set(&mut c.losses, self.losses);
        set(&mut c.tally, self.tally);
        if self.pulses.is_some() {
            c.pulses = self.pulses;
        }
        set(&mut c.seed, self.seed);
    }
}

impl SweepAngleArgs {
    fn apply(self, c: &mut SweepAngleConfig) {
        set(&mut c.depol, self.depol);
        set(&mut c.theta_start_deg, self.theta_start_deg);
        set(&mut c.theta_stop_deg, self.theta_stop_deg);
        set(&mut c.theta_step_deg, self.theta_step_deg);
        set(&mut c.eta_db, self.eta_db);
        set(&mut c.tally, self.tally);
        if self.pulses.is_some() {
            c.pulses = self.pulses;
        }
        set(&mut c.seed, self.seed);
    }
}

impl UsdDetectArgs {
    fn apply(self, c: &mut UsdDetectConfig) {
        set(&mut c.variant, self.variant);
        set(&mut c.theta_deg, self.theta_deg);
        set(&mut c.gamma, self.gamma);
        set(&mut c.pulses, self.pulses);
        set(&mut c.seed, self.seed);
        set(&mut c.sampling, self.sampling);
        set(&mut c.z_threshold, self.z_threshold);
        if self.expected_loss.is_some() {
            c.expected_loss = self.expected_loss;
        }
    }
}

fn base<T: Default>(loaded: Option<RunConfig>, pick: fn(RunConfig) -> Option<T>, name: &str) -> Result<T> {
    match loaded {
        None => Ok(T::default()),
        Some(c) => {
            let found = c.name();
            pick(c).ok_or_else(|| LabError::config(format!("config file is for {found:?}, not {name:?}")))
        }
    }
}

/// Builds the run config from the parsed command line.
pub fn build_config(cli: Cli) -> Result<RunConfig> {
    let loaded = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let mut config = match cli.command {
        Command::Simulate(a) => {
            let mut c = base(loaded, |c| if let RunConfig::Simulate(c) = c { Some(c) } else { None }, "simulate")?;
            a.apply(&mut c)?;
            RunConfig::Simulate(c)
        }
        Command::SweepLoss(a) => {
            let mut c = base(loaded, |c| if let RunConfig::SweepLoss(c) = c { Some(c) } else { None }, "sweep-loss")?;
            a.apply(&mut c);
            RunConfig::SweepLoss(c)
        }
        Command::SweepAngle(a) => {
            let mut c =
                base(loaded, |c| if let RunConfig::SweepAngle(c) = c { Some(c) } else { None }, "sweep-angle")?;
            a.apply(&mut c);
            RunConfig::SweepAngle(c)
        }
        Command::Thresholds(a) => {
            let mut c: ThresholdsConfig =
                base(loaded, |c| if let RunConfig::Thresholds(c) = c { Some(c) } else { None }, "thresholds")?;
            set(&mut c.theta_deg, a.theta_deg);
            RunConfig::Thresholds(c)
        }
        Command::Distance(a) => {
            let mut c: DistanceConfig =
                base(loaded, |c| if let RunConfig::Distance(c) = c { Some(c) } else { None }, "distance")?;
            set(&mut c.p_star, a.p_star);
            set(&mut c.hardware.p_dark, a.p_dark);
            set(&mut c.hardware.eta_det, a.eta_det);
            set(&mut c.hardware.xi, a.xi);
            RunConfig::Distance(c)
        }
        Command::UsdDetect(a) => {
            let mut c = base(loaded, |c| if let RunConfig::UsdDetect(c) = c { Some(c) } else { None }, "usd-detect")?;
            a.apply(&mut c);
            RunConfig::UsdDetect(c)
        }
    };
    let out = config.output_mut();
    set(&mut out.format, cli.format);
    if cli.out.is_some() {
        out.path = cli.out;
    }
    Ok(config)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parses `args`, runs the command, writes the report and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let workers = cli.workers.unwrap_or_else(default_workers);
    let result = build_config(cli).and_then(|c| execute(c, workers)).and_then(|exec| {
        let path = output::emit(&exec.config, &exec.payload)?;
        Ok((exec.exit_code, path))
    });
    match result {
        Ok((code, path)) => {
            if let Some(p) = path {
                eprintln!("wrote {}", p.display());
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
