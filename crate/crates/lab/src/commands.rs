//! Command implementations. Each takes its config record and returns the
//! report payload plus an exit code; nothing here touches files.

use b92_core::analytic::{depolarizing_threshold_degrees, working_distance};
use b92_core::channel::AttackModel;
use b92_core::estimation::{estimate, EstimateReport, EstimatorMode, OptimizerSettings};
use b92_core::montecarlo::{expected_tally, run_trial, usd_detection_test, ProtocolParams, TallySheet, Variant};
use b92_core::protocol_states::Angle;
use serde_json::json;

use crate::config::{
    DistanceConfig, EstimatorChoice, RunConfig, SimulateConfig, SweepAngleConfig, SweepLossConfig, TallyMode,
    ThresholdsConfig, UsdDetectConfig,
};
use crate::output::{Payload, Table};
use crate::runner::{map_ordered, run_trial_parallel};
use crate::{LabError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

/// Default z threshold for the detection summary attached to `simulate`.
const SIMULATE_Z: f64 = 5.0;
/// Lowest and highest angle a sweep evaluates, in degrees.
const SWEEP_THETA_MIN: f64 = 1.0;
const SWEEP_THETA_MAX: f64 = 89.0;

#[derive(Debug, Clone)]
pub struct Execution {
    /// Resolved config, as embedded in the report.
    pub config: RunConfig,
    pub payload: Payload,
    pub exit_code: i32,
}

pub fn execute(config: RunConfig, workers: usize) -> Result<Execution> {
    let config = config.resolved();
    let (payload, exit_code) = match &config {
        RunConfig::Simulate(c) => simulate(c, workers)?,
        RunConfig::SweepLoss(c) => (sweep_loss(c, workers)?, EXIT_OK),
        RunConfig::SweepAngle(c) => (sweep_angle(c, workers)?, EXIT_OK),
        RunConfig::Thresholds(c) => (thresholds(c, workers)?, EXIT_OK),
        RunConfig::Distance(c) => (distance(c)?, EXIT_OK),
        RunConfig::UsdDetect(c) => (usd_detect(c, workers)?, EXIT_OK),
    };
    Ok(Execution {
        config,
        payload,
        exit_code,
    })
}

pub fn estimator_for(choice: EstimatorChoice, variant: Variant) -> EstimatorMode {
    match choice {
        EstimatorChoice::Auto => match variant {
            Variant::B92 => EstimatorMode::WorstCase,
            Variant::B92bar => EstimatorMode::DecoyInformed,
            Variant::B92dbar => EstimatorMode::Direct,
        },
        EstimatorChoice::WorstCase => EstimatorMode::WorstCase,
        EstimatorChoice::DecoyInformed => EstimatorMode::DecoyInformed,
        EstimatorChoice::Direct => EstimatorMode::Direct,
    }
}

fn simulate(c: &SimulateConfig, workers: usize) -> Result<(Payload, i32)> {
    let a = Angle::from_degrees(c.theta_deg)?;
    c.attack.validate()?;
    let params = ProtocolParams::new(c.variant, a, c.pulses, c.seed)?.with_sampling(c.sampling);
    let tally = run_trial_parallel(&params, &c.attack, workers)?;
    let mode = estimator_for(c.estimator, c.variant);
    let report = estimate(&tally, a, mode, &c.optimizer)?;
    let detection = usd_detection_test(&tally, None, SIMULATE_Z).ok();
    let code = if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE };
    let doc = json!({ "tally": tally, "estimate": report, "detection": detection });
    Ok((Payload::Document(doc), code))
}

fn tally_for(
    variant: Variant,
    a: Angle,
    model: &AttackModel,
    mode: TallyMode,
    pulses: u64,
    seed: u64,
) -> Result<TallySheet> {
    let params = ProtocolParams::new(variant, a, pulses, seed)?;
    Ok(match mode {
        TallyMode::Expected => expected_tally(&params, model)?,
        TallyMode::MonteCarlo => run_trial(&params, model)?,
    })
}

fn bound(
    variant: Variant,
    mode: EstimatorMode,
    a: Angle,
    model: &AttackModel,
    tally: (TallyMode, u64, u64),
    settings: &OptimizerSettings,
) -> Result<EstimateReport> {
    let t = tally_for(variant, a, model, tally.0, tally.1, tally.2)?;
    Ok(estimate(&t, a, mode, settings)?)
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(LabError::config(format!("{name} = {v} is outside [0, 1]")))
    }
}

fn sweep_loss(c: &SweepLossConfig, workers: usize) -> Result<Payload> {
    let a = Angle::from_degrees(c.theta_deg)?;
    check_unit("depol", c.depol)?;
    c.optimizer.validate()?;
    for &l in &c.losses {
        check_unit("loss", l)?;
    }
    let pulses = c.pulses.unwrap_or(c.tally.default_pulses());
    let points: Vec<(usize, f64)> = c.losses.iter().copied().enumerate().collect();
    let rows = map_ordered(points, workers, |(i, loss)| {
        let m = AttackModel::DepolarizingLossy { loss, depol: c.depol };
        let tally = (c.tally, pulses, c.seed + i as u64);
        let wc = bound(Variant::B92, EstimatorMode::WorstCase, a, &m, tally, &c.optimizer)?;
        let di = bound(Variant::B92bar, EstimatorMode::DecoyInformed, a, &m, tally, &c.optimizer)?;
        Ok(vec![loss, wc.lambda_ph, wc.gain, di.lambda_ph, di.gain])
    })?;
    let mut t = Table::new(
        [
            "loss",
            "lambda_b92_worstcase",
            "g_b92_worstcase",
            "lambda_b92bar_decoyinformed",
            "g_b92bar_decoyinformed",
        ]
        .map(String::from)
        .to_vec(),
    );
    rows.into_iter().for_each(|r| t.push(r));
    Ok(Payload::Table(t))
}

/// Loss of a channel with attenuation `db`.
pub fn loss_from_db(db: f64) -> f64 {
    1.0 - 10f64.powf(-db / 10.0)
}

/// Grid `start, start + step, …, ≤ stop`, clipped to `[1°, 89°]`.
pub fn angle_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start.is_finite() && stop.is_finite() && start <= stop) {
        return Err(LabError::config(format!(
            "invalid angle grid {start}..{stop} step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n)
        .map(|k| (start + k as f64 * step).clamp(SWEEP_THETA_MIN, SWEEP_THETA_MAX))
        .collect();
    grid.dedup();
    Ok(grid)
}

fn sweep_angle(c: &SweepAngleConfig, workers: usize) -> Result<Payload> {
    check_unit("depol", c.depol)?;
    c.optimizer.validate()?;
    if c.eta_db.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
        return Err(LabError::config("eta_db values must be finite and non-negative"));
    }
    let grid = angle_grid(c.theta_start_deg, c.theta_stop_deg, c.theta_step_deg)?;
    let pulses = c.pulses.unwrap_or(c.tally.default_pulses());
    let ne = c.eta_db.len();
    let points: Vec<usize> = (0..grid.len() * ne).collect();
    let values = map_ordered(points, workers, |k| {
        let (i, j) = (k / ne, k % ne);
        let a = Angle::from_degrees(grid[i])?;
        let m = AttackModel::DepolarizingLossy {
            loss: loss_from_db(c.eta_db[j]),
            depol: c.depol,
        };
        let r = bound(
            Variant::B92bar,
            EstimatorMode::DecoyInformed,
            a,
            &m,
            (c.tally, pulses, c.seed + k as u64),
            &c.optimizer,
        )?;
        Ok((r.lambda_ph, r.gain))
    })?;
    let mut columns = vec!["theta_deg".to_string(), "cos2_theta".to_string()];
    for db in &c.eta_db {
        columns.push(format!("lambda_eta{db}db"));
        columns.push(format!("gain_eta{db}db"));
    }
    let mut t = Table::new(columns);
    for (i, &theta) in grid.iter().enumerate() {
        let cos = theta.to_radians().cos();
        let mut row = vec![theta, cos * cos];
        for &(l, g) in &values[i * ne..(i + 1) * ne] {
            row.extend([l, g]);
        }
        t.push(row);
    }
    Ok(Payload::Table(t))
}

fn thresholds(c: &ThresholdsConfig, workers: usize) -> Result<Payload> {
    let rows = map_ordered(c.theta_deg.clone(), workers, |theta| {
        let p = depolarizing_threshold_degrees(theta)?;
        Ok(vec![theta, p, 100.0 * p])
    })?;
    let mut t = Table::new(["theta_deg", "p_star", "p_star_percent"].map(String::from).to_vec());
    rows.into_iter().for_each(|r| t.push(r));
    Ok(Payload::Table(t))
}

fn distance(c: &DistanceConfig) -> Result<Payload> {
    let mut t = Table::new(["p_star", "distance_km"].map(String::from).to_vec());
    for &p in &c.p_star {
        t.push(vec![p, working_distance(p, &c.hardware)?]);
    }
    Ok(Payload::Table(t))
}

fn usd_detect(c: &UsdDetectConfig, workers: usize) -> Result<Payload> {
    let a = Angle::from_degrees(c.theta_deg)?;
    let model = AttackModel::UsdAttack { gamma: c.gamma };
    model.validate()?;
    if !(c.z_threshold > 0.0 && c.z_threshold.is_finite()) {
        return Err(LabError::config(format!("z_threshold = {} must be positive", c.z_threshold)));
    }
    let params = ProtocolParams::new(c.variant, a, c.pulses, c.seed)?.with_sampling(c.sampling);
    let tally = run_trial_parallel(&params, &model, workers)?;
    let detection = usd_detection_test(&tally, c.expected_loss, c.z_threshold)?;
    Ok(Payload::Document(json!({ "tally": tally, "detection": detection })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_clipped() {
        assert_eq!(angle_grid(0.0, 90.0, 45.0).unwrap(), vec![1.0, 45.0, 89.0]);
        assert_eq!(angle_grid(1.0, 89.0, 4.0).unwrap().len(), 23);
        assert!(angle_grid(10.0, 5.0, 1.0).is_err());
        assert!(angle_grid(1.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn db_to_loss() {
        assert_eq!(loss_from_db(0.0), 0.0);
        assert!((loss_from_db(10.0) - 0.9).abs() < 1e-12);
        assert!((loss_from_db(30.0) - 0.999).abs() < 1e-12);
    }

    #[test]
    fn auto_estimator() {
        assert_eq!(estimator_for(EstimatorChoice::Auto, Variant::B92), EstimatorMode::WorstCase);
        assert_eq!(estimator_for(EstimatorChoice::Auto, Variant::B92dbar), EstimatorMode::Direct);
        assert_eq!(estimator_for(EstimatorChoice::Direct, Variant::B92), EstimatorMode::Direct);
    }

    #[test]
    fn thresholds_table() {
        let e = execute(RunConfig::Thresholds(ThresholdsConfig::default()), 2).unwrap();
        let Payload::Table(t) = e.payload else { panic!() };
        assert_eq!(t.rows.len(), 9);
        let p = t.column("p_star").unwrap();
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn bad_angle_is_an_error() {
        let c = SimulateConfig {
            theta_deg: 0.0,
            ..Default::default()
        };
        assert!(execute(RunConfig::Simulate(c), 1).is_err());
    }
}
