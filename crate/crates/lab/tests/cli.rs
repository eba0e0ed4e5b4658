use std::path::Path;
use std::process::{Command, Output};

use b92_lab::config::RunConfig;
use b92_lab::output::parse_csv_table;

fn b92lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_b92lab"))
        .args(args)
        .env_remove("B92LAB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json report")
}

const SIMULATE: &[&str] = &[
    "simulate",
    "--variant",
    "b92bar",
    "--theta-deg",
    "60",
    "--loss",
    "0.3",
    "--depol",
    "0.01",
    "--pulses",
    "1000000",
    "--seed",
    "7",
];

#[test]
fn simulate_example_has_positive_gain() {
    let out = b92lab(SIMULATE);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["tool"], "b92lab");
    assert_eq!(v["config"]["seed"], 7);
    assert!(v["result"]["estimate"]["gain"].as_f64().unwrap() > 0.0);
    assert_eq!(v["result"]["tally"]["n_total"], 1_000_000);
}

#[test]
fn reruns_are_byte_identical_for_any_worker_count() {
    let reference = b92lab(SIMULATE).stdout;
    for w in ["1", "4", "8"] {
        let mut args = SIMULATE.to_vec();
        args.extend(["--workers", w]);
        assert!(b92lab(&args).stdout == reference, "workers = {w}");
    }
}

#[test]
fn domain_errors_exit_1() {
    let out = b92lab(&["simulate", "--theta-deg", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert_eq!(b92lab(&["simulate", "--loss", "1.5"]).status.code(), Some(1));
    assert_eq!(b92lab(&["sweep-angle", "--theta-step-deg", "0"]).status.code(), Some(1));
    assert_eq!(b92lab(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn infeasible_estimate_exits_2() {
    let out = b92lab(&["simulate", "--attack", "usd_attack", "--pulses", "200000"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["result"]["estimate"]["feasible"], false);
    assert_eq!(v["result"]["detection"]["verdict"], "attack_detected");
}

#[test]
fn csv_schema_round_trip() {
    let out = b92lab(&["thresholds", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let (config, table) = parse_csv_table(&text).unwrap();
    assert_eq!(table.columns, ["theta_deg", "p_star", "p_star_percent"]);
    assert_eq!(table.rows.len(), 9);
    assert!(!text.contains(';'));
    let RunConfig::Thresholds(c) = config else { panic!() };
    assert_eq!(c.theta_deg.len(), 9);
}

#[test]
fn report_reruns_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = b92lab(&["distance", "--p-star", "0.05,0.1"]);
    assert_eq!(first.status.code(), Some(0));
    let report = dir.path().join("distance.json");
    std::fs::write(&report, &first.stdout).unwrap();
    let again = b92lab(&["distance", "--config", report.to_str().unwrap()]);
    assert_eq!(again.stdout, first.stdout);
    // a flag still overrides the loaded config
    let changed = b92lab(&["distance", "--config", report.to_str().unwrap(), "--xi", "0.3"]);
    assert_eq!(json(&changed)["config"]["hardware"]["xi"], 0.3);
    assert_eq!(json(&changed)["config"]["p_star"][1], 0.1);
    // wrong subcommand for this config
    let wrong = b92lab(&["thresholds", "--config", report.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn unknown_config_keys_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"command": "distance", "p_star": [0.1], "fibre": 3}"#).unwrap();
    let out = b92lab(&["distance", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_b92lab"))
        .args(["thresholds", "--format", "csv", "--theta-deg", "30,60"])
        .env("B92LAB_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let file = dir.path().join("thresholds.csv");
    let (_, table) = parse_csv_table(&std::fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(table.column("theta_deg").unwrap(), vec![30.0, 60.0]);

    let explicit = dir.path().join("nested").join("t.json");
    let out = b92lab(&["thresholds", "--out", explicit.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(Path::new(&explicit).exists());
}

#[test]
fn sweep_loss_columns() {
    let out = b92lab(&["sweep-loss", "--losses", "0,0.5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let (_, t) = parse_csv_table(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(
        t.columns,
        [
            "loss",
            "lambda_b92_worstcase",
            "g_b92_worstcase",
            "lambda_b92bar_decoyinformed",
            "g_b92bar_decoyinformed"
        ]
    );
    assert_eq!(t.column("loss").unwrap(), vec![0.0, 0.5]);
}

#[test]
fn sweep_angle_clips_and_labels() {
    let out = b92lab(&[
        "sweep-angle",
        "--theta-start-deg",
        "0",
        "--theta-stop-deg",
        "90",
        "--theta-step-deg",
        "45",
        "--eta-db",
        "0,10",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (_, t) = parse_csv_table(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(t.columns[2..], ["lambda_eta0db", "gain_eta0db", "lambda_eta10db", "gain_eta10db"]);
    assert_eq!(t.column("theta_deg").unwrap(), vec![1.0, 45.0, 89.0]);
    for row in &t.rows {
        let c = row[0].to_radians().cos();
        assert!((row[1] - c * c).abs() < 1e-15);
    }
}
