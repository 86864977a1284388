//! Harness integration: scenario loading, artifact schemas, and report
//! self-consistency.

use std::path::{Path, PathBuf};

use mdp_confusion::harness::{
    frobenius_error, load_scenario, load_scenario_file, resolve_scenario, run_experiment,
    EstimatorSpec, HarnessError, RunReport,
};
use mdp_confusion::ConfusionMatrix64;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn temp_out(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("mdpc_io_{tag}"))
}

#[test]
fn all_shipped_scenarios_load() {
    for name in [
        "paper_example.json",
        "sim_common_stationary.json",
        "sim_distinct_stationary.json",
        "partition_threestate.json",
    ] {
        let s = load_scenario(&scenario_path(name)).unwrap();
        assert!(s.mdp.actions() >= 2 || name.starts_with("partition"));
        assert!(!s.digest.is_empty());
    }
}

#[test]
fn parse_errors_carry_position_and_default_seed_is_echoed() {
    let dir = temp_out("parse");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\n  \"n\": 2,\n  broken\n}\n").unwrap();
    let err = load_scenario(&bad).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3"), "missing position info: {msg}");

    let s = load_scenario(&scenario_path("paper_example.json")).unwrap();
    assert_eq!(s.seed, 0, "omitted seed must default to 0");
}

#[test]
fn snapshot_csv_weights_sum_to_one_per_slice() {
    let mut file = load_scenario_file(&scenario_path("sim_distinct_stationary.json")).unwrap();
    file.estimator = EstimatorSpec::Bayes2 {
        steps: Some(300),
        grid_res: Some(15),
        particles: None,
    };
    file.snapshot_every = Some(100);
    file.output_dir = Some(temp_out("csv"));
    let scenario = resolve_scenario(file, "csv_check").unwrap();
    let report = run_experiment(&scenario).unwrap();
    assert!(report.frobenius_error.is_some());

    let csv = std::fs::read_to_string(scenario.output_dir.join("snapshots.csv")).unwrap();
    let mut sums: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    for line in csv.lines().skip(1) {
        let mut cols = line.split(',');
        let t: u64 = cols.next().unwrap().parse().unwrap();
        let weight: f64 = cols.nth(2).unwrap().parse().unwrap();
        *sums.entry(t).or_insert(0.0) += weight;
    }
    assert_eq!(sums.len(), 4, "snapshots at 0, 100, 200, 300");
    for (t, sum) in sums {
        assert!((sum - 1.0).abs() <= 1e-9, "slice {t} sums to {sum}");
    }

    // every artifact listed in the report exists next to it
    for name in &report.artifacts {
        assert!(
            scenario.output_dir.join(name).exists(),
            "missing artifact {name:?}"
        );
    }
}

#[test]
fn report_error_metric_recomputes_from_the_emitted_matrix() {
    let mut file = load_scenario_file(&scenario_path("paper_example.json")).unwrap();
    file.output_dir = Some(temp_out("recompute"));
    let scenario = resolve_scenario(file, "paper_example").unwrap();
    run_experiment(&scenario).unwrap();

    let body = std::fs::read_to_string(scenario.output_dir.join("summary.json")).unwrap();
    let parsed: RunReport = serde_json::from_str(&body).unwrap();
    let idx = parsed.selected.unwrap_or(0);
    let rows = &parsed.candidates[idx].matrix;
    let n = rows.len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let emitted =
        ConfusionMatrix64::new(ndarray::Array2::from_shape_vec((n, n), flat).unwrap()).unwrap();
    let recomputed = frobenius_error(&emitted, &scenario.confusion).unwrap();
    let reported = parsed.frobenius_error.unwrap();
    assert!(
        (recomputed - reported).abs() <= 1e-12,
        "report says {reported}, recomputed {recomputed}"
    );
}

#[test]
fn ensemble_runs_emit_the_support_sidecar() {
    let mut file = load_scenario_file(&scenario_path("sim_distinct_stationary.json")).unwrap();
    file.estimator = EstimatorSpec::Bayes1 {
        steps: Some(200),
        grid_res: None,
        particles: Some(64),
    };
    file.snapshot_every = Some(100);
    file.output_dir = Some(temp_out("ensemble"));
    let scenario = resolve_scenario(file, "ensemble_check").unwrap();
    run_experiment(&scenario).unwrap();
    let sidecar = scenario.output_dir.join("support.json");
    assert!(sidecar.exists());
    let body = std::fs::read_to_string(sidecar).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 64);

    let csv = std::fs::read_to_string(scenario.output_dir.join("snapshots.csv")).unwrap();
    assert!(csv.starts_with("t,point_id,weight"));
}

#[test]
fn estimator_failures_are_embedded_in_the_report() {
    // an impossibly tight intersection tolerance forces a failure
    let mut file = load_scenario_file(&scenario_path("partition_threestate.json")).unwrap();
    file.estimator = EstimatorSpec::Partition {
        steps: Some(2_000),
        burn_in: Some(100),
        exact_q: Some(false),
        intersect_tol: Some(1e-15),
        abort_on_violation: None,
    };
    file.output_dir = Some(temp_out("failure"));
    let scenario = resolve_scenario(file, "failing").unwrap();
    let err = run_experiment(&scenario).unwrap_err();
    assert!(matches!(err, HarnessError::Estimator(_)), "got {err:?}");
    let body = std::fs::read_to_string(scenario.output_dir.join("summary.json")).unwrap();
    let parsed: RunReport = serde_json::from_str(&body).unwrap();
    assert!(parsed.error.is_some(), "report must embed the failure");
}
