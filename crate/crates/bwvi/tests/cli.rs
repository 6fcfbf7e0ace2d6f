//! Black-box tests of the `bwvi` binary: exit codes, artifact plumbing, and
//! the JSON emitted by the diagnostic subcommands.

use std::path::Path;
use std::process::{Command, Output};

use bwvi::harness::TargetSpec;

fn bwvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bwvi"))
        .args(args)
        .env("BWVI_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn unknown_preset_is_a_spec_error() {
    let out = bwvi(&["run", "--preset", "nosuch"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown preset"), "stderr was: {err}");
}

#[test]
fn usage_errors_go_to_stderr_with_nonzero_exit() {
    let out = bwvi(&["run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--preset"));

    let out = bwvi(&["diag", "variance", "--dim", "2"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!out.stderr.is_empty());

    let out = bwvi(&["run", "--preset", "gaussian-d10", "--config", "x.json"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn preset_run_with_overrides_populates_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("e1");
    let out = bwvi(&[
        "run",
        "--preset",
        "gaussian-d10",
        "--out",
        out_dir.to_str().unwrap(),
        "--seeds",
        "2",
        "--steps",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("manifest.json").is_file());
    assert!(out_dir.join("aggregate.csv").is_file());
    let traces = std::fs::read_dir(out_dir.join("traces")).unwrap().count();
    assert_eq!(traces, 6, "3 algorithms x 2 seeds");
}

fn write_config(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

#[test]
fn config_file_runs_and_bad_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("spec.json");
    write_config(
        &config,
        r#"{
            "name": "tiny",
            "target": {"kind": "gaussian", "data_seed": 5},
            "dims": [2],
            "algorithms": [
                {"label": "svrgvi", "algorithm": "svrgvi", "eta": 1.0, "steps": 4,
                 "c_policy": {"fixed": {"c": 0.9}}}
            ],
            "replicate_seeds": [1, 2],
            "metrics": ["kl"]
        }"#,
    );
    let out_dir = dir.path().join("tiny-out");
    let out = bwvi(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("traces").join("svrgvi-d2-seed1.csv").is_file());

    let garbled = dir.path().join("garbled.json");
    write_config(&garbled, "{not json");
    let out = bwvi(&["run", "--config", garbled.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // Well-formed JSON, contradictory contents: sgvi may not carry a
    // control-variate policy.
    let invalid = dir.path().join("invalid.json");
    write_config(
        &invalid,
        r#"{
            "name": "bad",
            "target": {"kind": "gaussian", "data_seed": 5},
            "dims": [2],
            "algorithms": [
                {"label": "sgvi", "algorithm": "sgvi", "eta": 1.0, "steps": 4,
                 "c_policy": {"fixed": {"c": 0.9}}}
            ],
            "metrics": ["kl"]
        }"#,
    );
    let out = bwvi(&["run", "--config", invalid.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

/// The variance diagnostic, pointed at a Gaussian target with the default
/// nearby reference state, must report a large reduction with c near 1.
#[test]
fn diag_variance_emits_a_variance_report() {
    let out = bwvi(&[
        "diag", "variance", "--target", "gaussian", "--dim", "2", "--data-seed", "7", "--c",
        "0.9", "--n", "4000",
    ]);
    let report = stdout_json(&out);
    let var_mc = report["var_mc"].as_f64().unwrap();
    let var_vr = report["var_vr"].as_f64().unwrap();
    assert!(var_mc > 0.0 && var_vr > 0.0);
    assert!(var_vr < var_mc / 5.0, "expected a clear reduction, got {var_vr} vs {var_mc}");
    assert_eq!(report["n_samples"].as_u64(), Some(4000));
    assert!(report["c_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn diag_bounds_reports_both_regimes() {
    let out = bwvi(&[
        "diag", "bounds", "--alpha", "0.5", "--beta", "1.0", "--eta", "0.001", "--steps", "200",
        "--dim", "4",
    ]);
    let v = stdout_json(&out);
    assert!(v["convex"].as_f64().unwrap() > 0.0);
    assert!(v["strongly_convex"].as_f64().unwrap() > 0.0);

    // Step size above the strongly convex precondition: that bound degrades
    // to an error entry while the convex one still evaluates.
    let out = bwvi(&[
        "diag", "bounds", "--alpha", "0.5", "--beta", "1.0", "--eta", "0.5", "--steps", "200",
        "--dim", "4",
    ]);
    let v = stdout_json(&out);
    assert!(v["convex"].as_f64().is_some());
    assert!(v["strongly_convex"]["error"].as_str().is_some());
}

#[test]
fn laplace_recovers_the_gaussian_mode() {
    let out = bwvi(&["laplace", "--target", "gaussian", "--dim", "3", "--data-seed", "7"]);
    let v = stdout_json(&out);
    let mean: Vec<f64> = v["mean"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();

    let (target, _) = TargetSpec::Gaussian { data_seed: 7 }.build(3).unwrap();
    let expected = target.optimum().unwrap().mean().clone();
    for (got, want) in mean.iter().zip(expected.iter()) {
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
    assert_eq!(v["cov"].as_array().unwrap().len(), 3);
}
