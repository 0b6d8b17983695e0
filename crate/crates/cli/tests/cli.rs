//! End-to-end checks of the command-line surface: exit codes, error
//! JSON, and determinism of the run documents.

use std::path::PathBuf;
use std::process::{Command, Output};

fn mpgeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpgeo"))
        .args(args)
        .env_remove("MPGEO_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

#[test]
fn validate_preset_succeeds() {
    let out = mpgeo(&["ops", "validate", "--preset", "heisenberg"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["run"]["result"]["q"], 4);
    assert_eq!(doc["run"]["result"]["valid"], true);
}

#[test]
fn validate_bad_spec_exits_one_and_names_check() {
    let dir = std::env::temp_dir().join("mpgeo-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad_spec.toml");
    std::fs::write(
        &path,
        r#"
            name = "bad"
            N = 3
            sigma = [2, 1, 1]
            fields = [["1","0","0"],["0","1","0"],["0","0","1"]]
        "#,
    )
    .unwrap();
    let out = mpgeo(&["ops", "validate", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let doc = stdout_json(&out);
    assert_eq!(doc["error"]["kind"], "validation");
    assert!(doc["error"]["message"].as_str().unwrap().contains("dilation"));
}

#[test]
fn classify_halfspace_domain() {
    let out = mpgeo(&[
        "mp",
        "classify",
        "--preset",
        "heisenberg",
        "--domain",
        "halfspace:v=1,0,0:h=0",
    ]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    let cls = &doc["run"]["result"]["classification"];
    assert_eq!(cls["verdict"], "MP_CERTIFIED");
    assert_eq!(cls["reason"], "COMPLEMENT_CONTAINS_HALFSPACE");
}

#[test]
fn classify_full_space_is_unknown() {
    let out = mpgeo(&["mp", "classify", "--preset", "grushin3", "--domain", "rn"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["run"]["result"]["classification"]["verdict"], "UNKNOWN");
}

#[test]
fn volume_reports_positive_omega() {
    let out = mpgeo(&["volume", "--preset", "grushin3", "--trials", "100"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert!(doc["run"]["result"]["omega_q"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["run"]["result"]["homogeneity"]["violations"], 0);
}

#[test]
fn run_documents_are_deterministic() {
    let args = [
        "gamma", "eval", "--preset", "heisenberg", "--x", "0,0,0", "--y", "1,0,0", "--budget",
        "light", "--seed", "42",
    ];
    let a = stdout_json(&mpgeo(&args));
    let b = stdout_json(&mpgeo(&args));
    // The deterministic content is everything under "run".
    assert_eq!(
        serde_json::to_string(&a["run"]).unwrap(),
        serde_json::to_string(&b["run"]).unwrap()
    );
}

#[test]
fn dist_reports_estimate() {
    let out = mpgeo(&[
        "dist", "--preset", "heisenberg", "--x", "0,0,0", "--y", "1,0,0", "--segments", "6",
        "--restarts", "2",
    ]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    let upper = doc["run"]["result"]["upper"].as_f64().unwrap();
    assert!(upper > 0.8 && upper < 1.2, "upper {upper}");
    assert_eq!(doc["run"]["result"]["converged"], true);
}

#[test]
fn cover_check_reads_ball_file() {
    let dir = std::env::temp_dir().join("mpgeo-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("balls.json");
    let balls: Vec<serde_json::Value> = (1..=64)
        .map(|n| {
            serde_json::json!({
                "center": [1.0, 0.0, 0.0],
                "radius": 0.5_f64.powi(n),
            })
        })
        .collect();
    std::fs::write(&path, serde_json::to_string(&balls).unwrap()).unwrap();
    let out = mpgeo(&[
        "cover", "check", "--preset", "heisenberg", "--file", path.to_str().unwrap(), "--p",
        "2.0",
    ]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["run"]["result"]["verdict"], "BOUNDED_EVIDENCE");
}

#[test]
fn cartan_requires_calibration_exit_two() {
    let dir = std::env::temp_dir().join("mpgeo-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("measure.json");
    std::fs::write(&path, r#"{"atoms": [[[1.0, 0.0, 0.0], 1.0]]}"#).unwrap();
    let out = mpgeo(&[
        "cartan", "--preset", "heisenberg", "--measure", path.to_str().unwrap(), "--h", "1.0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let doc = stdout_json(&out);
    assert_eq!(doc["error"]["kind"], "numerical");

    // With a calibration artifact the construction runs.
    let cal = dir.join("calibration.json");
    std::fs::write(
        &cal,
        r#"{"preset":"heisenberg","c1_hat":2.0,"c_hat":3.0,"theta_hat":0.16666,"run_id":"test"}"#,
    )
    .unwrap();
    let out2 = mpgeo(&[
        "cartan",
        "--preset",
        "heisenberg",
        "--measure",
        path.to_str().unwrap(),
        "--h",
        "1.0",
        "--calibration",
        cal.to_str().unwrap(),
        "--coverage-samples",
        "40",
    ]);
    assert!(out2.status.success(), "{}", String::from_utf8_lossy(&out2.stdout));
    let doc2 = stdout_json(&out2);
    let sum = doc2["run"]["result"]["cover"]["radius_power_sum"].as_f64().unwrap();
    let bound = doc2["run"]["result"]["cover"]["radius_power_bound"].as_f64().unwrap();
    assert!(sum < bound);
}

#[test]
fn fd_verify_small_grid() {
    let out = mpgeo(&[
        "fd",
        "verify",
        "--preset",
        "grushin3",
        "--base-nodes",
        "9",
        "--domain",
        "halfspace:v=1,0,0:h=0",
        "--far-value=-0.01",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let doc = stdout_json(&out);
    assert_eq!(doc["run"]["result"]["mp_check"]["premise_holds"], true);
    assert_eq!(
        doc["run"]["result"]["mp_check"]["violations"].as_array().unwrap().len(),
        0
    );
}

#[test]
fn out_file_is_written() {
    let dir = std::env::temp_dir().join("mpgeo-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path: PathBuf = dir.join("run_doc.json");
    let _ = std::fs::remove_file(&path);
    let out = mpgeo(&[
        "ops", "validate", "--preset", "grushin3", "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["run"]["result"]["q"], 4);
}
