//! CLI behavior: exit codes, determinism of generated artifacts, config
//! file handling, and report re-aggregation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn itrack() -> Command {
    Command::new(env!("CARGO_BIN_EXE_itrack"))
}

fn echo_backend() -> &'static str {
    env!("CARGO_BIN_EXE_itrack-echo-backend")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("itrack-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.env("ITRACK_LOG", "quiet")
        .output()
        .expect("spawn itrack")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Structural JSON equality with a numeric tolerance.
fn assert_json_close(a: &serde_json::Value, b: &serde_json::Value, tol: f64) {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
        (Value::Array(xs), Value::Array(ys)) => {
            assert_eq!(xs.len(), ys.len());
            for (x, y) in xs.iter().zip(ys) {
                assert_json_close(x, y, tol);
            }
        }
        (Value::Object(xs), Value::Object(ys)) => {
            assert_eq!(xs.keys().collect::<Vec<_>>(), ys.keys().collect::<Vec<_>>());
            for (k, x) in xs {
                assert_json_close(x, &ys[k], tol);
            }
        }
        _ => assert_eq!(a, b),
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().to_string(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn synth_is_deterministic_per_seed() {
    let base = tmp_dir("synth-det");
    let a = base.join("a");
    let b = base.join("b");
    for out in [&a, &b] {
        let output = run(itrack()
            .args(["synth", "--preset", "smoke", "--seed", "9"])
            .arg("--out")
            .arg(out));
        assert_eq!(
            code(&output),
            0,
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_eq!(dir_bytes(&a).len(), 6);
}

#[test]
fn validate_exit_codes() {
    let dir = tmp_dir("validate");
    let output = run(itrack()
        .args(["synth", "--preset", "smoke", "--seed", "1"])
        .arg("--out")
        .arg(&dir));
    assert_eq!(code(&output), 0);

    // All valid: exit 0, silent stderr.
    let output = run(itrack().arg("validate").arg(&dir));
    assert_eq!(code(&output), 0);
    assert!(
        output.stderr.is_empty(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    // Corrupt one file among the valid ones: exit 1, only that file named.
    let victim = dir.join("smoke-other.json");
    let text = fs::read_to_string(&victim).unwrap();
    fs::write(
        &victim,
        text.replace("\"kind\": \"switch\"", "\"kind\": \"sideways\""),
    )
    .unwrap();
    let output = run(itrack().arg("validate").arg(&dir));
    assert_eq!(code(&output), 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("smoke-other.json"));
    assert!(!stderr.contains("smoke-surveillance.json"));

    // Missing file: exit 2 (I/O class).
    let output = run(itrack().arg("validate").arg(dir.join("nope.json")));
    assert_eq!(code(&output), 2);
}

#[test]
fn synth_rejects_invalid_spec_files() {
    let dir = tmp_dir("bad-spec");
    let spec = dir.join("spec.json");
    fs::write(&spec, r#"{"name": "x", "n_frames": "not-a-number"}"#).unwrap();
    let output = run(itrack()
        .arg("synth")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(dir.join("out")));
    assert_eq!(code(&output), 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("spec.json"));
}

#[test]
fn eval_rejects_unknown_ablation_before_running() {
    let dir = tmp_dir("bad-ablation");
    let out = dir.join("out");
    let output = run(itrack()
        .args([
            "eval",
            "--dataset",
            "preset:smoke",
            "--tracker",
            "synthetic:oracle",
        ])
        .args(["--mode", "imat", "--grounder", "synthetic:scripted"])
        .args(["--ablation", "no-everything"])
        .arg("--out")
        .arg(&out));
    assert_eq!(code(&output), 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("no-everything"));
    assert!(!out.exists(), "nothing should run or be written");
}

#[test]
fn eval_oracle_report_values() {
    let dir = tmp_dir("oracle-eval");
    let out = dir.join("out");
    let output = run(itrack()
        .args([
            "eval",
            "--dataset",
            "preset:smoke",
            "--tracker",
            "synthetic:oracle",
        ])
        .args([
            "--mode",
            "gt-reinit",
            "--prompt-effect",
            "next-frame",
            "--seed",
            "3",
        ])
        .arg("--out")
        .arg(&out));
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let scalars = &report["overall"]["scalars"];
    assert_eq!(scalars["interactive_score"], serde_json::json!(1));
    assert_eq!(scalars["responsiveness"], serde_json::json!(1));
    assert_eq!(scalars["perception_accuracy"], serde_json::json!(1));
    assert_eq!(scalars["auc"], serde_json::json!(0.952381));
    // CSV: header plus one row per sequence.
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    // Curve bundles exist for the overall bucket and all six scenarios.
    let curves = fs::read_dir(out.join("curves")).unwrap().count();
    assert_eq!(curves, 7 * 3);
}

#[test]
fn report_reaggregates_run_records() {
    let dir = tmp_dir("report");
    let out = dir.join("out");
    let output = run(itrack()
        .args([
            "eval",
            "--dataset",
            "preset:smoke",
            "--tracker",
            "synthetic:noisy:4",
        ])
        .args(["--mode", "gt-reinit", "--seed", "11"])
        .arg("--out")
        .arg(&out));
    assert_eq!(code(&output), 0);

    let rebuilt = dir.join("rebuilt");
    let output = run(itrack()
        .arg("report")
        .arg("--records")
        .arg(&out)
        .arg("--out")
        .arg(&rebuilt));
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    // Stored per-sequence values are quantized to six decimals, so the
    // re-aggregated report matches within one quantization step.
    let original: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let rebuilt_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rebuilt.join("report.json")).unwrap()).unwrap();
    assert_json_close(&original, &rebuilt_json, 2e-6);

    // Empty records directory: exit 1.
    let empty = dir.join("empty");
    fs::create_dir_all(&empty).unwrap();
    let output = run(itrack()
        .arg("report")
        .arg("--records")
        .arg(&empty)
        .arg("--out")
        .arg(dir.join("nothing")));
    assert_eq!(code(&output), 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tmp_dir("config");
    let out_flag = dir.join("from-flag");
    let config = dir.join("run.conf");
    fs::write(
        &config,
        format!(
            "# evaluation defaults\n\
             dataset = preset:smoke\n\
             tracker = synthetic:oracle\n\
             mode = gt-reinit\n\
             prompt-effect = next-frame\n\
             seed = 4\n\
             out = {}\n",
            dir.join("from-config").display()
        ),
    )
    .unwrap();
    let output = run(itrack()
        .arg("eval")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_flag));
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(
        out_flag.join("report.json").exists(),
        "flag overrides config out"
    );
    assert!(!dir.join("from-config").exists());
}

#[test]
fn ablation_flag_lowers_interactive_score() {
    let dir = tmp_dir("ablation-cli");
    let mut scores = Vec::new();
    for (label, extra) in [("full", None), ("no-cam", Some("no-cam"))] {
        let out = dir.join(label);
        let mut cmd = itrack();
        cmd.args([
            "eval",
            "--dataset",
            "preset:ablation-suite",
            // A stable tracker that sheds its init offset: arbitration keeps
            // its clean box, blind adoption re-injects grounder noise.
            "--tracker",
            "synthetic:drift:1000000,0,0,0.92",
            "--grounder",
            "synthetic:scripted:3",
            "--mode",
            "imat",
            "--seed",
            "42",
            "--memory-epsilon",
            "0.02",
        ]);
        if let Some(ablation) = extra {
            cmd.args(["--ablation", ablation]);
        }
        let output = run(cmd.arg("--out").arg(&out));
        assert_eq!(
            code(&output),
            0,
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        scores.push(
            report["overall"]["scalars"]["interactive_score"]
                .as_f64()
                .unwrap(),
        );
    }
    assert!(
        scores[1] < scores[0],
        "no-cam should lower the interactive score: {scores:?}"
    );
}

#[test]
fn exec_grounder_round_trips() {
    let dir = tmp_dir("exec-grounder");
    let out = dir.join("out");
    let output = run(itrack()
        .args([
            "eval",
            "--dataset",
            "preset:smoke",
            "--mode",
            "imat",
            "--seed",
            "2",
        ])
        .args(["--tracker", "synthetic:oracle"])
        .arg("--grounder")
        .arg(format!("exec:{} --box=10,10,30,30", echo_backend()))
        .arg("--out")
        .arg(&out));
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(out.join("report.json").exists());
}

#[test]
fn metric_flags_reach_the_report() {
    let dir = tmp_dir("metric-flags");
    let out = dir.join("out");
    let output = run(itrack()
        .args([
            "eval",
            "--dataset",
            "preset:smoke",
            "--tracker",
            "synthetic:oracle",
        ])
        .args([
            "--mode",
            "gt-reinit",
            "--prompt-effect",
            "next-frame",
            "--seed",
            "5",
        ])
        .args(["--inclusive-success", "--require-switch-overlap"])
        .arg("--out")
        .arg(&out));
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    // Inclusive success lifts the oracle's AUC from 20/21 to exactly 1.
    assert_eq!(report["overall"]["scalars"]["auc"], serde_json::json!(1));
    assert_eq!(
        report["config"]["inclusive_success"],
        serde_json::json!(true)
    );
    assert_eq!(
        report["config"]["require_switch_overlap"],
        serde_json::json!(true)
    );
}
