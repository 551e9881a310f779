use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use coalition_attrib_cli::{execute, load_config, prepare, Command as Job, ConfigError};

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_coalition-attrib"));
    c.env_remove("COALITION_ATTRIB_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn example(name: &str) -> String {
    examples().join(name).to_string_lossy().into_owned()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("{}")).unwrap_or(Value::Null)
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const UNIFORM: &str = r#"{
  "model": "x1 + x2",
  "data": {"parametric": {"laws": [
    {"name": "x1", "law": {"uniform": {"low": -1, "high": 2}}},
    {"name": "x2", "law": {"uniform": {"low": 0, "high": 3}}}
  ]}},
  "instance": {"values": {"x1": 0, "x2": 0}}
}"#;

#[test]
fn squared_normals_config_round_trips() {
    let cfg = load_config(examples().join("squared_normals.json")).unwrap();
    let p = prepare(cfg).unwrap();
    let out = execute(Job::Explain, &p).unwrap();
    let phi: Vec<f64> = serde_json::from_value(out.body["phi"].clone()).unwrap();
    assert!(
        (phi[0] + 1.0).abs() < 1e-6 && (phi[1] + 100.0).abs() < 1e-4,
        "{phi:?}"
    );
}

#[test]
fn explain_writes_json_report_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run(&[
        "explain",
        "--config",
        &example("uniform_sum.json"),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(o.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["command"], "explain");
    assert_eq!(doc["body"]["mode"], "marginal");
    assert!(doc["metadata"]["timestamp"].is_string());
    let names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 1, "temporary files left behind: {names:?}");
}

#[test]
fn csv_and_text_formats() {
    let o = run(&[
        "explain",
        "--config",
        &example("uniform_sum.json"),
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("feature,phi,se,mode,backend"));
    assert!(lines.next().unwrap().starts_with("x1,-0.4999999999999"));
    let o = run(&[
        "deltas",
        "--config",
        &example("piecewise_cancellation.json"),
        "--format",
        "text",
    ]);
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .contains("cancellation: yes"));
}

#[test]
fn missing_graph_is_a_config_error() {
    let o = run(&["explain", "--config", &example("causal_missing_graph.json")]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "config");
    assert_eq!(e["field"], "reference.graph");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (needle, replacement, field) in [
        ("\"instance\"", "\"sead\": 3, \"instance\"", "sead"),
        (
            "\"high\": 3",
            "\"high\": 3, \"hihg\": 1",
            "data.parametric.laws[1].law.uniform.hihg",
        ),
        (
            "{\"x1\": 0, \"x2\": 0}",
            "{\"x1\": 0, \"x2\": 0}, \"rows\": 2",
            "instance.rows",
        ),
    ] {
        let cfg = write_config(dir.path(), &UNIFORM.replace(needle, replacement));
        let o = run(&["explain", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(1), "{replacement}");
        let e = stderr_json(&o);
        assert_eq!(e["error"], "config");
        assert!(
            e["message"].as_str().unwrap().contains("unknown field"),
            "{e}"
        );
        assert_eq!(e["field"], field, "{e}");
    }
}

#[test]
fn two_data_sources_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &UNIFORM.replace("\"data\": {", "\"data\": {\"csv\": {\"path\": \"x.csv\"}, "),
    );
    let o = run(&["explain", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["field"], "data");
}

#[test]
fn invalid_json_reports_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"model\": \"x1\"\n  \"data\": {}\n}");
    let o = run(&["explain", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "parse");
    assert!(e["message"].as_str().unwrap().contains("line 3"), "{e}");
}

#[test]
fn bad_model_and_bad_instance_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &UNIFORM.replace("x1 + x2", "x1 + x3"));
    let o = run(&["explain", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["field"], "model");

    let cfg = write_config(dir.path(), &UNIFORM.replace(", \"x2\": 0}", "}"));
    let o = run(&["explain", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["field"], "instance.values.x2");
}

#[test]
fn computation_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &UNIFORM.replace("x1 + x2", "x2 / x1"));
    let o = run(&["explain", "--config", &cfg]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let e = stderr_json(&o);
    assert_eq!(e["error"], "compute");
    assert!(e["message"].as_str().unwrap().contains("division by zero"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["explain"]).status.code(), Some(1));
    assert_eq!(
        run(&["frobnicate", "--config", "x.json"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&[
            "explain",
            "--config",
            &example("uniform_sum.json"),
            "--workers",
            "0"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(
        run(&["explain", "--config", "/nonexistent/config.json"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn workers_fall_back_to_the_environment() {
    let o = bin()
        .args(["explain", "--config", &example("uniform_sum.json")])
        .env("COALITION_ATTRIB_WORKERS", "3")
        .output()
        .unwrap();
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["metadata"]["workers"], 3);
}

#[test]
fn seed_flag_overrides_config() {
    let run_seed = |s: &str| {
        let o = run(&[
            "explain",
            "--config",
            &example("uniform_sum_sampled.json"),
            "--seed",
            s,
            "--format",
            "csv",
        ]);
        String::from_utf8(o.stdout).unwrap()
    };
    assert_ne!(run_seed("1"), run_seed("2"));
    assert_eq!(run_seed("5"), run_seed("5"));
}

#[test]
fn fairness_screen_verdicts() {
    let o = run(&[
        "fairness-screen",
        "--config",
        &example("mixed_cohort_screen.json"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["body"]["verdict"], "FAIL-NECESSARY-CONDITION");

    let o = run(&[
        "fairness-screen",
        "--config",
        &example("male_cohort_csv.json"),
        "--format",
        "text",
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("PASS-NECESSARY-CONDITION"));
    assert!(text.contains("not a fairness certificate"));
}

#[test]
fn screen_refuses_the_sampled_backend() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(examples().join("male_cohort_p05.json"))
        .unwrap()
        .replace(
            "\"fairness\"",
            "\"estimator\": {\"kind\": \"sampled\"}, \"fairness\"",
        );
    let cfg = write_config(dir.path(), &text);
    let o = run(&["fairness-screen", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["field"], "estimator.kind");
}

#[test]
fn validate_reports_every_property() {
    let o = run(&["validate", "--config", &example("uniform_validate.json")]);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let props = doc["body"]["properties"].as_array().unwrap();
    let names: Vec<&str> = props
        .iter()
        .map(|p| p["property"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["efficiency", "symmetry", "dummy", "linearity"]);
    assert!(props.iter().all(|p| p["status"] == "pass"));
}

#[test]
fn instance_by_row_reads_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(examples().join("twins_x1.json"))
        .unwrap()
        .replace("\"twins.csv\"", &format!("{:?}", example("twins.csv")))
        .replace("{\"values\": {\"x1\": 1, \"x2\": 1}}", "{\"row\": 1}");
    let cfg = write_config(dir.path(), &text);
    let o = run(&["explain", "--config", &cfg]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["body"]["instance"], serde_json::json!([1.0, 1.0]));

    let cfg = write_config(dir.path(), &text.replace("{\"row\": 1}", "{\"row\": 99}"));
    let o = run(&["explain", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["field"], "instance.row");
}

#[test]
fn config_errors_carry_paths() {
    let err = load_config(examples().join("causal_missing_graph.json")).unwrap_err();
    assert!(matches!(err, ConfigError::Field { ref field, .. } if field == "reference.graph"));
}
