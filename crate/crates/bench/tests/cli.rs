use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scaledsgd"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

const TINY: &str = r#"
name = "tiny"
repeats = 2
[data.generate]
n = 40
m = 30
r = 2
os = 4.0
[evaluation]
metric = { kind = "rel_residual" }
holdout = 50
[[solvers]]
label = "scaled"
config = { kind = "scaled-sgd", mu = 0.5, batch_size = 4, max_iters = 15 }
[[solvers]]
label = "als"
config = { kind = "als", regularization = 0.01, max_iters = 15 }
"#;

#[test]
fn list_names_every_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["list"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "scale-invariance",
        "mu-sweep",
        "b-sweep",
        "noisy",
        "rectangular",
        "jester-r5",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(name)),
            "{name} missing from\n{text}"
        );
    }
}

#[test]
fn validate_builtin_reports_bindings() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["validate", "mu-sweep"], dir.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["known_entries"], 29_700);
    assert_eq!(report["bindings"].as_array().unwrap().len(), 4);
    assert_eq!(report["bindings"][0]["engine"], "scaled-sgd");
}

#[test]
fn validate_rejects_mu_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, TINY.replace("mu = 0.5", "mu = 1.5")).unwrap();
    let out = cli(&["validate", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["error"]["path"], "solvers[0].config");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("mu out of [0,1]"));
}

#[test]
fn json_scenarios_are_accepted_and_unknown_fields_located() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.json");
    let value = serde_json::json!({
        "name": "tiny",
        "data": { "generate": { "n": 20, "m": 20, "r": 2, "os": 3.0 } },
        "solvers": [ { "label": "s", "config": { "kind": "sgd", "batch_size": 3 } } ]
    });
    std::fs::write(&path, value.to_string()).unwrap();
    assert!(cli(&["validate", path.to_str().unwrap()], dir.path())
        .status
        .success());

    let mut bad = value.clone();
    bad["data"]["generate"]["size"] = 3.into();
    std::fs::write(&path, bad.to_string()).unwrap();
    let out = cli(&["validate", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert!(
        err["error"]["path"].as_str().unwrap().starts_with("data"),
        "{err}"
    );
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["run", "jester-r5", "--out-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "data");
}

#[test]
fn reruns_are_byte_identical_and_summaries_match() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    for (out, jobs) in [("a", "1"), ("b", "3")] {
        let o = cli(
            &[
                "run",
                "tiny.toml",
                "--out-dir",
                out,
                "--jobs",
                jobs,
                "--seed",
                "9",
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in [
        "summary.json",
        "scaled/repeat-0.csv",
        "scaled/repeat-1.csv",
        "als/repeat-1.csv",
    ] {
        let a = std::fs::read(dir.path().join("a/tiny").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b/tiny").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/tiny/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["solvers"][0]["runs"][1]["seed"], 10);
    assert_eq!(summary["data"]["test_entries"], serde_json::json!([50, 50]));
    assert!(summary["solvers"][0]["stddev"]["cost"].is_number());
    assert!(
        summary["solvers"][1]["mean"]["test_metric"]
            .as_f64()
            .unwrap()
            < 0.5
    );
    assert!(summary.get("deviation").is_none());

    let trace = std::fs::read_to_string(dir.path().join("a/tiny/scaled/repeat-0.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,cost,mse,rel_residual,test_metric,stepsize,seconds"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert!(row[4].parse::<f64>().is_ok());
    assert_eq!(row[6], "");
}

#[test]
fn timing_fills_the_seconds_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.toml"),
        TINY.replace("repeats = 2", "repeats = 1"),
    )
    .unwrap();
    let o = cli(
        &["run", "tiny.toml", "--out-dir", "o", "--timing"],
        dir.path(),
    );
    assert!(o.status.success());
    let trace = std::fs::read_to_string(dir.path().join("o/tiny/als/repeat-0.csv")).unwrap();
    let last = trace.lines().last().unwrap();
    assert!(last.rsplit(',').next().unwrap().parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn generate_writes_triplets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.toml"),
        "n = 30\nm = 20\nr = 2\nos = 3.0\n",
    )
    .unwrap();
    let o = cli(
        &["generate", "spec.toml", "--out", "x.csv", "--seed", "4"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = scaledsgd::problem::load_csv(dir.path().join("x.csv"), &Default::default()).unwrap();
    assert_eq!(data.len(), 288);

    let o = cli(&["generate", "rectangular", "--out", "r.csv"], dir.path());
    assert!(o.status.success());
}
