use std::path::Path;
use std::process::{Command, Output};

fn slowlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowlab"))
        .current_dir(dir)
        .env_remove("SLOWLAB_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = slowlab(dir.path(), &["run", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"name": "x", "sedes": 3}"#).unwrap();
    let o = slowlab(dir.path(), &["run", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sedes"), "{}", stderr(&o));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        slowlab(dir.path(), &["sweep", "nonsense"]).status.code(),
        Some(2)
    );
    assert_eq!(
        slowlab(dir.path(), &["gen-data", "--dim", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_input_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = slowlab(dir.path(), &["fit-stats", "--input", "nowhere.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
}

#[test]
fn fit_stats_on_generated_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let o = slowlab(
        dir.path(),
        &["--out", "fx", "gen-data", "--kind", "tracks", "--seed", "3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = slowlab(
        dir.path(),
        &[
            "--out",
            "st",
            "fit-stats",
            "--input",
            "fx/tracks.csv",
            "--gap",
            "2",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for word in ["dx", "dy", "darea", "kurtosis"] {
        assert!(text.contains(word), "{text}");
    }
    for f in [
        "stats.json",
        "stats.txt",
        "normalization.json",
        "dependence.json",
    ] {
        assert!(dir.path().join("st").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("st/stats.json")).unwrap())
            .unwrap();
    assert_eq!(report["max_frame_gap"], 2);
}

#[test]
fn generate_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let o = slowlab(
        dir.path(),
        &[
            "--out",
            "d",
            "gen-data",
            "--dim",
            "2",
            "--count",
            "4000",
            "--mixing",
            "orthogonal",
            "--lambda",
            "6",
            "--seed",
            "1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = slowlab(
        dir.path(),
        &[
            "--out",
            "m",
            "train",
            "--data",
            "d/observations.csv",
            "--estimator",
            "slowflow",
            "--steps",
            "800",
            "--lambda",
            "6",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = slowlab(
        dir.path(),
        &[
            "--out",
            "e",
            "eval",
            "--model",
            "m/model",
            "--data",
            "d/observations.csv",
            "--factors",
            "d/latents.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let score = v
        .pointer("/0/score")
        .or_else(|| v.get("score"))
        .and_then(|s| s.as_f64())
        .expect("score in output");
    assert!(score > 95.0, "{v}");
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_slowlab"))
        .current_dir(dir.path())
        .env("SLOWLAB_OUT", "from-env")
        .args(["gen-data", "--kind", "uni", "--count", "100"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-env").is_dir());
}

#[test]
fn lap_histogram_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = slowlab(
        dir.path(),
        &[
            "--format",
            "csv",
            "--out",
            "h",
            "sweep",
            "lap-histogram",
            "--lambda",
            "1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() > 5, "{text}");
    assert!(text.contains("lap"));
}
