use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn quadenhance(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadenhance"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn cost_without_config_uses_defaults() {
    let dir = TempDir::new().unwrap();
    let o = quadenhance(dir.path(), &["cost"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("73920"));
    let csv = fs::read_to_string(dir.path().join("out/cost.csv")).unwrap();
    assert!(csv.contains("192"));
}

#[test]
fn corrupted_rule_fails_and_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"instances": 4, "corrupt_rule": "hadamard"}"#,
    );
    let o = quadenhance(dir.path(), &["gradcheck", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL"), "{text}");
    assert!(text.contains("suspect backward rule: hadamard"), "{text}");
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("oracle-equiv", r#"{"d": 1, "shifts": [1]}"#),
        ("oracle-equiv", r#"{"shifts": [0]}"#),
        ("train", r#"{"epoch": 3}"#),
        ("train", r#"{"optimizer": {"kind": "lbfgs"}}"#),
        ("train", r#"{"model": {"activation": "tanh"}}"#),
        ("gradcheck", r#"{"corrupt_rule": "nope"}"#),
        ("montecarlo", r#"{"thresholds": [-1]}"#),
        ("cost", r#"{"preset": "dim192", "dims": [4, 4]}"#),
        ("train", "not json"),
    ];
    for (i, (command, json)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("c{i}.json"), json);
        let o = quadenhance(dir.path(), &[command, "--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{command} {json}: {}", stderr(&o));
    }
    assert_eq!(
        quadenhance(dir.path(), &["frobnicate"]).status.code(),
        Some(2)
    );
    assert_eq!(
        quadenhance(dir.path(), &["train", "--seed", "x"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn io_and_data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let o = quadenhance(dir.path(), &["train", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(3));
    let cfg = write_config(
        dir.path(),
        "csv.json",
        r#"{"dataset": {"kind": "csv", "path": "absent.csv"}}"#,
    );
    assert_eq!(
        quadenhance(dir.path(), &["train", "--config", &cfg])
            .status
            .code(),
        Some(3)
    );
    fs::write(dir.path().join("bad.csv"), "a,b,label\n1,2,0\n1,oops,1\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"dataset": {"kind": "csv", "path": "bad.csv"}}"#,
    );
    assert_eq!(
        quadenhance(dir.path(), &["train", "--config", &cfg])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn divergence_exits_1_with_location() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.json",
        r#"{"optimizer": {"kind": "sgd", "lr": 1e300}, "model": {"activation": "gelu"}}"#,
    );
    let o = quadenhance(dir.path(), &["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged at epoch"), "{}", stderr(&o));
}

#[test]
fn unmet_expectation_exits_1() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.json",
        r#"{"epochs": 1, "expect": {"max_train_loss": 1e-12}}"#,
    );
    assert_eq!(
        quadenhance(dir.path(), &["train", "--config", &cfg])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn reruns_emit_identical_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "m.json", r#"{"samples": 100000}"#);
    for out in ["a", "b"] {
        let o = quadenhance(
            dir.path(),
            &["montecarlo", "--config", &cfg, "--seed", "9", "--out", out],
        );
        assert_eq!(o.status.code(), Some(0));
    }
    let a = fs::read(dir.path().join("a/montecarlo.csv")).unwrap();
    let b = fs::read(dir.path().join("b/montecarlo.csv")).unwrap();
    assert_eq!(a, b);
    let o = quadenhance(
        dir.path(),
        &["montecarlo", "--config", &cfg, "--seed", "10", "--out", "c"],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(a, fs::read(dir.path().join("c/montecarlo.csv")).unwrap());
}

#[test]
fn checkpoints_resume_and_reject_damage() {
    let dir = TempDir::new().unwrap();
    let plain = write_config(
        dir.path(),
        "plain.json",
        r#"{"epochs": 20, "model": {"enhancer": "none", "hidden": [3]}}"#,
    );
    let o = quadenhance(dir.path(), &["train", "--config", &plain, "--out", "p"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let resume = write_config(
        dir.path(),
        "resume.json",
        r#"{"epochs": 5, "model": {"hidden": [3]}, "init_from": "p/final.qen"}"#,
    );
    let o = quadenhance(dir.path(), &["train", "--config", &resume, "--out", "q"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "missing lambda must be rejected by default"
    );

    let lenient = write_config(
        dir.path(),
        "lenient.json",
        r#"{"epochs": 5, "model": {"hidden": [3]}, "init_from": "p/final.qen", "allow_missing_lambda": true}"#,
    );
    let o = quadenhance(dir.path(), &["train", "--config", &lenient, "--out", "q"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let bytes = fs::read(dir.path().join("p/final.qen")).unwrap();
    assert_eq!(&bytes[..4], b"QEN1");
    fs::write(dir.path().join("p/final.qen"), &bytes[..bytes.len() - 3]).unwrap();
    let o = quadenhance(dir.path(), &["train", "--config", &plain, "--out", "r"]);
    assert_eq!(o.status.code(), Some(0));
    let damaged = write_config(
        dir.path(),
        "damaged.json",
        r#"{"epochs": 5, "model": {"enhancer": "none", "hidden": [3]}, "init_from": "p/final.qen"}"#,
    );
    let o = quadenhance(dir.path(), &["train", "--config", &damaged, "--out", "s"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("checkpoint"), "{}", stderr(&o));
}
