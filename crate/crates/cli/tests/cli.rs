use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rhodrift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhodrift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SPEC: &str = r#"
dimension = 6
length = 3000
noise_fraction = 0.5
offset = 8.0
seed = 4

[[drifts]]
kind = "virtual_shift"
onset = 2000
magnitude = 4.0
"#;

fn write_inputs(dir: &Path) {
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    fs::write(
        dir.join("run.toml"),
        r#"
input = "stream.jsonl"
output_dir = "out"
dimension = 6
seed = 2
checkpoint_every = 3

[detector]
stream_window_size = 200
"#,
    )
    .unwrap();
}

#[test]
fn generate_run_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_inputs(dir);
    let p = |name: &str| dir.join(name).to_str().unwrap().to_owned();

    let msg = ok(rhodrift(&[
        "generate",
        "--spec",
        &p("spec.toml"),
        "--output",
        &p("stream.jsonl"),
    ]));
    assert!(msg.contains("3000 records"), "{msg}");
    assert_eq!(
        fs::read_to_string(dir.join("stream.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3000
    );

    let msg = ok(rhodrift(&["run", "--config", &p("run.toml")]));
    assert!(msg.contains("windows"), "{msg}");
    for f in [
        "batches.csv",
        "windows.csv",
        "events.csv",
        "checkpoint.json",
    ] {
        assert!(dir.join("out").join(f).exists(), "{f} missing");
    }

    let summary = ok(rhodrift(&[
        "report",
        "--metrics",
        &p("out"),
        "--output",
        &p("rep"),
    ]));
    assert!(!summary.is_empty());
    for f in ["series.csv", "detections.csv", "summary.txt"] {
        assert!(dir.join("rep").join(f).exists(), "{f} missing");
    }
}

#[test]
fn resumed_run_writes_the_same_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_inputs(dir);
    let p = |name: &str| dir.join(name).to_str().unwrap().to_owned();
    ok(rhodrift(&[
        "generate",
        "--spec",
        &p("spec.toml"),
        "--output",
        &p("stream.jsonl"),
    ]));
    ok(rhodrift(&["run", "--config", &p("run.toml")]));
    let first = fs::read(dir.join("out/windows.csv")).unwrap();
    let batches = fs::read(dir.join("out/batches.csv")).unwrap();

    // the last checkpoint was written mid-run; finishing from it must agree
    let cp = dir.join("cp.json");
    fs::copy(dir.join("out/checkpoint.json"), &cp).unwrap();
    ok(rhodrift(&[
        "run",
        "--config",
        &p("run.toml"),
        "--resume",
        cp.to_str().unwrap(),
    ]));
    assert_eq!(fs::read(dir.join("out/windows.csv")).unwrap(), first);
    assert_eq!(fs::read(dir.join("out/batches.csv")).unwrap(), batches);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.toml"), "dimension = 0\n").unwrap();
    let out = rhodrift(&["run", "--config", dir.join("bad.toml").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));

    let out = rhodrift(&["report", "--metrics", dir.join("missing").to_str().unwrap()]);
    assert!(!out.status.success());

    let out = rhodrift(&["frobnicate"]);
    assert!(!out.status.success());
}
