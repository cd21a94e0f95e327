use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levitrap"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A preset config with one line replaced.
fn edited(dir: &Path, from: &str, key: &str, line: &str) -> PathBuf {
    let text = fs::read_to_string(config(from)).unwrap();
    let mut found = false;
    let body: Vec<String> = text
        .lines()
        .map(|l| {
            if l.trim_start().starts_with(key) {
                found = true;
                line.to_string()
            } else {
                l.to_string()
            }
        })
        .collect();
    assert!(found, "{key} not in {from}");
    let path = dir.join("edited.cfg");
    fs::write(&path, body.join("\n") + "\n").unwrap();
    path
}

#[test]
fn missing_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--config", "no/such/file.cfg"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("levitrap:"), "{}", stderr(&o));
}

#[test]
fn out_of_range_value_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "operating_point.cfg", "trap.radial_asymmetry", "trap.radial_asymmetry = 2");
    let o = run(&dir.path().join("out"), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("radial_asymmetry"), "{}", stderr(&o));
}

#[test]
fn decohere_needs_a_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["decohere"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_rejected_by_the_parser() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--bogus"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unstable_trap_escapes_and_psd_refuses_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("unstable.cfg");
    let o = run(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(dir.path().join("summary.json"));
    assert_eq!(summary["status"], "escaped");
    assert_eq!(json(dir.path().join("manifest.json"))["status"], "escaped");

    let traj = dir.path().join("trajectory.bin");
    let o = run(&dir.path().join("psd"), &["psd", "--trajectory", traj.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn simulate_writes_manifest_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("operating_point.cfg");
    let o = run(
        dir.path(),
        &["simulate", "--config", cfg.to_str().unwrap(), "--duration", "0.02", "--csv", "--seed", "2"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = json(dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["master_seed"], 2);
    assert_eq!(manifest["status"], "bounded");
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in ["trajectory.bin", "trajectory.csv", "summary.json"] {
        assert!(outputs.contains(&name), "{outputs:?}");
        assert!(dir.path().join(name).exists());
    }
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("# manifest: manifest.json"));
    assert_eq!(json(dir.path().join("summary.json"))["manifest"], "manifest.json");
}

#[test]
fn cooling_without_coupling_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "cooling.cfg", "trap.electrode_coupling", "trap.electrode_coupling = 0");
    let o = run(&dir.path().join("out"), &["cool", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("electrode_coupling"), "{}", stderr(&o));
}

#[test]
fn open_loop_stays_at_the_bath_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "cooling.cfg", "env.pressure", "env.pressure = 20");
    let o = run(
        &dir.path().join("out"),
        &["cool", "--config", cfg.to_str().unwrap(), "--tune", "--gain", "0", "--duration", "1", "--settle", "0.05"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(dir.path().join("out/cool.json"));
    let t = report["true_temperature"].as_f64().unwrap();
    assert!((t / 300.0 - 1.0).abs() < 0.2, "{t}");
    assert_eq!(report["heating"], false);
}

#[test]
fn batch_reports_bad_lines_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_levitrap"))
        .arg("--out")
        .arg(dir.path())
        .args(["decohere", "--batch", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"query\":\"dp_lifetime\",\"mass\":1e-15,\"radius\":4.09e-7,\"separation\":2e-6}\nnot json\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(json(dir.path().join("manifest.json"))["details"]["failed_lines"], 1);
}
