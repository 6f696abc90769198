use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn asymflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asymflow")).args(args).output().expect("binary runs")
}

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL: &str = "[grid]\nhalf_width = 15.0\nh = 0.1\n[time]\ndt = 0.02\nt_end = 0.2\ncadence = 5\n\
                     [initial]\npreset = \"gaussian\"\namplitude = 0.5\n";

#[test]
fn presets_are_listed() {
    let out = asymflow(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 4);
    for name in ["gaussian", "rational_tail", "smoothed_peakon", "constant_background"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn empty_config_runs_zero_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "zero.toml", "");
    let out_dir = tmp.path().join("out");
    let out = asymflow(&["--out", out_dir.to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["completed"], true);
    assert_eq!(m["steps"], 100);
    assert_eq!(m["snapshots"].as_array().unwrap().len(), 11);
    let csv = std::fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let row = csv.lines().last().unwrap();
    assert!(row.starts_with("1,0,0,0,0,0,0,"), "{row}");
}

#[test]
fn rational_tail_example_conserves_low_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let out = asymflow(&["--out", tmp.path().to_str().unwrap(), "run", shipped("rational_tail.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let drift = std::fs::read_to_string(tmp.path().join("coefficient_drift.csv")).unwrap();
    let mut rows = drift.lines();
    assert_eq!(rows.next(), Some("coefficient,k,drift,conserved"));
    let mut conserved = 0;
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols[3] == "true" {
            conserved += 1;
            assert!(cols[2].parse::<f64>().unwrap() < 1e-6, "{row}");
        }
    }
    assert_eq!(conserved, 4);
    assert!(tmp.path().join("profiles/profile_000100.csv").exists());
}

#[test]
fn unstable_step_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[time]\ndt = 0.2\n[initial]\npreset = \"gaussian\"\namplitude = 1.0\n");
    let out = asymflow(&["--out", tmp.path().join("out").to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("advective limit"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_keys_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, text) in ["[grid]\nwidth = 3.0\n", "[solver]\n", "[initial]\npreset = \"soliton\"\n"].iter().enumerate() {
        let cfg = write(tmp.path(), &format!("c{i}.toml"), text);
        let out = asymflow(&["--out", tmp.path().join("out").to_str().unwrap(), "run", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
}

#[test]
fn breaking_run_reports_horizon_and_keeps_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "steep.toml",
        "[equation]\nb = 3.0\n[grid]\nhalf_width = 20.0\nh = 0.02\n[time]\ndt = 0.004\nt_end = 4.0\ncadence = 50\n\
         [output]\nprofiles = false\n[initial]\npreset = \"gaussian\"\namplitude = 2.0\nwidth = 0.5\n",
    );
    let out = asymflow(&["--out", tmp.path().to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("certified horizon"));
    let m = manifest(tmp.path());
    assert_eq!(m["completed"], false);
    let horizon = m["certified_horizon"].as_f64().unwrap();
    assert!(horizon > 0.0 && horizon < 4.0);
    assert!(m["stop_reason"].is_string());
    assert!(tmp.path().join("diagnostics.csv").exists());
    for s in m["snapshots"].as_array().unwrap() {
        assert!(tmp.path().join(s["file"].as_str().unwrap()).exists());
    }
}

#[test]
fn single_thread_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", SMALL);
    let hashes: Vec<serde_json::Value> = ["a", "b"]
        .iter()
        .map(|d| {
            let dir = tmp.path().join(d);
            let out = asymflow(&["--threads", "1", "--out", dir.to_str().unwrap(), "run", cfg.to_str().unwrap()]);
            assert!(out.status.success());
            let m = manifest(&dir);
            serde_json::json!([m["content_hash"], m["snapshots"]])
        })
        .collect();
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn several_configs_get_their_own_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "first.toml", SMALL);
    let b = write(tmp.path(), "second.toml", "");
    let out_dir = tmp.path().join("sweep");
    let out = asymflow(&["--out", out_dir.to_str().unwrap(), "run", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out_dir.join("first/manifest.json").exists());
    assert!(out_dir.join("second/manifest.json").exists());
}

#[test]
fn convergence_reports_orders() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", SMALL);
    let out = asymflow(&["--out", tmp.path().to_str().unwrap(), "convergence", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("observed orders"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("convergence.json")).unwrap()).unwrap();
    for ladder in ["time", "space"] {
        assert_eq!(report[ladder]["rungs"].as_array().unwrap().len(), 3);
        assert_eq!(report[ladder]["orders"].as_array().unwrap().len(), 1);
    }
    let low = asymflow(&["--out", tmp.path().to_str().unwrap(), "convergence", cfg.to_str().unwrap(), "--levels", "2"]);
    assert_eq!(low.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(asymflow(&["verify", "deep"]).status.code(), Some(2));
    assert_eq!(asymflow(&["run"]).status.code(), Some(2));
}
