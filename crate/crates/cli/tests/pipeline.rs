//! End-to-end runs of the `ibc` binary on small configurations.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn ibc(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibc"))
        .args(args)
        .arg(config)
        .env("RUST_LOG", "warn")
        .env_remove("IBC_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn small(dir: &Path) -> Value {
    json!({
        "model": "heisenberg_s1",
        "chi": 8,
        "chi_max": 12,
        "window_size": 8,
        "dt": 0.05,
        "t_max": 0.5,
        "trotter_order": 2,
        "checkpoint_every": 3,
        "spectral": { "q_points": 11, "omega_points": 41 },
        "output_dir": dir.join("out"),
    })
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn run_all(dir: &Path, cfg: &Value) {
    let path = write_config(dir, cfg);
    for stage in ["gs", "evolve", "spectrum"] {
        let o = ibc(&[stage], &path);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn stages_produce_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    run_all(dir.path(), &cfg);
    let n_steps = 10;
    let sz = read(dir.path(), "sz_profile.csv");
    assert!(sz.starts_with("t,x,sz\n"));
    assert_eq!(sz.lines().count(), 1 + (n_steps + 1) * 8);
    let g = read(dir.path(), "greens.csv");
    assert!(g.starts_with("t,x,re_g,im_g\n"));
    assert_eq!(g.lines().count(), 1 + (n_steps + 1) * 8);
    // positions are offsets from the flipped site
    assert!(g.lines().nth(1).unwrap().split(',').nth(1).unwrap() == "-4");
    let s = read(dir.path(), "spectral.csv");
    assert!(s.starts_with("q,omega,s\n"));
    assert_eq!(s.lines().count(), 1 + 11 * 41);
    let d = read(dir.path(), "dispersion.csv");
    assert!(d.starts_with("q,omega_peak\n"));
    assert_eq!(d.lines().count(), 1 + 11);
    let meta: Value = serde_json::from_str(&read(dir.path(), "spectrum_meta.json")).unwrap();
    assert!(meta["gap"].is_number());
    assert!((meta["gap_q"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-12);
    // 17 significant digits
    let first = sz.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    assert_eq!(first.split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
    assert!(!dir.path().join("out").read_dir().unwrap().any(|e| e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .contains(".tmp")));
}

#[test]
fn ground_state_energy_at_small_chi() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg["chi"] = json!(16);
    let path = write_config(dir.path(), &cfg);
    let o = ibc(&["gs"], &path);
    assert_eq!(code(&o), 0);
    let cp = ibc_cli::checkpoint::Checkpoint::read(&dir.path().join("out/gs.ckpt")).unwrap();
    let e0: f64 = cp.meta_parse("e0").unwrap();
    assert!((e0 - common::ED_E_INF).abs() < 5e-3, "e0 = {e0}");
}

#[test]
fn zero_duration_emits_initial_observables_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg["t_max"] = json!(0.0);
    let path = write_config(dir.path(), &cfg);
    assert_eq!(code(&ibc(&["gs"], &path)), 0);
    assert_eq!(code(&ibc(&["evolve"], &path)), 0);
    let sz = read(dir.path(), "sz_profile.csv");
    assert_eq!(sz.lines().count(), 1 + 8);
    assert!(sz.lines().skip(1).all(|l| l.starts_with("0.0000000000000000e0,")));
    let g = read(dir.path(), "greens.csv");
    assert_eq!(g.lines().count(), 1 + 8);
    // no time axis to transform
    let o = ibc(&["spectrum"], &path);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("single time slice"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path(), &small(a.path()));
    run_all(b.path(), &small(b.path()));
    for name in ["sz_profile.csv", "greens.csv", "spectral.csv", "dispersion.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    // a second evolve in the same directory resumes from the final checkpoint
    let before = read(a.path(), "greens.csv");
    let o = ibc(&["evolve"], &a.path().join("run.json"));
    assert_eq!(code(&o), 0);
    assert_eq!(read(a.path(), "greens.csv"), before);
}

#[test]
fn interrupted_evolution_resumes_to_the_same_result() {
    let full = tempfile::tempdir().unwrap();
    run_all(full.path(), &small(full.path()));

    // stop after 6 of 10 steps, then continue with the full duration
    let part = tempfile::tempdir().unwrap();
    let mut cfg = small(part.path());
    let path = write_config(part.path(), &cfg);
    assert_eq!(code(&ibc(&["gs"], &path)), 0);
    cfg["t_max"] = json!(0.3);
    let short = write_config(part.path(), &cfg);
    assert_eq!(code(&ibc(&["evolve"], &short)), 0);
    // the short run's checkpoint carries a different config hash, so
    // splice it in as if the long run had been interrupted at step 6
    let cp_path = part.path().join("out/evolve.ckpt");
    let mut cp = ibc_cli::checkpoint::Checkpoint::read(&cp_path).unwrap();
    cfg["t_max"] = json!(0.5);
    let long = write_config(part.path(), &cfg);
    let parsed = ibc_cli::config::load_config(&long).unwrap();
    cp.set("config_hash", parsed.hash());
    cp.write(&cp_path).unwrap();
    assert_eq!(code(&ibc(&["evolve"], &long)), 0);
    assert_eq!(code(&ibc(&["spectrum"], &long)), 0);
    for name in ["sz_profile.csv", "greens.csv", "dispersion.csv"] {
        assert_eq!(read(full.path(), name), read(part.path(), name), "{name}");
    }
}

#[test]
fn expand_enlarges_the_evolved_window() {
    let dir = tempfile::tempdir().unwrap();
    run_all(dir.path(), &small(dir.path()));
    let path = dir.path().join("run.json");
    let o = Command::new(env!("CARGO_BIN_EXE_ibc"))
        .args(["expand", path.to_str().unwrap(), "--left", "3", "--right", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(dir.path(), "sz_profile_expanded.csv");
    assert_eq!(text.lines().count(), 1 + 16);
    let sz = read(dir.path(), "sz_profile.csv");
    let last: Vec<f64> = sz.lines().rev().take(8).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let exp: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    for (i, v) in last.iter().rev().enumerate() {
        assert!((exp[i + 3] - v).abs() < 1e-10);
    }
}

#[test]
fn validate_fills_defaults_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let minimal = json!({"model": "heisenberg_s1", "chi": 16, "window_size": 20, "dt": 0.05, "t_max": 5});
    let o = ibc(&["validate"], &write_config(dir.path(), &minimal));
    assert_eq!(code(&o), 0);
    let filled: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(filled["trotter_order"], 4);
    assert_eq!(filled["spectral"]["omega_points"], 401);

    let mut bad = minimal.clone();
    bad["dt"] = json!(-0.1);
    assert_eq!(code(&ibc(&["validate"], &write_config(dir.path(), &bad))), 1);
    let mut unknown = minimal.clone();
    unknown["colour"] = json!("red");
    assert_eq!(code(&ibc(&["validate"], &write_config(dir.path(), &unknown))), 1);
    std::fs::write(dir.path().join("run.json"), "{\n  \"chi\": 16,\n  oops\n}").unwrap();
    let o = ibc(&["validate"], &dir.path().join("run.json"));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let full = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/full_scale.json");
    assert_eq!(code(&ibc(&["validate"], &full)), 0);
}

#[test]
fn later_stages_need_earlier_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small(dir.path()));
    let o = ibc(&["evolve"], &path);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing checkpoint"));
    assert_eq!(code(&ibc(&["spectrum"], &path)), 1);
    assert_eq!(code(&ibc(&["expand"], &path)), 1);
}

#[test]
fn numerical_failure_exits_with_two() {
    // a strong field polarizes the chain fully down, which S⁻ annihilates
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg["model"] = json!({"name": "heisenberg", "spin": 0.5, "field": 5.0});
    cfg["chi"] = json!(1);
    cfg["perturbation"] = json!({"operator": "sm"});
    // run imaginary time to machine precision so no up component survives
    cfg["itebd"] = json!({"steps": [[0.5, 400]], "energy_tol": 1e-300, "lambda_tol": 1e-300});
    let path = write_config(dir.path(), &cfg);
    assert_eq!(code(&ibc(&["gs"], &path)), 0);
    let o = ibc(&["evolve"], &path);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("evolve"));
}

#[test]
#[ignore = "full-scale run: hours on one core"]
fn full_scale_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/full_scale.json");
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(src).unwrap()).unwrap();
    cfg["output_dir"] = json!(dir.path().join("out"));
    run_all(dir.path(), &cfg);
    let meta: Value = serde_json::from_str(&read(dir.path(), "spectrum_meta.json")).unwrap();
    let gap = meta["gap"].as_f64().unwrap();
    assert!((gap - 0.4105).abs() <= 0.01, "gap = {gap}");
}
