use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use snn_unwrap::raster::read_raster;
use tempfile::TempDir;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snn-unwrap"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = run(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

fn k_values(path: &Path) -> Vec<f64> {
    read_raster(path).unwrap().values_f64()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn gen_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--seed", "11", "gen", "--size", "16", "--count", "2", "--profile", "patchy", "--coherence", "0.6"];
    let da = ok(a.path(), &args);
    let db = ok(b.path(), &args);
    assert_eq!(da.file_name(), db.file_name());
    assert_eq!(files(&da), files(&db));
}

#[test]
fn zero_coherence_keeps_exact_truth() {
    let t = TempDir::new().unwrap();
    let g = ok(t.path(), &["gen", "--size", "24", "--slope", "-0.5", "--coherence", "0"]);
    let scene = g.join("scene_000");
    let abs = k_values(&scene.join("absolute.snur"));
    let k = k_values(&scene.join("k_truth.snur"));
    let wrapped = k_values(&scene.join("wrapped.snur"));
    assert!(k.iter().any(|&v| v != 0.0));
    // truth still describes the clean field even though the wrapped input is noise
    let noisy = wrapped.iter().zip(&abs).filter(|(w, a)| ((*a - *w) / std::f64::consts::TAU).fract().abs() > 1e-9).count();
    assert!(noisy > 0);
    for ((a, kv), w) in abs.iter().zip(&k).zip(&wrapped) {
        let clean = a - kv * std::f64::consts::TAU;
        assert!(clean > -std::f64::consts::PI - 1e-9 && clean <= std::f64::consts::PI + 1e-9, "{a} {kv} {w}");
    }
}

#[test]
fn flat_bump_unwraps_to_zero() {
    let t = TempDir::new().unwrap();
    let g = ok(t.path(), &["gen", "--shape", "bump", "--amplitude", "0", "--size", "16"]);
    for engine in ["itoh", "snn"] {
        let u = ok(t.path(), &["--engine", engine, "unwrap", "--scene", g.to_str().unwrap()]);
        assert!(k_values(&u.join("k.snur")).iter().all(|&v| v == 0.0), "{engine}");
        assert_eq!(json(&u.join("metrics.json"))["accuracy"], 1.0);
    }
}

#[test]
fn itoh_is_exact_on_clean_ramp() {
    let t = TempDir::new().unwrap();
    let g = ok(t.path(), &["gen", "--size", "32", "--slope", "-0.6"]);
    let u = ok(t.path(), &["--engine", "itoh", "unwrap", "--scene", g.to_str().unwrap()]);
    let m = json(&u.join("metrics.json"));
    assert_eq!(m["accuracy"], 1.0);
    assert_eq!(m["rmse"], 0.0);
    let e = ok(t.path(), &["eval", "--scene", g.to_str().unwrap(), "--pred", u.join("k.snur").to_str().unwrap()]);
    assert_eq!(json(&e.join("metrics.json")), m);
}

#[test]
fn itoh_refuses_residues() {
    let t = TempDir::new().unwrap();
    let g = ok(t.path(), &["--seed", "3", "gen", "--size", "16", "--coherence", "0.1"]);
    let before = fs::read_dir(t.path()).unwrap().count();
    let o = run(t.path(), &["--engine", "itoh", "unwrap", "--scene", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("residue"));
    assert_eq!(fs::read_dir(t.path()).unwrap().count(), before);
}

#[test]
fn missing_input_writes_nothing() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["unwrap", "--scene", "/nonexistent/scene"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!t.path().exists() || fs::read_dir(t.path()).unwrap().next().is_none());
}

#[test]
fn unknown_config_key_is_rejected() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("bad.toml");
    fs::write(&cfg, "[network]\nnot_a_key = 1\n").unwrap();
    let o = run(&t.path().join("runs"), &["--config", cfg.to_str().unwrap(), "gen"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!t.path().join("runs").exists());
}

#[test]
fn invalid_config_value_is_rejected() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["gen", "--coherence", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_epochs_writes_initial_checkpoint() {
    let t = TempDir::new().unwrap();
    let g = ok(t.path(), &["gen", "--size", "16"]);
    let tr = ok(t.path(), &["train", "--dataset", g.to_str().unwrap(), "--epochs", "0"]);
    let trace = fs::read_to_string(tr.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1);
    assert!(tr.join("checkpoint.snut").is_file());
    assert_eq!(json(&tr.join("train.json"))["trained_epochs"], 0);
}

#[test]
fn resume_matches_uninterrupted_training() {
    let t = TempDir::new().unwrap();
    let g = ok(t.path(), &["--seed", "4", "gen", "--size", "16", "--count", "2", "--slope", "-0.6", "--slope-max", "-0.4"]);
    let ds = g.to_str().unwrap();
    let full = ok(t.path(), &["--seed", "4", "train", "--dataset", ds, "--epochs", "2"]);
    let half = ok(t.path(), &["--seed", "4", "train", "--dataset", ds, "--epochs", "1"]);
    let rest = ok(
        t.path(),
        &["--seed", "4", "train", "--dataset", ds, "--epochs", "2", "--resume", half.join("checkpoint.snut").to_str().unwrap()],
    );
    assert_eq!(fs::read(full.join("checkpoint.snut")).unwrap(), fs::read(rest.join("checkpoint.snut")).unwrap());
    let full_trace = fs::read_to_string(full.join("trace.csv")).unwrap();
    let rest_trace = fs::read_to_string(rest.join("trace.csv")).unwrap();
    assert_eq!(full_trace.lines().last(), rest_trace.lines().last());
}

#[test]
fn report_text_matches_json() {
    let t = TempDir::new().unwrap();
    let g = ok(t.path(), &["gen", "--size", "16", "--slope", "-0.5"]);
    let u = ok(t.path(), &["unwrap", "--scene", g.to_str().unwrap()]);
    let r = ok(t.path(), &["report", "--run", u.to_str().unwrap()]);
    let report = json(&r.join("report.json"));
    assert_eq!(report["schema_version"], "1");
    assert!(report["energy"]["caveat"].as_str().unwrap().contains("model"));
    let text = fs::read_to_string(r.join("report.txt")).unwrap();
    for key in ["metrics.accuracy", "energy.snn_joules", "energy.gpu_joules", "energy.ratio", "complexity.op_count_snn"] {
        let line = text.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap_or_else(|| panic!("{key}"));
        let value: Value = serde_json::from_str(line.split(" = ").nth(1).unwrap()).unwrap();
        let pointer = format!("/{}", key.replace('.', "/"));
        assert_eq!(Some(&value), report.pointer(&pointer), "{key}");
    }
}

#[test]
fn report_lists_missing_artifacts() {
    let t = TempDir::new().unwrap();
    let g = ok(t.path(), &["gen", "--size", "16"]);
    let u = ok(t.path(), &["--engine", "itoh", "unwrap", "--scene", g.to_str().unwrap()]);
    let o = run(t.path(), &["report", "--run", u.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("energy.json") && !err.contains("metrics.json"), "{err}");
}

#[test]
fn user_supplied_gpu_time_is_used() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("c.toml");
    fs::write(&cfg, "[gpu]\np_gpu = 250.0\nt_process = 0.002\n").unwrap();
    let g = ok(t.path(), &["gen", "--size", "16"]);
    let u = ok(t.path(), &["--config", cfg.to_str().unwrap(), "unwrap", "--scene", g.to_str().unwrap()]);
    let e = json(&u.join("energy.json"));
    assert_eq!(e["gpu"]["timing"], "user_supplied");
    assert!((e["gpu_joules"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}
