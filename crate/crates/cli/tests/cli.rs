//! End-to-end CLI tests driving the built binary.

use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quathecke"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("QUATHECKE_CACHE_DIR").output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn classset_p11() {
    let out = run(&["classset", "-p", "11", "--format", "json"]);
    let v = stdout_json(&out);
    assert_eq!(v["h"], 2);
    assert_eq!(v["mass"], "5/12");
    assert_eq!(v["schema_version"], 1);
    let mut units: Vec<u64> = v["classes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["unit_order"].as_u64().unwrap())
        .collect();
    units.sort();
    assert_eq!(units, vec![4, 6]);
}

#[test]
fn classset_p2_h1() {
    let out = run(&["classset", "-p", "2", "--format", "json"]);
    let v = stdout_json(&out);
    assert_eq!(v["h"], 1);
    assert_eq!(v["classes"][0]["unit_order"], 24);
}

#[test]
fn composite_p_is_usage_error() {
    let out = run(&["classset", "-p", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["hecke", "-p", "11", "--ell", "11"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["hecke", "-p", "11", "-N", "22", "--ell", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hecke_p11_matrices_and_eigensystems() {
    let out = run(&["hecke", "-p", "11", "--ell", "2,3", "--eigen", "--brandt", "--format", "json"]);
    let v = stdout_json(&out);
    let arr = v.as_array().expect("one object per ell0");
    assert_eq!(arr.len(), 2);
    assert_eq!(arr[0]["ell0"], 2);
    assert_eq!(arr[0]["matrix_mod_p"], serde_json::json!([[6, 1], [7, 0]]));
    assert_eq!(arr[0]["brandt_integer"], serde_json::json!([[1, 2], [3, 0]]));
    assert_eq!(arr[1]["ell0"], 3);
    assert_eq!(arr[1]["matrix_mod_p"], serde_json::json!([[8, 8], [1, 4]]));
    let systems = arr[0]["eigensystems"].as_array().unwrap();
    assert_eq!(systems.len(), 2);
    assert_eq!(systems[0]["values"]["2"], "[7,0]");
    assert_eq!(systems[0]["values"]["3"], "[5,0]");
    assert_eq!(systems[1]["values"]["2"], "[10,0]");
    assert_eq!(systems[1]["values"]["3"], "[7,0]");
}

#[test]
fn hecke_p13_single_class() {
    let out = run(&["hecke", "-p", "13", "--ell", "2", "--format", "json"]);
    let v = stdout_json(&out);
    // h = 1: the matrix is [(l0+1)/l0 mod p] = [3·2^{-1}] = [8] mod 13
    assert_eq!(v["matrix_mod_p"], serde_json::json!([[8]]));
    assert_eq!(v["basis"], serde_json::json!(["w1"]));
}

#[test]
fn weight_block_contains_level1_eigenvalues() {
    // p=11, N=2, ell0=3, weight 0: 12×12 block over F_{p^2}; its eigenvalue
    // multiset contains the level-1 eigenvalues {7, 5}
    let out = run(&["hecke", "-p", "11", "-N", "2", "--ell", "3", "--weight", "0", "--eigen", "--format", "json"]);
    let v = stdout_json(&out);
    assert_eq!(v["weight"], 0);
    let n = v["matrix_mod_p"].as_array().unwrap().len();
    assert_eq!(n, 12);
    let systems = v["eigensystems"].as_array().unwrap();
    let values: Vec<String> = systems
        .iter()
        .map(|s| s["values"]["3"].as_str().unwrap().to_string())
        .collect();
    assert!(values.contains(&"[7,0]".to_string()), "{values:?}");
    assert!(values.contains(&"[5,0]".to_string()), "{values:?}");
}

#[test]
fn csv_streams_triplets() {
    let out = run(&["hecke", "-p", "11", "--ell", "2", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ell0,row,col,value");
    assert_eq!(lines[1], "2,0,0,6");
    assert_eq!(lines.len(), 5);
}

#[test]
fn cache_roundtrip_and_reuse() {
    let dir = std::env::temp_dir().join(format!("quathecke-cli-cache-{}", std::process::id()));
    let dirs = dir.to_str().unwrap();
    let out = run(&["cache", "rebuild", "-p", "11", "--cache-dir", dirs]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["cache", "verify", "-p", "11", "--cache-dir", dirs]);
    assert!(out.status.success());
    // identical bytes across repeated runs against the same cache
    let a = run(&["hecke", "-p", "11", "--ell", "2", "--format", "json", "--cache-dir", dirs]);
    let b = run(&["hecke", "-p", "11", "--ell", "2", "--format", "json", "--cache-dir", dirs]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    // truncated cache fails verification cleanly (no panic, nonzero exit)
    let path = PathBuf::from(dirs).join("p11.json");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let out = run(&["cache", "verify", "-p", "11", "--cache-dir", dirs]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn general_matrix_dimensions() {
    // p=5, N=2: dimension h·(p²−1)·|GL₂(Z/2)| = 1·24·6 = 144
    let out = run(&["hecke", "-p", "5", "-N", "2", "--ell", "3", "--format", "json"]);
    let v = stdout_json(&out);
    let rows = v["matrix_mod_p"].as_array().unwrap();
    assert_eq!(rows.len(), 144);
    assert_eq!(rows[0].as_array().unwrap().len(), 144);
    assert_eq!(v["basis"].as_array().unwrap().len(), 144);
}

#[test]
fn cache_hit_skips_class_set_search() {
    let dir = std::env::temp_dir().join(format!("quathecke-cli-hit-{}", std::process::id()));
    let dirs = dir.to_str().unwrap().to_string();
    let first = run(&["hecke", "-p", "11", "--ell", "2", "--timing", "--cache-dir", &dirs]);
    assert!(first.status.success());
    let second = run(&["hecke", "-p", "11", "--ell", "2", "--timing", "--cache-dir", &dirs]);
    assert!(second.status.success());
    let err1 = String::from_utf8_lossy(&first.stderr).to_string();
    let err2 = String::from_utf8_lossy(&second.stderr).to_string();
    assert!(err1.contains("class set computed"), "{err1}");
    assert!(err2.contains("class set from cache"), "{err2}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn env_var_overrides_cache_dir() {
    let dir = std::env::temp_dir().join(format!("quathecke-cli-env-{}", std::process::id()));
    let out = bin()
        .args(["classset", "-p", "13", "--format", "json"])
        .env("QUATHECKE_CACHE_DIR", &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("p13.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn p2_gated_paths() {
    // level-1 weight-0 works for p = 2
    let out = run(&["hecke", "-p", "2", "--ell", "3", "--format", "json"]);
    let v = stdout_json(&out);
    // (3+1)/3 mod 2 = 4·3^{-1} = 0 mod 2
    assert_eq!(v["matrix_mod_p"], serde_json::json!([[0]]));
    // general/weight/eigen paths are rejected with a usage error
    for args in [
        vec!["hecke", "-p", "2", "--ell", "3", "--eigen"],
        vec!["hecke", "-p", "2", "-N", "3", "--ell", "5"],
        vec!["hecke", "-p", "2", "--ell", "3", "--weight", "0"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}
