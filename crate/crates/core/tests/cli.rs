use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_langevin-coupling");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> i32 {
    let out = Command::new(BIN).args(args).output().unwrap();
    out.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn constants_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("quadratic.json");
    let code = run(&[
        "constants",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
        "--fixed-label",
        "c",
        "--set",
        "potential.certificate.R=1",
        "--set",
        "T=1",
        "--set",
        "q_list=[2]",
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.path().join("constants-c.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "T,nu,c0,c1,m_xx,kl_bound,renyi_q2,alpha,beta,j_value");
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[1] - 0.183_939_7).abs() < 1e-7);
    let j = read_json(&dir.path().join("constants-c.json"));
    assert_eq!(j["config"]["potential"]["certificate"]["R"], 1.0);
    assert_eq!(j["timestamp"], Value::Null);
    assert_eq!(j["runtime_s"], Value::Null);
}

#[test]
fn identical_starts_give_zero_kl() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    let code = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--fixed-label",
        "z",
        "--set",
        "x0_prime=[0,0]",
        "--set",
        "n_paths=200",
    ]);
    assert_eq!(code, 0);
    let j = read_json(&dir.path().join("simulate-z.json"));
    assert_eq!(j["kl_mc"], 0.0);
    assert_eq!(j["coupled_fraction_at_T"], 1.0);
    let csv = std::fs::read_to_string(dir.path().join("simulate-z.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,mean_abs_z,se_abs_z,mean_sqrt_f_z,se_sqrt_f_z,mean_f_z,envelope"
    );
}

#[test]
fn validation_failure_exits_2_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    let code = run(&[
        "bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--fixed-label",
        "e",
        "--set",
        "dt=5",
    ]);
    assert_eq!(code, 2);
    let j = read_json(&dir.path().join("error-bounds-e.json"));
    assert_eq!(j["exit_code"], 2);
    assert!(j["message"].as_str().unwrap().contains("dt"));
    assert_eq!(j["config"]["dt"], 5);

    let missing = dir.path().join("nope.json");
    assert_eq!(
        run(&[
            "constants",
            "--config",
            missing.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--fixed-label",
            "m"
        ]),
        2
    );
    assert!(dir.path().join("error-constants-m.json").exists());
    assert_eq!(run(&["frobnicate", "--config", "x"]), 2);
}

#[test]
fn refuted_certificate_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    let code = run(&[
        "potential-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--fixed-label",
        "p",
        "--set",
        "potential.certificate.m=2",
        "--set",
        "potential.certificate.M=2",
        "--set",
        "certificate_pairs=500",
    ]);
    assert_eq!(code, 3);
    let j = read_json(&dir.path().join("potential-check-p.json"));
    assert_eq!(j["pass"], false);
}

#[test]
fn override_matches_file_setting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut v = read_json(&config("double_well.json"));
    v["seed"] = 12345.into();
    v["n_paths"] = 300.into();
    let edited = dir.path().join("edited.json");
    std::fs::write(&edited, serde_json::to_string(&v).unwrap()).unwrap();

    let common = ["--out", out.to_str().unwrap(), "--fixed-label", "x"];
    let mut a = vec!["renyi", "--config", edited.to_str().unwrap()];
    a.extend(common);
    assert_eq!(run(&a), 0);
    let from_file = (
        std::fs::read(out.join("renyi-x.json")).unwrap(),
        std::fs::read(out.join("renyi-x.csv")).unwrap(),
    );

    let cfg = config("double_well.json");
    let mut b = vec![
        "renyi",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "seed=12345",
        "--set",
        "n_paths=300",
    ];
    b.extend(common);
    assert_eq!(run(&b), 0);
    let from_cli = (
        std::fs::read(out.join("renyi-x.json")).unwrap(),
        std::fs::read(out.join("renyi-x.csv")).unwrap(),
    );
    assert!(from_file == from_cli);
}

#[test]
fn bounds_on_quadratic_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    assert_eq!(
        run(&[
            "bounds",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--fixed-label",
            "b"
        ]),
        0
    );
    let j = read_json(&dir.path().join("bounds-b.json"));
    let (mc, se, th) = (
        j["kl_mc"].as_f64().unwrap(),
        j["kl_mc_se"].as_f64().unwrap(),
        j["kl_theorem"].as_f64().unwrap(),
    );
    assert!(mc <= th + 3.0 * se);
    assert_eq!(j["pass"], true);
}

#[test]
fn unfixed_label_records_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("quadratic.json");
    assert_eq!(
        run(&[
            "constants",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap()
        ]),
        0
    );
    let f = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "json"))
        .unwrap();
    let j = read_json(&f);
    assert!(j["timestamp"].as_str().unwrap().ends_with('Z'));
    assert!(j["runtime_s"].as_f64().unwrap() >= 0.0);
}
