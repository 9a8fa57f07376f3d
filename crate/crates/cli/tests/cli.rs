use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 1

[lattice]
l1 = 1
l2 = 2
boundary = "open"

[hamiltonian]
delta = 1.2

[ramp]
initial_a = 3.0

[ramp.protocol]
kind = "linear_rate"
omega = 1.0
delta_start = -1.0
delta_final = 1.0
rate = 4.0
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spinlake-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("run.toml"), CONFIG).unwrap();
    dir
}

fn spinlake(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinlake"))
        .arg("--config")
        .arg(dir.join("run.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn lattice_dump_writes_json() {
    let dir = scratch("dump");
    let out = spinlake(&dir, &["lattice", "dump"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("out/lattice.json")).unwrap()).unwrap();
    assert!(json["config_hash"].as_str().is_some_and(|h| h.len() == 64));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn oracle_spectrum_is_sorted() {
    let dir = scratch("spectrum");
    let out = spinlake(&dir, &["oracle", "spectrum", "--k", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let levels: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(levels.len(), 4);
    assert!(levels.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn oracle_evolve_csv_is_byte_identical() {
    let a = scratch("evolve-a");
    let b = scratch("evolve-b");
    for d in [&a, &b] {
        let out = spinlake(d, &["oracle", "evolve", "--times", "0.1,0.3,0.5"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ca = fs::read(a.join("out/oracle_evolve.csv")).unwrap();
    assert!(!ca.is_empty());
    assert_eq!(ca, fs::read(b.join("out/oracle_evolve.csv")).unwrap());
    let _ = fs::remove_dir_all(a);
    let _ = fs::remove_dir_all(b);
}

#[test]
fn env_override_changes_result() {
    let dir = scratch("env");
    let base = spinlake(&dir, &["oracle", "spectrum", "--k", "1"]);
    let shifted = Command::new(env!("CARGO_BIN_EXE_spinlake"))
        .arg("--config")
        .arg(dir.join("run.toml"))
        .args(["oracle", "spectrum", "--k", "1"])
        .env("SPINLAKE_HAMILTONIAN__DELTA", "3.0")
        .output()
        .unwrap();
    assert!(shifted.status.success());
    assert_ne!(base.stdout, shifted.stdout);
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn missing_config_is_an_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_spinlake")).args(["oracle", "spectrum"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
