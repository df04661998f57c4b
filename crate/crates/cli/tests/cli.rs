use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn chsmc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chsmc"))
        .arg("--quiet")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn shipped(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL_DIRICHLET: &str = r#"
[grid]
cells = [32]
lengths = [0.5]

[potential]
kind = "regular"

[bc]
kind = "dirichlet"

[data]
phi0 = { profile = "cosine", offset = 0.2, amplitude = 0.5, wave = [1] }
target = { profile = "constant", value = 0.2 }

[time]
dt = 1e-3
final_time = 1.0
output_every = 0.05

[solver]
eps = 5e-3
"#;

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped("neumann_relaxation.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(chsmc(&["simulate", "--config", &cfg], &a).status.code(), Some(0));
    assert_eq!(chsmc(&["simulate", "--config", &cfg], &b).status.code(), Some(0));
    let da = fs::read(a.join("diagnostics.csv")).unwrap();
    assert_eq!(da, fs::read(b.join("diagnostics.csv")).unwrap());
    assert!(String::from_utf8(da).unwrap().starts_with("t,mean_phi,"));
    assert!(a.join("snapshots/phi_00000.bin").exists());
    assert!(a.join("final_phi.csv").exists());
}

#[test]
fn missing_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SMALL_DIRICHLET.replace("dt = 1e-3\n", ""));
    let out = chsmc(&["simulate", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));
}

#[test]
fn sliding_check_rejects_neumann() {
    let dir = tempfile::tempdir().unwrap();
    let out = chsmc(&["sliding-check", "--config", &shipped("neumann_relaxation.toml")], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sliding_without_control_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}\n[experiment]\nrho = 0.0\nablation = false\n", SMALL_DIRICHLET);
    let cfg = write_config(dir.path(), "off.toml", &text);
    let out = chsmc(&["sliding-check", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(4));
    let csv = fs::read_to_string(dir.path().join("out/sliding.csv")).unwrap();
    assert!(csv.contains("not_achieved"));
}

#[test]
fn sliding_from_target_state_is_immediate() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_DIRICHLET.replace("amplitude = 0.5", "amplitude = 0.0");
    let cfg = write_config(dir.path(), "w0.toml", &text);
    let out = chsmc(&["sliding-check", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("out/sliding.txt")).unwrap();
    assert!(text.contains("T* observed    0.000000"), "{}", text);
}

#[test]
fn ode_oracle_prints_sliding_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_chsmc"))
        .args(["ode-oracle", "--w0", "2", "--m", "1", "--rho", "5", "--tau", "1"])
        .env("CHSMC_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("T* = 0.5\n"), "{}", text);
}

#[test]
fn design_rho_rejects_large_volume() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["design-rho", "--chat", "1", "--cstr", "1", "--w0", "0.5", "--vol", "1"];
    let out = chsmc(&args, dir.path());
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
    let ok = chsmc(&["design-rho", "--chat", "1", "--cstr", "1", "--w0", "0.5", "--vol", "0.05"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_chsmc"))
        .args(["--quiet", "simulate", "--config", &shipped("neumann_relaxation.toml")])
        .env("CHSMC_OUT", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("diagnostics.csv").exists());
}

#[test]
fn verify_all_passes_on_shipped_configs() {
    for name in ["neumann_relaxation.toml", "sliding_reference.toml", "contdep_forcing.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let out = chsmc(&["verify-all", "--config", &shipped(name)], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}: {}", name, String::from_utf8_lossy(&out.stderr));
        let report = fs::read_to_string(dir.path().join("verify.txt")).unwrap();
        assert!(!report.contains("FAIL"), "{}", report);
    }
}
