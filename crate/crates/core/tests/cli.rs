use std::fs;
use std::process::Command;

fn qbound() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qbound"));
    cmd.env_remove("QBOUND_OUT");
    cmd
}

const SMALL: &str = r#"{"scenario":"spectrum","domain":{"intervals":[[0,1]]},"bc":{"preset":"neumann"},"n":200,"k":4}"#;

#[test]
fn presets_lists_every_name() {
    let out = qbound().arg("presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["dirichlet", "neumann", "periodic", "quasi_periodic", "two_interval_u1", "two_interval_u2", "torus", "cylinder"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn check_rejects_bad_configs_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"scenario":"spectrum","bc":{"preset":"nonsense"}}"#).unwrap();
    let out = qbound().arg("check").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("preset"));

    let typo = dir.path().join("typo.json");
    fs::write(&typo, r#"{"scenario":"spectrum","kk":3}"#).unwrap();
    let out = qbound().arg("check").arg(&typo).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kk"));

    let good = dir.path().join("good.json");
    fs::write(&good, SMALL).unwrap();
    let out = qbound().args(["check", "--quiet"]).arg(&good).output().unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn run_writes_where_asked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL).unwrap();

    let out_dir = dir.path().join("explicit");
    let out = qbound().arg("run").arg(&cfg).arg("--out").arg(&out_dir).arg("--quiet").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    assert!(out_dir.join("report.json").exists());

    let base = dir.path().join("env");
    let out = qbound().arg("run").arg(&cfg).env("QBOUND_OUT", &base).current_dir(dir.path()).output().unwrap();
    assert!(out.status.success());
    assert!(base.join("spectrum").join("eigenvalues.csv").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("[ok]"));

    let out = qbound().arg("run").arg(&cfg).current_dir(dir.path()).arg("--quiet").output().unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("qbound-out/spectrum/report.json").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(&cfg, r#"{"scenario":"bracketing_sweep","n":100,"samples":3,"seed":1}"#).unwrap();
    for (seed, sub) in [("1", "a"), ("1", "b"), ("2", "c")] {
        let out = qbound().arg("run").arg(&cfg).args(["--seed", seed, "--quiet", "--out"]).arg(dir.path().join(sub)).output().unwrap();
        assert!(out.status.success());
    }
    let read = |s: &str| fs::read(dir.path().join(s).join("bracketing.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn failing_checks_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("coarse.json");
    fs::write(&cfg, r#"{"scenario":"spectrum","domain":{"intervals":[[0,1]]},"bc":{"preset":"dirichlet"},"cells":8,"k":5}"#).unwrap();
    let out = qbound().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).arg("--quiet").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check failed"));
}
