use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tnse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tnse")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.conf");
    std::fs::write(
        &p,
        "grid.M = 8\nmodel.n = 2\ninit.radius = 2\ntime.dt = 0.005\ntime.T = 0.05\nrun.paths = 2\noutput.snapshot_every = 5\n",
    )
    .unwrap();
    p
}

#[test]
fn simulate_then_emit_plots() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    let out = dir.path().join("run");
    let o = tnse(&["simulate", "--config", conf.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["diagnostics.csv", "run_manifest", "snapshots.csv", "snap_p00001_0002.tnse"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest = std::fs::read_to_string(out.join("run_manifest")).unwrap();
    assert!(manifest.contains("run.seed = 5"));
    assert!(manifest.contains("# threads = "));

    let o = tnse(&["emit-plots", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(out.join("plots/norms_mean.csv").is_file());

    // replaying the manifest reproduces the diagnostics byte for byte
    let again = dir.path().join("again");
    let o = tnse(&["simulate", "--config", out.join("run_manifest").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(out.join("diagnostics.csv")).unwrap(),
        std::fs::read(again.join("diagnostics.csv")).unwrap()
    );
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tnse(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(tnse(&["simulate", "--config", "/nonexistent.conf"]).status.code(), Some(1));
    let conf = small_config(dir.path());
    let o = tnse(&["simulate", "--config", conf.to_str().unwrap(), "--set", "model.alpha=-1", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.alpha"));
    let o = tnse(&["emit-plots", dir.path().join("empty").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diagnostics.csv"));
    assert_eq!(tnse(&["verify", "--suite", "nonsense"]).status.code(), Some(1));
    assert_eq!(tnse(&["--help"]).status.code(), Some(0));
}

#[test]
fn blow_up_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path());
    // explicit Euler far beyond its stability limit on an untamed, undamped system
    let o = tnse(&[
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--set",
        "time.scheme=explicit",
        "--set",
        "model.tamed=false",
        "--set",
        "init.value=1e6",
        "--set",
        "time.dt=0.5",
        "--set",
        "time.T=50",
        "--set",
        "model.nu=0.001",
        "--out",
        dir.path().join("boom").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_taming_passes_and_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = tnse(&["verify", "--suite", "taming", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("suite,name,reference,observed,bound,verdict"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("taming,")));
    assert!(out.join("verify_taming.csv").is_file());
}

#[test]
fn verify_operators_reports_the_failing_bound() {
    let o = tnse(&["verify", "--suite", "operators", "--fields", "50"]);
    assert_eq!(o.status.code(), Some(2));
    let text = String::from_utf8(o.stdout).unwrap();
    let failing: Vec<&str> = text.lines().filter(|l| l.ends_with(",FAIL")).collect();
    assert!(!failing.is_empty());
    assert!(failing.iter().all(|l| l.contains("tamed_gradient_pairing_stated")), "{failing:?}");
}

#[test]
fn invariant_writes_measures_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("inv");
    let o = tnse(&[
        "invariant",
        "--config",
        configs().join("invariant.conf").to_str().unwrap(),
        "--observables",
        "v_sq,one",
        "--burn-in",
        "1",
        "--paths",
        "2",
        "--set",
        "time.T=4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["measure_v_sq.csv", "measure_one.csv", "averages.csv", "bounds.csv", "spectrum_average.csv", "run_manifest"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let averages = std::fs::read_to_string(out.join("averages.csv")).unwrap();
    let one = averages.lines().find(|l| l.starts_with("one,")).unwrap();
    assert_eq!(one.split(',').nth(2).unwrap(), "1.0");

    // the undamped system is rejected
    let o = tnse(&["invariant", "--config", configs().join("invariant.conf").to_str().unwrap(), "--set", "model.alpha=0"]);
    assert_eq!(o.status.code(), Some(1));
}
