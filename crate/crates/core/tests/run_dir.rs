use std::path::{Path, PathBuf};

use tamed_nse::config::{Config, ForcingChoice, InitChoice, NoiseChoice, NormChoice};
use tamed_nse::integrator::simulate_ensemble;
use tamed_nse::invariant::Observable;
use tamed_nse::output::{self, Manifest, DIAGNOSTICS, DIAG_COLUMNS};
use tamed_nse::plots::{emit_plots, linear_mean_energy, Table};
use tamed_nse::{snapshot, Error, Scheme};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_run(dir: &Path, c: &Config) {
    let ens = simulate_ensemble(&c.build().unwrap()).unwrap();
    let mut m = Manifest::start(c, "test");
    output::write_diagnostics(dir, &ens).unwrap();
    output::write_snapshots(dir, &ens).unwrap();
    m.write(dir, true).unwrap();
}

#[test]
fn shipped_invariant_config_has_the_documented_parameters() {
    let c = Config::from_file(&configs().join("invariant.conf")).unwrap();
    let expected = Config {
        grid_m: 12,
        n: 3.0,
        nu: 1.0,
        alpha: 1.0,
        taming_n: 10.0,
        noise_kind: NoiseChoice::Constant,
        noise_j: 4,
        noise_strength: 0.25,
        forcing_kind: ForcingChoice::Fixed,
        forcing_norm: 0.1,
        init_kind: InitChoice::Random,
        init_norm: NormChoice::H,
        init_value: 1.0,
        dt: 0.001,
        t_end: 40.0,
        paths: 64,
        seed: 8,
        observables: vec![Observable::VSq, Observable::HSq, Observable::L4Pow4],
        ..Config::default()
    };
    assert_eq!(c, expected);
    let d = c.build_damped().unwrap();
    assert_eq!(d.delta, 0.875);
    assert_eq!(d.gamma, 0.5);
    assert_eq!(d.default_horizon(), 40.0);
    assert!((d.forcing_h_sq() - 0.01).abs() < 1e-15);
    assert!((d.sim.initial.h_sq() - 1.0).abs() < 1e-12);
    assert!((d.v_average_bound() - 0.035).abs() < 1e-12);
}

#[test]
fn every_shipped_config_builds() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        let c = Config::from_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        c.build().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn linear_run_overlay_follows_the_exact_mean_energy() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = Config::from_file(&configs().join("linear_decay.conf")).unwrap();
    c.paths = 2;
    write_run(dir.path(), &c);
    let files = emit_plots(dir.path()).unwrap();
    assert_eq!(files.len(), 6);
    let t = Table::read(&dir.path().join("plots/norms_mean.csv")).unwrap();
    let (ct, cm, ce) = (t.col("t").unwrap(), t.col("h_sq_mean").unwrap(), t.col("h_sq_linear_exact").unwrap());
    assert_eq!(t.rows.len(), 101);
    for r in &t.rows {
        // exact decay e^{-2(α+ν)t} against the semi-implicit factor (1 + (α+ν)dt)^{-2k}
        assert!((r[ce] - (-3.0 * r[ct]).exp()).abs() < 1e-12);
        assert!((r[cm] - r[ce]).abs() <= 0.03 * r[ce], "t = {}: {} vs {}", r[ct], r[cm], r[ce]);
    }
}

#[test]
fn overlay_is_empty_for_nonlinear_runs() {
    let c = Config {
        t_end: 0.01,
        ..Config::default()
    };
    let grid = c.grid().unwrap();
    assert!(linear_mean_energy(&c, &c.initial_field(&grid), 0.0).is_none());
}

#[test]
fn stochastic_linear_mean_energy_matches_monte_carlo() {
    let c = Config {
        grid_m: 8,
        n: 2.0,
        advection: false,
        tamed: false,
        forcing_kind: ForcingChoice::Fixed,
        forcing_norm: 0.0,
        init_norm: NormChoice::H,
        init_value: 1.0,
        dt: 1e-3,
        t_end: 0.5,
        paths: 256,
        scheme: Scheme::SemiImplicit,
        ..Config::default()
    };
    let sim = c.build().unwrap();
    let ens = simulate_ensemble(&sim).unwrap();
    let finals: Vec<f64> = ens.trajectories.iter().map(|t| t.final_state.h_sq()).collect();
    let (mean, se) = tamed_nse::integrator::mean_se(&finals);
    let exact = linear_mean_energy(&c, &sim.initial, c.t_end).unwrap();
    // first-order bias of the scheme plus sampling error
    assert!((mean - exact).abs() <= 4.0 * se + 0.03 * exact, "{mean} ± {se} vs {exact}");
}

#[test]
fn empty_diagnostics_give_header_only_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(DIAGNOSTICS), DIAG_COLUMNS.join(",") + "\n").unwrap();
    let files = emit_plots(dir.path()).unwrap();
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        assert_eq!(text.lines().count(), 1, "{}", f.display());
    }
}

#[test]
fn missing_diagnostics_are_named() {
    let dir = tempfile::tempdir().unwrap();
    match emit_plots(dir.path()) {
        Err(Error::MissingInput(p)) => assert!(p.ends_with(DIAGNOSTICS)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn ensemble_means_and_snapshots_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let c = Config {
        grid_m: 8,
        n: 2.0,
        init_radius: 2.0,
        t_end: 0.05,
        dt: 5e-3,
        paths: 3,
        snapshot_every: 5,
        ..Config::default()
    };
    write_run(dir.path(), &c);
    emit_plots(dir.path()).unwrap();
    let mean = Table::read(&dir.path().join("plots/norms_mean.csv")).unwrap();
    assert!(mean.col("v_norm_se").is_ok());
    assert!(mean.rows.iter().all(|r| r[mean.col("paths").unwrap()] == 3.0));
    let diag = Table::read(&dir.path().join(DIAGNOSTICS)).unwrap();
    let last = diag.rows.iter().rev().find(|r| r[1] == 2.0).unwrap();
    let snap = snapshot::read(&dir.path().join(output::snapshot_name(2, 2)), None).unwrap();
    assert_eq!(snap.field.h_sq().sqrt(), last[diag.col("h_norm").unwrap()]);
    let spectrum = Table::read(&dir.path().join("plots/spectrum.csv")).unwrap();
    assert!(!spectrum.rows.is_empty());
}

#[test]
fn identical_seeds_give_identical_files() {
    let c = Config {
        grid_m: 8,
        n: 2.0,
        t_end: 0.05,
        dt: 5e-3,
        paths: 4,
        seed: 11,
        ..Config::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_run(a.path(), &c);
    write_run(b.path(), &c);
    for f in [DIAGNOSTICS, "snap_p00003_0001.tnse"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let other = Config { seed: 12, ..c };
    let d = tempfile::tempdir().unwrap();
    write_run(d.path(), &other);
    assert_ne!(std::fs::read(a.path().join(DIAGNOSTICS)).unwrap(), std::fs::read(d.path().join(DIAGNOSTICS)).unwrap());
}
