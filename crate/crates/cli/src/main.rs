use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tamed_nse::config::Config;
use tamed_nse::integrator::simulate_ensemble;
use tamed_nse::invariant::{damped_ensemble, tail_bound_check, v_average_check, Observable};
use tamed_nse::output::{self, Manifest};
use tamed_nse::verify::{self, Suite, VerifyOptions};
use tamed_nse::{plots, Error};

/// Exit status for usage and configuration errors.
const EXIT_USAGE: u8 = 1;
/// A verification suite reported at least one failed check.
const EXIT_VERIFY: u8 = 2;
/// A path blew up or lost a state invariant.
const EXIT_BLOWUP: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "tnse", version, about = "Stochastic tamed Navier-Stokes simulator and verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an ensemble and write diagnostics, snapshots and a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.paths`.
        #[arg(long)]
        paths: Option<usize>,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Extra `key=value` settings applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Run numerical checks and print one CSV row per check.
    Verify {
        /// operators, taming, energy, apriori or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        fields: Option<usize>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for `verify_<suite>.csv` and convergence tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time-averaged empirical measures of the damped system.
    Invariant {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated observables; defaults to `invariant.observables`.
        #[arg(long)]
        observables: Option<String>,
        /// Defaults to `invariant.burn_in`.
        #[arg(long = "burn-in")]
        burn_in: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Chebyshev level used to choose the tail radius.
        #[arg(long, default_value_t = 0.1)]
        level: f64,
        #[arg(long, default_value = "invariant")]
        out: PathBuf,
    },
    /// Derive plot-ready tables from a run directory.
    EmitPlots {
        run_dir: PathBuf,
    },
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::BlowUp { .. } | Error::Invariant { .. } => EXIT_BLOWUP,
        _ => EXIT_USAGE,
    }
}

fn load(path: &Path, set: &[String], paths: Option<usize>, seed: Option<u64>) -> tamed_nse::Result<Config> {
    let mut c = Config::from_file(path)?;
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        c.set(k.trim(), v.trim())?;
    }
    if let Some(p) = paths {
        c.paths = p;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn simulate(config: &Path, paths: Option<usize>, seed: Option<u64>, set: &[String], out: &Path) -> tamed_nse::Result<()> {
    let c = load(config, set, paths, seed)?;
    let sim = c.build()?;
    std::fs::create_dir_all(out)?;
    let mut manifest = Manifest::start(&c, &command_line());
    manifest.write(out, false)?;
    let ens = simulate_ensemble(&sim)?;
    output::write_diagnostics(out, &ens)?;
    output::write_snapshots(out, &ens)?;
    manifest.write(out, true)?;
    let hits = ens.trajectories.iter().filter(|t| t.hitting_time.is_finite()).count();
    eprintln!(
        "{} paths, {} steps each, {} stopped at R; wrote {}",
        ens.len(),
        sim.n_steps(),
        hits,
        out.display()
    );
    Ok(())
}

fn run_verify(
    suite: &str,
    fields: Option<usize>,
    paths: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> tamed_nse::Result<bool> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(suite)?]
    };
    let mut opts = VerifyOptions::default();
    if let Some(f) = fields {
        opts.fields = f;
    }
    if let Some(p) = paths {
        opts.paths = p;
    }
    if let Some(s) = seed {
        opts.seed = s;
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut ok = true;
    let stdout = std::io::stdout();
    for (i, &s) in suites.iter().enumerate() {
        let report = verify::run(s, &opts)?;
        report.write_csv(stdout.lock(), i == 0)?;
        stdout.lock().flush()?;
        eprintln!(
            "{}: {} in {:.1} s",
            s.name(),
            if report.passed() { "pass" } else { "FAIL" },
            report.seconds
        );
        if let Some(dir) = out {
            let f = std::fs::File::create(dir.join(format!("verify_{}.csv", s.name())))?;
            report.write_csv(f, true)?;
            for (name, rows) in verify::convergence_tables(&report) {
                plots::write_convergence(dir, &name, &rows)?;
            }
        }
        ok &= report.passed();
    }
    Ok(ok)
}

#[allow(clippy::too_many_arguments)]
fn invariant(
    config: &Path,
    observables: Option<&str>,
    burn_in: Option<f64>,
    paths: Option<usize>,
    seed: Option<u64>,
    set: &[String],
    level: f64,
    out: &Path,
) -> tamed_nse::Result<()> {
    let c = load(config, set, paths, seed)?;
    let obs = match observables {
        Some(list) => list.split(',').map(Observable::parse).collect::<tamed_nse::Result<Vec<_>>>()?,
        None => c.observables.clone(),
    };
    let burn_in = burn_in.unwrap_or(c.burn_in);
    let damped = c.build_damped()?;
    std::fs::create_dir_all(out)?;
    let mut manifest = Manifest::start(&c, &command_line());
    manifest.write(out, false)?;
    let ens = damped_ensemble(&damped, &obs, burn_in)?;
    let rows = output::write_invariant(out, &ens, &obs)?;
    let avg = v_average_check(&ens, &damped)?;
    let radius = damped.radius_for_level(level);
    let tail = tail_bound_check(&ens, &damped, radius)?;

    let mut w = csv::Writer::from_path(out.join("bounds.csv"))
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    let rec = |w: &mut csv::Writer<std::fs::File>, r: [String; 5]| {
        w.write_record(r).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    };
    rec(&mut w, ["check[-]", "estimate[code]", "se[code]", "bound[code]", "verdict[-]"].map(String::from))?;
    rec(
        &mut w,
        [
            "v_sq_time_average".into(),
            format!("{:?}", avg.estimate),
            format!("{:?}", avg.se),
            format!("{:?}", avg.bound + avg.allowance),
            if avg.pass() { "PASS" } else { "FAIL" }.into(),
        ],
    )?;
    rec(
        &mut w,
        [
            format!("tail_probability_R_{radius:.4}"),
            format!("{:?}", tail.estimate),
            format!("{:?}", tail.se),
            format!("{:?}", tail.chebyshev),
            if tail.pass() { "PASS" } else { "FAIL" }.into(),
        ],
    )?;
    w.flush()?;
    manifest.write(out, true)?;

    println!("observable,burn_in,time_average,se,samples");
    for r in &rows {
        println!("{},{},{},{},{}", r.observable, r.burn_in, r.average, r.se, r.samples);
    }
    eprintln!(
        "delta = {}, gamma = {}, default horizon 20/gamma = {}",
        damped.delta,
        damped.gamma,
        damped.default_horizon()
    );
    eprintln!(
        "time-averaged V norm squared {:.5} +- {:.5} against bound {:.5} (+ allowance {:.2e})",
        avg.estimate, avg.se, avg.bound, avg.allowance
    );
    eprintln!(
        "tail at R = {radius:.4}: {:.5} +- {:.5} against Chebyshev {:.5}",
        tail.estimate, tail.se, tail.chebyshev
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, paths, seed, set, out } => simulate(config, *paths, *seed, set, out).map(|_| true),
        Command::Verify { suite, fields, paths, seed, out } => run_verify(suite, *fields, *paths, *seed, out.as_deref()),
        Command::Invariant { config, observables, burn_in, paths, seed, set, level, out } => {
            invariant(config, observables.as_deref(), *burn_in, *paths, *seed, set, *level, out).map(|_| true)
        }
        Command::EmitPlots { run_dir } => plots::emit_plots(run_dir).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
