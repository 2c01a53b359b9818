//! Acceptance criteria, one PASS/FAIL line each, with the checks behind every
//! line indented underneath. Runs without the libtest harness so the lines
//! reach the terminal; exits nonzero when a criterion is red that is not in
//! `KNOWN_RED`, or when a known-red criterion turns green.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use tamed_nse::config::Config;
use tamed_nse::integrator::simulate_ensemble;
use tamed_nse::invariant::{damped_ensemble, tail_bound_check, v_average_check};
use tamed_nse::output::{self, Manifest, DIAGNOSTICS, MANIFEST};
use tamed_nse::verify::{self, CheckRow, Verdict, VerifyOptions};

/// Criteria expected to be red, with the rows that make them red.
///
/// Criterion 4 contains the bound `((-g_n u, u)) <= 2N|∇u|² - 2‖|u||∇u|‖²`,
/// which does not hold. Integrating by parts,
/// `((-g_n u, u)) = -∫g(|u|²)|∇u|² - ½∫g'(|u|²)|∇|u|²|²`, and since
/// `g(r) >= r - N - 4/27` the best available bound carries coefficient 1 on
/// `‖|u||∇u|‖²`, not 2. The circular shear `u = A(cos x₃, sin x₃, 0)` has
/// `|u| = A` and `|∇u| = A` pointwise, so for `A² >= N + 1` the left side is
/// `-(A² - N)|∇u|²` and the stated bound is off by `(A² - N)|∇u|² > 0`.
/// The sharp form `(N + 4/27)|∇u|² - ‖|u||∇u|‖²` is checked alongside and
/// holds.
const KNOWN_RED: &[(u32, &[&str])] = &[(4, &["tamed_gradient_pairing_stated", "tamed_gradient_pairing_stated_shear"])];

struct Outcome {
    id: u32,
    title: &'static str,
    rows: Vec<CheckRow>,
    elapsed: Duration,
    limit: Option<Duration>,
}

impl Outcome {
    fn failing(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect()
    }

    fn green(&self) -> bool {
        self.failing().is_empty() && self.limit.is_none_or(|l| self.elapsed <= l)
    }
}

fn row(name: &str, reference: &str, observed: f64, bound: f64, ok: bool) -> CheckRow {
    CheckRow {
        name: name.to_string(),
        reference: reference.to_string(),
        observed,
        bound,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn timed(
    id: u32,
    title: &'static str,
    limit: Option<Duration>,
    f: impl FnOnce() -> tamed_nse::Result<Vec<CheckRow>>,
) -> Outcome {
    let start = Instant::now();
    let rows = f().unwrap_or_else(|e| vec![row("error", "criterion raised an error", f64::NAN, f64::NAN, false).with_note(&e.to_string())]);
    Outcome {
        id,
        title,
        rows,
        elapsed: start.elapsed(),
        limit,
    }
}

trait WithNote {
    fn with_note(self, note: &str) -> Self;
}

impl WithNote for CheckRow {
    fn with_note(mut self, note: &str) -> Self {
        self.reference = format!("{}: {note}", self.reference);
        self
    }
}

fn invariant_bound() -> tamed_nse::Result<Vec<CheckRow>> {
    let c = Config::from_file(&configs_dir().join("invariant.conf"))?;
    let d = c.build_damped()?;
    let mut rows = vec![
        row("delta", "dissipation margin delta = 7/8", d.delta, 0.875, (d.delta - 0.875).abs() <= 1e-12),
        row("gamma", "gamma = min(alpha/2, delta) = 1/2", d.gamma, 0.5, (d.gamma - 0.5).abs() <= 1e-12),
        row("forcing_h_sq", "|f|_H^2 = 0.01 after projection", d.forcing_h_sq(), 0.01, (d.forcing_h_sq() - 0.01).abs() <= 1e-12),
    ];
    let ens = damped_ensemble(&d, &c.observables, c.burn_in)?;
    let avg = v_average_check(&ens, &d)?;
    rows.push(row(
        "v_average_bound",
        "|u0|^2/(2 gamma T) + |f|^2/(4 gamma^2) = 0.025 + 0.01",
        avg.bound,
        0.035,
        (avg.bound - 0.035).abs() <= 1e-12,
    ));
    rows.push(row(
        "v_sq_time_average",
        "MC (1/T) int E||u||_V^2 <= bound + 3 SE + dt allowance",
        avg.estimate,
        avg.bound + 3.0 * avg.se + avg.allowance,
        avg.pass(),
    ));
    let radius = d.radius_for_level(0.1);
    let tail = tail_bound_check(&ens, &d, radius)?;
    rows.push(row(
        "tail_probability",
        &format!("time-averaged P(||u||_V > R), R = {radius:.4} with Chebyshev level 0.1, <= 0.1 + 3 SE"),
        tail.estimate,
        tail.chebyshev + 3.0 * tail.se,
        tail.pass() && (tail.chebyshev - 0.1).abs() <= 1e-12,
    ));
    Ok(rows)
}

/// Run `file` (with `edits`), replay it from the written manifest, and
/// compare the two `diagnostics.csv` files byte for byte.
fn replay(file: &str, edits: &[(&str, &str)]) -> tamed_nse::Result<CheckRow> {
    let mut c = Config::from_file(&configs_dir().join(file))?;
    for (k, v) in edits {
        c.set(k, v)?;
    }
    let first = tempfile::tempdir()?;
    let second = tempfile::tempdir()?;
    let mut m = Manifest::start(&c, "acceptance");
    output::write_diagnostics(first.path(), &simulate_ensemble(&c.build()?)?)?;
    m.write(first.path(), true)?;
    let replayed = Config::from_file(&first.path().join(MANIFEST))?;
    output::write_diagnostics(second.path(), &simulate_ensemble(&replayed.build()?)?)?;
    let a = std::fs::read(first.path().join(DIAGNOSTICS))?;
    let b = std::fs::read(second.path().join(DIAGNOSTICS))?;
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
    Ok(row(
        &format!("bitwise_replay_{}", file.trim_end_matches(".conf")),
        &format!("diagnostics.csv ({} bytes) identical after replaying the manifest", a.len()),
        differing as f64,
        0.0,
        differing == 0 && replayed == c && !a.is_empty(),
    ))
}

fn main() -> ExitCode {
    let opts = VerifyOptions::default();
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let mut outcomes = Vec::new();

    let mut run = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };

    run(timed(1, "operator identities, 1000 random fields, <= 1e-12, < 30 s", Some(Duration::from_secs(30)), || {
        verify::projection_checks(&opts)
    }));
    run(timed(2, "taming function values, bounds, Lipschitz constant, C1 gluing", None, || {
        verify::taming_checks(&opts)
    }));
    run(timed(3, "advection against the brute-force triad sum, skew-symmetry", None, || {
        verify::nonlinearity_checks(&opts)
    }));
    run(timed(4, "operator inequalities, 1000 fields, amplitudes 1e-2..1e2", None, || {
        let mut r = verify::inequality_checks(&opts)?;
        r.extend(verify::lipschitz_checks(&opts)?);
        Ok(r)
    }));
    run(timed(5, "linear decay order in [0.9, 1.1], strong order >= 0.45, 128 paths, < 5 min", min(5), || {
        let mut r = verify::linear_convergence()?;
        r.extend(verify::strong_order(&opts)?);
        Ok(r)
    }));
    run(timed(6, "energy-budget residual order >= 1, full tamed system", None, || {
        verify::budget_order(&opts)
    }));
    run(timed(7, "a-priori monitors bounded across n = 4, 6, 8, 128 paths", None, || {
        verify::apriori_ladder(&opts)
    }));
    run(timed(8, "time-averaged V-norm bound and Chebyshev tail, 64 paths, T = 40, < 10 min", min(10), invariant_bound));
    run(timed(9, "bitwise-identical diagnostics when replaying a manifest", None, || {
        Ok(vec![
            replay("apriori.conf", &[("run.paths", "16")])?,
            replay("invariant.conf", &[("run.paths", "4"), ("time.T", "4")])?,
            replay("efficacy.conf", &[("run.paths", "1"), ("time.T", "0.5")])?,
        ])
    }));
    run(timed(10, "taming on stays finite from rms velocity 10 over T = 5", None, || {
        verify::taming_efficacy(&opts)
    }));

    let mut ok = true;
    println!();
    for o in &outcomes {
        let known = KNOWN_RED.iter().find(|(id, _)| *id == o.id);
        match (o.green(), known) {
            (true, None) => {}
            (false, Some((_, rows))) => {
                let mut failing = o.failing();
                failing.sort_unstable();
                let mut expected = rows.to_vec();
                expected.sort_unstable();
                if failing != expected {
                    println!("criterion {}: known red, but failing rows {:?} differ from {:?}", o.id, failing, expected);
                    ok = false;
                }
            }
            (true, Some(_)) => {
                println!("criterion {}: listed as known red but passed; update KNOWN_RED", o.id);
                ok = false;
            }
            (false, None) => {
                println!("criterion {}: FAIL", o.id);
                ok = false;
            }
        }
    }
    let green = outcomes.iter().filter(|o| o.green()).count();
    println!("{green}/{} criteria green, {} known red", outcomes.len(), KNOWN_RED.len());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn report(o: &Outcome) {
    let known = KNOWN_RED.iter().any(|(id, _)| *id == o.id);
    let verdict = match (o.green(), known) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known red)",
        (false, false) => "FAIL",
    };
    let time = match o.limit {
        Some(l) => format!("{:.1} s of {:.0} s", o.elapsed.as_secs_f64(), l.as_secs_f64()),
        None => format!("{:.1} s", o.elapsed.as_secs_f64()),
    };
    println!("criterion {:>2} {verdict}: {} [{time}]", o.id, o.title);
    for r in &o.rows {
        println!(
            "    {:<5} {:<44} observed {:<24} bound {:<24} {}",
            r.verdict.name(),
            r.name,
            format!("{:e}", r.observed),
            format!("{:e}", r.bound),
            r.reference
        );
    }
}
