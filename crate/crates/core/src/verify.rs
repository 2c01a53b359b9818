//! Verification suites: operator identities, taming properties, integrator
//! convergence, the energy budget, and the a-priori monitor ladder.
//!
//! Each check yields one [`CheckRow`] with the observed value, the bound it is
//! judged against and a verdict. Sign-type inequalities `lhs <= rhs` are
//! reported as the largest normalized residual `(lhs - rhs) / scale` over the
//! sample, judged against a rounding tolerance.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Config, ForcingChoice, InitChoice, NormChoice};
use crate::diagnostics::{
    apriori_monitors, drift_dissipation, ensemble_budget_rms, higher_moment_monitor, ladder_verdict, u_grad_sq,
};
use crate::error::{Error, Result};
use crate::field::{Norm, PhysicalField, SpectralField};
use crate::grid::{Grid, C64};
use crate::integrator::{simulate_ensemble, simulate_path, SimConfig};
use crate::noise::{NoiseKind, NoiseModel};
use crate::operators::{forcing_fn, growth_functional_f, nonlinear_b, tamed_gn, DriftParams, Forcing};
use crate::taming::TamingFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Operators,
    Taming,
    Energy,
    Apriori,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Operators, Suite::Taming, Suite::Energy, Suite::Apriori];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Operators => "operators",
            Suite::Taming => "taming",
            Suite::Energy => "energy",
            Suite::Apriori => "apriori",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported only.
    Info,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Info => "INFO",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    /// The property being checked, in words.
    pub reference: String,
    pub observed: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

impl CheckRow {
    /// Passes when `observed <= bound`; NaN fails.
    pub fn le(name: &str, reference: &str, observed: f64, bound: f64) -> Self {
        Self::judged(name, reference, observed, bound, observed <= bound)
    }

    pub fn judged(name: &str, reference: &str, observed: f64, bound: f64, ok: bool) -> Self {
        CheckRow {
            name: name.into(),
            reference: reference.into(),
            observed,
            bound,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        }
    }

    pub fn info(name: &str, reference: &str, observed: f64, bound: f64) -> Self {
        CheckRow {
            name: name.into(),
            reference: reference.into(),
            observed,
            bound,
            verdict: Verdict::Info,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Random fields per operator inequality.
    pub fields: usize,
    /// Monte-Carlo paths per ensemble.
    pub paths: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            fields: 1000,
            paths: 128,
            seed: 0x7a3e,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub suite: Suite,
    pub rows: Vec<CheckRow>,
    pub seconds: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// `suite,name,reference,observed,bound,verdict` lines with a header.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        if header {
            w.write_record(["suite", "name", "reference", "observed", "bound", "verdict"])
                .map_err(io)?;
        }
        for r in &self.rows {
            w.write_record([
                self.suite.name(),
                &r.name,
                &r.reference,
                &format!("{:e}", r.observed),
                &format!("{:e}", r.bound),
                r.verdict.name(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run(suite: Suite, opts: &VerifyOptions) -> Result<Report> {
    let start = Instant::now();
    let rows = match suite {
        Suite::Operators => {
            let mut r = projection_checks(opts)?;
            r.extend(nonlinearity_checks(opts)?);
            r.extend(inequality_checks(opts)?);
            r.extend(lipschitz_checks(opts)?);
            r
        }
        Suite::Taming => taming_checks(opts)?,
        Suite::Energy => {
            let mut r = linear_convergence()?;
            r.extend(strong_order(opts)?);
            r.extend(budget_order(opts)?);
            r
        }
        Suite::Apriori => {
            let mut r = apriori_ladder(opts)?;
            r.extend(taming_efficacy(opts)?);
            r
        }
    };
    Ok(Report {
        suite,
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn rng_for(seed: u64, tag: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    r.set_stream(i as u64);
    r
}

/// Largest value of `f` over `count` seeded samples; NaN counts as `+∞`.
fn max_over(count: usize, seed: u64, tag: u64, f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> f64 {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let v = f(&mut rng_for(seed, tag, i));
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

fn box_grid(m: usize) -> Arc<Grid> {
    Grid::new(m, 2.0 * PI).expect("valid grid")
}

/// Random field in the ball with rms velocity log-uniform in `[10⁻², 10²]`.
pub fn random_amplitude_field<R: Rng>(g: &Arc<Grid>, n: f64, rng: &mut R) -> SpectralField {
    let a = 10f64.powf(rng.random_range(-2.0..2.0));
    SpectralField::random(g, n, rng).normalized(Norm::H, a * g.volume().sqrt())
}

/// `(lhs - rhs) / scale`, with `scale` the sum of magnitudes of the terms.
fn residual(lhs: f64, rhs: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        lhs - rhs
    } else {
        (lhs - rhs) / scale
    }
}

const EXACT: f64 = 1e-12;
const ROUNDING: f64 = 1e-10;

/// Spectral-core identities on `M = 16`, `n = 4`.
pub fn projection_checks(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let g = box_grid(16);
    let n = 4.0;
    let wide = 7.0;
    let k = opts.fields;
    let s = opts.seed;
    let mut rows = Vec::new();

    let idem = max_over(k, s, 1, |r| {
        let u = random_amplitude_field(&g, wide, r);
        let p = u.project_ball(n);
        p.project_ball(n).sub(&p).norm(Norm::H) / u.norm(Norm::H)
    });
    rows.push(CheckRow::le("projection_idempotent", "P_n P_n u = P_n u", idem, EXACT));

    let orth = max_over(k, s, 2, |r| {
        let u = random_amplitude_field(&g, wide, r);
        let v = random_amplitude_field(&g, n, r);
        let d = u.sub(&u.project_ball(n));
        d.inner(&v).abs() / (u.norm(Norm::H) * v.norm(Norm::H))
    });
    rows.push(CheckRow::le("projection_orthogonal", "<u - P_n u, v> = 0 for v in H_n", orth, EXACT));

    let contraction = max_over(k, s, 3, |r| {
        let u = random_amplitude_field(&g, wide, r);
        (u.project_ball(n).norm(Norm::V) - u.norm(Norm::V)) / u.norm(Norm::V)
    });
    rows.push(CheckRow::le("projection_v_contraction", "||P_n u||_V <= ||u||_V", contraction, EXACT));

    let commute = max_over(k, s, 4, |r| {
        let u = random_amplitude_field(&g, n, r);
        let au = u.stokes_apply(1.0, 0.0);
        au.project_ball(n).sub(&au).norm(Norm::H) / au.norm(Norm::H)
    });
    rows.push(CheckRow::le("projection_commutes_with_a", "P_n A u = A u on H_n", commute, EXACT));

    let gradients = max_over(k, s, 5, |r| {
        let p = random_amplitude_field(&g, wide, r);
        let mut grad = SpectralField::zeros_in(&g, wide);
        let sup = grad.support().clone();
        for q in 0..sup.len() {
            let kq = g.wavevector(sup.indices()[q]);
            let pq = p.coeffs()[0][q];
            for c in 0..3 {
                grad.coeffs_mut()[c][q] = C64::new(0.0, kq[c]) * pq;
            }
        }
        grad.leray_project().norm(Norm::H) / grad.norm(Norm::H)
    });
    rows.push(CheckRow::le("leray_annihilates_gradients", "Leray projection of a gradient is zero", gradients, EXACT));

    let div = max_over(k, s, 6, |r| {
        let u = random_amplitude_field(&g, wide, r);
        let mut raw = u.clone();
        for c in raw.coeffs_mut() {
            for z in c.iter_mut() {
                *z *= C64::new(r.random_range(0.5..1.5), 0.0);
            }
        }
        raw.symmetrize();
        raw.leray_project().divergence_defect()
    });
    rows.push(CheckRow::le("leray_divergence_free", "|div Pi u| <= 1e-12 |grad u|", div, EXACT));

    let parseval = max_over(k, s, 7, |r| {
        let u = random_amplitude_field(&g, wide, r);
        let q = u.to_physical().l2_sq();
        (q - u.h_sq()).abs() / u.h_sq()
    });
    rows.push(CheckRow::le("parseval_quadrature", "spectral |u|_H^2 equals grid quadrature", parseval, ROUNDING));

    let sq_bound = max_over(k, s, 8, |r| {
        let u = random_amplitude_field(&g, n, r);
        u.stokes_apply(1.0, 0.0).norm(Norm::H) / (n * n * u.norm(Norm::H))
    });
    rows.push(CheckRow::le("stokes_bound_n_squared", "|A u| <= n^2 |u| on H_n", sq_bound, 1.0 + EXACT));
    rows.push(CheckRow::info(
        "stokes_bound_linear_in_n",
        "|A u| / (n |u|) on H_n; the bound n is not dimensionally consistent",
        sq_bound * n,
        1.0,
    ));

    let equiv = max_over(k, s, 9, |r| {
        let u = random_amplitude_field(&g, n, r);
        let (h, v) = (u.norm(Norm::H), u.norm(Norm::V));
        ((h - v) / v).max(v / ((1.0 + n * n).sqrt() * h) - 1.0)
    });
    rows.push(CheckRow::le("norm_equivalence_on_ball", "|u| <= ||u||_V <= sqrt(1 + n^2) |u|", equiv, EXACT));

    // convergence of P_n psi for a fixed smooth psi
    let mut psi = SpectralField::random(&g, wide, &mut rng_for(s, 10, 0));
    {
        let sup = psi.support().clone();
        for c in psi.coeffs_mut() {
            for (p, z) in c.iter_mut().enumerate() {
                *z *= (-sup.k_squared(p) / 8.0).exp();
            }
        }
    }
    let radii: Vec<f64> = (1..=16).map(|i| 0.5 * i as f64).collect();
    let mut worst_increase: f64 = f64::NEG_INFINITY;
    let mut last: f64 = 0.0;
    for which in [Norm::H, Norm::V, Norm::Sobolev(1.5)] {
        let errs: Vec<f64> = radii.iter().map(|&r| psi.sub(&psi.project_ball(r)).norm(which)).collect();
        for w in errs.windows(2) {
            worst_increase = worst_increase.max((w[1] - w[0]) / errs[0]);
        }
        last = last.max(errs[errs.len() - 1] / errs[0]);
    }
    rows.push(CheckRow::le(
        "projection_error_nonincreasing",
        "|P_n psi - psi| in H, V, V_1.5 is nonincreasing in n",
        worst_increase,
        0.0,
    ));
    rows.push(CheckRow::le("projection_error_vanishes", "P_n psi -> psi at the grid limit", last, EXACT));
    Ok(rows)
}

/// Direct evaluation of `P_n Π[(u·∇)u]` as a sum over interacting triads.
pub fn convolution_oracle(u: &SpectralField, n: f64) -> SpectralField {
    let g = u.grid();
    let sup = u.support();
    let mut out = SpectralField::zeros_in(g, n);
    let target = out.support().clone();
    let zs: Vec<[i64; 3]> = sup.indices().iter().map(|&i| g.integer_wavevector(i)).collect();
    for t in 0..target.len() {
        let zk = g.integer_wavevector(target.indices()[t]);
        let mut acc = [C64::default(); 3];
        for (p, zp) in zs.iter().enumerate() {
            let zq = [zk[0] - zp[0], zk[1] - zp[1], zk[2] - zp[2]];
            let Some(q) = g.index_of(zq).and_then(|i| sup.position(i)) else {
                continue;
            };
            let kq = g.wavevector(sup.indices()[q]);
            let mut s = C64::default();
            for a in 0..3 {
                s += u.coeffs()[a][p] * C64::new(0.0, kq[a]);
            }
            for c in 0..3 {
                acc[c] += s * u.coeffs()[c][q];
            }
        }
        for c in 0..3 {
            out.coeffs_mut()[c][t] = acc[c];
        }
    }
    out.remove_mean();
    out.leray_project()
}

/// Advection against the triad oracle on `M = 16`, `n = 4`, and skewness.
pub fn nonlinearity_checks(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let g = box_grid(16);
    let n = 4.0;
    let oracle = max_over(100, opts.seed, 20, |r| {
        let u = random_amplitude_field(&g, n, r);
        let b = nonlinear_b(&u);
        let o = convolution_oracle(&u, n);
        b.sub(&o).norm(Norm::H) / o.norm(Norm::H)
    });
    let skew = max_over(opts.fields, opts.seed, 21, |r| {
        let u = random_amplitude_field(&g, n, r);
        let b = nonlinear_b(&u);
        b.inner(&u).abs() / (u.norm(Norm::H) * u.norm(Norm::V) * u.norm(Norm::DA))
    });
    let shear = {
        let z = C64::default();
        let u = SpectralField::single_mode(&g, [0, 0, 1], [C64::new(0.0, -0.5), z, z]);
        nonlinear_b(&u).norm(Norm::H) / u.norm(Norm::H)
    };
    Ok(vec![
        CheckRow::le("advection_matches_triad_sum", "pseudo-spectral B_n equals the direct triad sum, 100 fields", oracle, ROUNDING),
        CheckRow::le("advection_skew", "<B_n(u), u> = 0 relative to |u| ||u||_V |u|_D(A)", skew, ROUNDING),
        CheckRow::le("advection_of_shear", "B_n(sin x3, 0, 0) = 0", shear, EXACT),
    ])
}

/// Parameters of the inequality suite: `ν = 1`, `α = 0`, `N = 10`, state
/// forcing with `κ = 0.1` and `|f₀| = 0.3`.
pub fn inequality_params(g: &Arc<Grid>) -> DriftParams {
    let f0 = SpectralField::random(g, 2.0, &mut ChaCha8Rng::seed_from_u64(17)).normalized(Norm::H, 0.3);
    DriftParams {
        nu: 1.0,
        alpha: 0.0,
        taming: TamingFunction::new(10.0).expect("positive"),
        forcing: Forcing::State { f0, kappa: 0.1 },
        advection: true,
        tamed: true,
    }
}

/// The stated gradient-pairing bound for the tamed term,
/// `((-g_n u, u)) <= 2N|∇u|² - 2‖|u||∇u|‖²`, as a normalized residual.
pub fn tamed_gradient_residual(u: &SpectralField, tf: &TamingFunction) -> f64 {
    let lhs = -tamed_gn(u, tf).inner_grad(u);
    let grad = u.grad_sq();
    let ug = u_grad_sq(u);
    let c = 2.0 * tf.sup_phi_prime_r();
    residual(lhs, c * grad - 2.0 * ug, lhs.abs() + c * grad + 2.0 * ug)
}

/// `u = A(cos x₃, sin x₃, 0)`: constant modulus `A`, so the tamed term is
/// `(A² - N)u` once `A² >= N + 1`.
pub fn circular_shear(g: &Arc<Grid>, amplitude: f64) -> SpectralField {
    let h = 0.5 * amplitude;
    SpectralField::single_mode(g, [0, 0, 1], [C64::new(h, 0.0), C64::new(0.0, -h), C64::default()])
}

/// Operator inequalities over random fields of amplitude 10⁻²..10².
pub fn inequality_checks(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let g = box_grid(16);
    let n = 4.0;
    let p = inequality_params(&g);
    let tf = p.taming;
    let big_n = tf.threshold();
    let constant = NoiseModel::constant(4, 0.25)?;
    let banded = NoiseModel::new(NoiseKind::Banded { beta: 0.5, band: 1 }, 4, 0.25)?;
    let (k, s) = (opts.fields, opts.seed);
    let mut rows = Vec::new();

    let advection_pairing = max_over(k, s, 30, |r| {
        let u = random_amplitude_field(&g, n, r);
        let lhs = nonlinear_b(&u).inner_grad(&u).abs();
        let rhs = 0.5 * u.norm_sq(Norm::DA) + 0.5 * u_grad_sq(&u);
        residual(lhs, rhs, rhs)
    });
    rows.push(CheckRow::le(
        "advection_gradient_pairing",
        "|((B_n u, u))| <= |u|_D(A)^2 / 2 + || |u| |grad u| ||^2 / 2",
        advection_pairing,
        ROUNDING,
    ));

    let literal = max_over(k, s, 31, |r| tamed_gradient_residual(&random_amplitude_field(&g, n, r), &tf));
    rows.push(CheckRow::le(
        "tamed_gradient_pairing_stated",
        "((-g_n u, u)) <= 2N |grad u|^2 - 2 || |u| |grad u| ||^2",
        literal,
        ROUNDING,
    ));
    let counter = tamed_gradient_residual(&circular_shear(&g, (4.0 * big_n).sqrt()), &tf);
    rows.push(CheckRow::le(
        "tamed_gradient_pairing_stated_shear",
        "same bound at u = A(cos x3, sin x3, 0), A^2 = 4N",
        counter,
        ROUNDING,
    ));
    let corrected = max_over(k, s, 32, |r| {
        let u = random_amplitude_field(&g, n, r);
        let lhs = -tamed_gn(&u, &tf).inner_grad(&u);
        let grad = u.grad_sq();
        let ug = u_grad_sq(&u);
        residual(lhs, tf.sup_phi() * grad - ug, lhs.abs() + tf.sup_phi() * grad + ug)
    });
    rows.push(CheckRow::le(
        "tamed_gradient_pairing_sharp",
        "((-g_n u, u)) <= (N + 4/27) |grad u|^2 - || |u| |grad u| ||^2",
        corrected,
        ROUNDING,
    ));

    let second = max_over(k, s, 33, |r| {
        let u = random_amplitude_field(&g, n, r);
        let lhs = -tamed_gn(&u, &tf).inner(&u);
        let l4 = u.to_physical().l4_pow4();
        let c = big_n + 1.0;
        residual(lhs, -l4 + c * u.h_sq(), lhs.abs() + l4 + c * u.h_sq())
    });
    rows.push(CheckRow::le(
        "tamed_energy_pairing",
        "<-g_n u, u> <= -||u||_L4^4 + (N + 1) |u|^2",
        second,
        ROUNDING,
    ));

    for (name, nm) in [("constant", &constant), ("banded", &banded)] {
        let h = max_over(k, s, 34, |r| {
            let u = random_amplitude_field(&g, n, r);
            let grad = u.grad_sq();
            residual(nm.hs_norm_sq(&u), 0.25 * grad, 0.25 * grad)
        });
        rows.push(CheckRow::le(
            &format!("noise_h_bound_{name}"),
            "sum_j |G_j u|^2 <= |grad u|^2 / 4",
            h,
            ROUNDING,
        ));
        let cs = nm.c_sigma(g.length());
        let v = max_over(k, s, 35, |r| {
            let u = random_amplitude_field(&g, n, r);
            let rhs = 0.5 * u.lap_sq() + cs * u.grad_sq();
            residual(nm.hs_norm_sq_v(&u), rhs, rhs)
        });
        rows.push(CheckRow::le(
            &format!("noise_v_bound_{name}"),
            "sum_j ||G_j u||_V^2 <= |A u|^2 / 2 + C_sigma |grad u|^2",
            v,
            ROUNDING,
        ));
    }

    let delta = (2.0 * p.nu - constant.bound_check()) / 2.0;
    rows.push(CheckRow::le("dissipation_margin", "delta = (2 nu - sup sum |sigma_j|^2) / 2 is 7/8", (delta - 0.875).abs(), EXACT));
    let h3 = max_over(k, s, 36, |r| {
        let u = random_amplitude_field(&g, n, r);
        let grad = u.grad_sq();
        residual(2.0 * delta * grad, 2.0 * p.nu * grad - constant.hs_norm_sq(&u), 2.0 * p.nu * grad)
    });
    rows.push(CheckRow::le("dissipation_margin_holds", "2 nu |grad u|^2 - sum_j |G_j u|^2 >= 2 delta |grad u|^2", h3, ROUNDING));

    let k1 = p.k1();
    let growth = max_over(k, s, 37, |r| {
        let u = random_amplitude_field(&g, n, r);
        let f = growth_functional_f(&u, &p, &constant);
        let rhs = k1 * (1.0 + u.h_sq());
        residual(f, rhs, f.abs() + rhs)
    });
    rows.push(CheckRow::le("growth_functional_bound", "F(u) <= K_1 (1 + |u|^2), K_1 = 3/4 + 2 C_f + 2 |b_f|_L1", growth, ROUNDING));

    let cnf = p.c_nf();
    let bf = p.forcing.b_f_l1();
    let dis = max_over(k, s, 38, |r| {
        let u = random_amplitude_field(&g, n, r);
        let d = drift_dissipation(&u, &p, &constant);
        let l4 = u.to_physical().l4_pow4();
        let rhs = -0.875 * u.grad_sq() - l4 + cnf * u.h_sq() + 0.5 * bf;
        residual(d, rhs, d.abs() + 0.875 * u.grad_sq() + l4 + cnf * u.h_sq() + 0.5 * bf)
    });
    rows.push(CheckRow::le(
        "dissipation_bound",
        "D(u) <= -7/8 |grad u|^2 - ||u||_L4^4 + C_Nf |u|^2 + |b_f|_L1 / 2, C_Nf = N + 3/2 + C_f / 2",
        dis,
        ROUNDING,
    ));
    let dis_74 = max_over(k, s, 38, |r| {
        let u = random_amplitude_field(&g, n, r);
        let d = drift_dissipation(&u, &p, &constant);
        let l4 = u.to_physical().l4_pow4();
        let rhs = -1.75 * u.grad_sq() - l4 + cnf * u.h_sq() + 0.5 * bf;
        residual(d, rhs, d.abs() + 1.75 * u.grad_sq() + l4 + cnf * u.h_sq() + 0.5 * bf)
    });
    rows.push(CheckRow::info(
        "dissipation_bound_coefficient_7_4",
        "same bound with coefficient 7/4 on |grad u|^2; reported only",
        dis_74,
        ROUNDING,
    ));

    let large = |tag: u64, f: &(dyn Fn(&SpectralField) -> f64 + Sync)| {
        max_over(k.min(200), s, tag, |r| {
            let a = 10f64.powf(r.random_range(2.0..3.0));
            let u = SpectralField::random(&g, n, r).normalized(Norm::H, a * g.volume().sqrt());
            f(&u)
        })
    };
    let f_large = large(39, &|u| growth_functional_f(u, &p, &constant).signum());
    rows.push(CheckRow::judged("growth_functional_negative_at_large_amplitude", "F(u) < 0 for rms velocity 1e2..1e3", f_large, 0.0, f_large < 0.0));
    let d_large = large(40, &|u| drift_dissipation(u, &p, &constant).signum());
    rows.push(CheckRow::judged("dissipation_negative_at_large_amplitude", "D(u) < 0 for rms velocity 1e2..1e3", d_large, 0.0, d_large < 0.0));

    let kappa = p.forcing.kappa();
    let lip = max_over(k, s, 41, |r| {
        let u = random_amplitude_field(&g, n, r);
        let v = random_amplitude_field(&g, n, r);
        forcing_fn(&u, &p).sub(&forcing_fn(&v, &p)).norm(Norm::H) / u.sub(&v).norm(Norm::H)
    });
    rows.push(CheckRow::le("forcing_lipschitz", "|f_n(u) - f_n(v)| <= kappa |u - v|", lip, kappa * (1.0 + EXACT)));
    Ok(rows)
}

/// Empirical Lipschitz ratios of each operator over nested V-balls.
pub fn lipschitz_checks(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let g = box_grid(16);
    let n = 4.0;
    let p = inequality_params(&g);
    let nm = NoiseModel::constant(4, 0.25)?;
    let radii = [1.0, 10.0, 100.0, 1000.0];
    let pairs: Vec<(SpectralField, SpectralField)> = (0..opts.fields.min(200))
        .into_par_iter()
        .map(|i| {
            let mut r = rng_for(opts.seed, 50, i);
            let ru = 10f64.powf(r.random_range(0.0..3.0));
            let u = SpectralField::random(&g, n, &mut r).normalized(Norm::V, ru);
            let w = SpectralField::random(&g, n, &mut r).normalized(Norm::V, ru * 10f64.powf(r.random_range(-3.0..0.0)));
            let v = u.add(&w);
            (u, v)
        })
        .collect();
    type Op<'a> = Box<dyn Fn(&SpectralField) -> SpectralField + Sync + 'a>;
    let ops: Vec<(&str, Op)> = vec![
        ("advection", Box::new(nonlinear_b)),
        ("tamed", Box::new(|u: &SpectralField| tamed_gn(u, &p.taming))),
        ("forcing", Box::new(|u: &SpectralField| forcing_fn(u, &p))),
        ("noise", Box::new(|u: &SpectralField| nm.apply(u, 0))),
    ];
    let mut rows = Vec::new();
    for (name, op) in &ops {
        let ratios: Vec<(f64, f64)> = pairs
            .par_iter()
            .map(|(u, v)| {
                let r = u.norm(Norm::V).max(v.norm(Norm::V));
                (r, op(u).sub(&op(v)).norm(Norm::V) / u.sub(v).norm(Norm::V))
            })
            .collect();
        let lip: Vec<f64> = radii
            .iter()
            .map(|&rad| {
                ratios
                    .iter()
                    .filter(|(r, _)| *r <= rad)
                    .map(|x| x.1)
                    .fold(0.0, f64::max)
            })
            .collect();
        let ok = lip.iter().all(|x| x.is_finite()) && lip.windows(2).all(|w| w[1] >= w[0]);
        rows.push(CheckRow::judged(
            &format!("lipschitz_on_balls_{name}"),
            "increment ratio finite and nondecreasing over V-balls of radius 1..1000",
            lip[lip.len() - 1],
            f64::INFINITY,
            ok,
        ));
    }
    Ok(rows)
}

/// Taming function properties for several thresholds.
pub fn taming_checks(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let samples = 100_000usize;
    let thresholds = [0.5, 10.0, 1000.0];
    let mut at_n: f64 = 0.0;
    let mut at_n1: f64 = 0.0;
    let mut mid: f64 = 0.0;
    let mut bounded = f64::NEG_INFINITY;
    let mut nonneg = f64::NEG_INFINITY;
    let mut lip = f64::NEG_INFINITY;
    let mut slope_range = f64::NEG_INFINITY;
    let mut glue: f64 = 0.0;
    let mut peak: f64 = 0.0;
    let mut phi_bounds = f64::NEG_INFINITY;
    let mut phi_values: f64 = 0.0;
    let mut phi_sup = f64::NEG_INFINITY;
    for (i, &big_n) in thresholds.iter().enumerate() {
        let tf = TamingFunction::new(big_n)?;
        let g = |r: f64| tf.g_unchecked(r);
        let gp = |r: f64| tf.g_prime_unchecked(r);
        at_n = at_n.max(g(big_n).abs());
        at_n1 = at_n1.max((g(big_n + 1.0) - 1.0).abs());
        mid = mid.max((g(big_n + 0.5) - 0.375).abs());
        let mut rng = rng_for(opts.seed, 60, i);
        let draw = |rng: &mut ChaCha8Rng| match rng.random_range(0..3) {
            0 => rng.random_range(0.0..3.0 * (big_n + 1.0)),
            1 => big_n + rng.random_range(-0.1..1.1f64),
            _ => 10f64.powf(rng.random_range(-6.0..6.0)),
        }
        .max(0.0);
        for _ in 0..samples {
            let r = draw(&mut rng);
            let r2 = draw(&mut rng);
            bounded = bounded.max(g(r) - r);
            nonneg = nonneg.max(-g(r));
            lip = lip.max((g(r) - g(r2)).abs() - 2.0 * (r - r2).abs());
            slope_range = slope_range.max((-gp(r)).max(gp(r) - 2.0));
            let phi = r - g(r);
            phi_bounds = phi_bounds.max((-phi).max(phi - r.min(big_n + 1.0)));
            phi_sup = phi_sup.max(phi - tf.sup_phi());
        }
        let eps = 1e-12;
        for r0 in [big_n, big_n + 1.0] {
            glue = glue.max((gp(r0 - eps) - gp(r0 + eps)).abs());
            glue = glue.max((g(r0 - eps) - g(r0 + eps)).abs());
        }
        peak = peak.max((gp(big_n + 2.0 / 3.0) - 4.0 / 3.0).abs());
        phi_values = phi_values
            .max((tf.phi(big_n)? - big_n).abs())
            .max((tf.phi(big_n + 2.0)? - big_n).abs())
            .max((tf.phi(big_n + 0.5)? - big_n - 0.125).abs());
    }
    let n = samples * thresholds.len();
    let mut rows = vec![
        CheckRow::le("g_at_threshold", "g(N) = 0 exactly", at_n, 0.0),
        CheckRow::le("g_at_threshold_plus_one", "g(N + 1) = 1 exactly", at_n1, 0.0),
        CheckRow::le("g_bridge_midpoint", "g(N + 1/2) = 0.375", mid, 1e-15),
        CheckRow::le("g_bounded_by_r", &format!("0 <= g(r) <= r on {n} samples"), bounded.max(nonneg), 0.0),
        CheckRow::le("g_lipschitz", &format!("|g(r) - g(s)| <= 2 |r - s| on {n} pairs"), lip, 0.0),
        CheckRow::le("g_slope_range", "0 <= g'(r) <= 2", slope_range, 0.0),
        CheckRow::le("g_c1_gluing", "one-sided values and slopes agree at N and N + 1", glue, ROUNDING),
        CheckRow::le("g_bridge_peak_slope", "max bridge slope 4/3 at N + 2/3", peak, EXACT),
        CheckRow::le("phi_bounds", "0 <= phi(r) <= min(r, N + 1)", phi_bounds, 0.0),
        CheckRow::le("phi_values", "phi(N) = N, phi(N + 2) = N, phi(N + 1/2) = N + 1/8", phi_values, EXACT),
        CheckRow::le("phi_supremum", "phi(r) <= N + 4/27", phi_sup, EXACT),
    ];

    let grid = box_grid(16);
    let tf = TamingFunction::new(10.0)?;
    let pointwise = max_over(opts.fields.min(200), opts.seed, 61, |r| {
        let u = random_amplitude_field(&grid, 4.0, r).to_physical();
        let t = tf.tamed_term(&u);
        let mu = u.magnitude_sq();
        t.magnitude_sq()
            .iter()
            .zip(&mu)
            .map(|(&a, &m)| a.sqrt() - m.powf(1.5) * (1.0 + EXACT))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    rows.push(CheckRow::le("tamed_term_cubic_bound", "|g(|u|^2) u| <= |u|^3 pointwise", pointwise, 0.0));
    let c = (14.0f64 / 3.0).sqrt();
    let constant = PhysicalField::new(&grid, [0, 1, 2].map(|_| vec![c; grid.len()]));
    let lin = tf
        .tamed_term(&constant)
        .values()
        .iter()
        .flatten()
        .map(|v| (v - 4.0 * c).abs() / (4.0 * c))
        .fold(0.0, f64::max);
    rows.push(CheckRow::le("tamed_term_linear_branch", "|u|^2 = N + 4 gives g(|u|^2) u = 4u", lin, EXACT));
    Ok(rows)
}

/// Fitted slope of `log e` against `log dt`.
pub fn fitted_order(dts: &[f64], errs: &[f64]) -> f64 {
    let x: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Orders between consecutive refinements.
pub fn pairwise_orders(dts: &[f64], errs: &[f64]) -> Vec<f64> {
    dts.windows(2)
        .zip(errs.windows(2))
        .map(|(d, e)| (e[0] / e[1]).ln() / (d[0] / d[1]).ln())
        .collect()
}

/// Build a [`SimConfig`] from `base` after applying `edit`.
fn configured(base: &Config, edit: impl FnOnce(&mut Config)) -> Result<SimConfig> {
    let mut c = base.clone();
    edit(&mut c);
    c.build()
}

/// Deterministic linear decay of a single shear mode against `e^{-(α+ν|k|²)t}`.
pub fn linear_convergence() -> Result<Vec<CheckRow>> {
    let dts = [0.02, 0.01, 0.005, 0.0025];
    let base = Config {
        alpha: 0.5,
        advection: false,
        tamed: false,
        noise_strength: 0.0,
        forcing_kind: ForcingChoice::Fixed,
        forcing_norm: 0.0,
        init_kind: InitChoice::Shear,
        init_norm: NormChoice::H,
        init_value: 1.0,
        t_end: 1.0,
        ..Config::default()
    };
    let mut errs = Vec::new();
    for &dt in &dts {
        let cfg = configured(&base, |c| c.dt = dt)?;
        let tr = simulate_path(&cfg, 0)?;
        let lambda = cfg.params.alpha + cfg.params.nu * 1.0;
        let u0 = &tr.snapshots[0].1;
        let exact = u0.scaled((-lambda * cfg.t_end).exp());
        errs.push(tr.final_state.sub(&exact).norm(Norm::H) / u0.norm(Norm::H));
    }
    let orders = pairwise_orders(&dts, &errs);
    let lo = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = orders.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut rows: Vec<CheckRow> = dts
        .iter()
        .zip(&errs)
        .map(|(dt, e)| CheckRow::info(&format!("linear_decay_error_dt_{dt}"), "relative error at T = 1", *e, f64::NAN))
        .collect();
    rows.push(CheckRow::judged(
        "linear_decay_order_min",
        "observed order of the linear-mode error, pairwise over 3 refinements",
        lo,
        0.9,
        lo >= 0.9 && hi <= 1.1,
    ));
    rows.push(CheckRow::judged(
        "linear_decay_order_max",
        "observed order of the linear-mode error, pairwise over 3 refinements",
        hi,
        1.1,
        lo >= 0.9 && hi <= 1.1,
    ));
    Ok(rows)
}

/// `(table, [(dt, error)])` recovered from the `<table>_error_dt_<dt>` rows
/// of a report, in row order.
pub fn convergence_tables(report: &Report) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in &report.rows {
        let Some((table, dt)) = r.name.split_once("_error_dt_") else {
            continue;
        };
        let Ok(dt) = dt.parse::<f64>() else { continue };
        match out.iter_mut().find(|(t, _)| t == table) {
            Some((_, v)) => v.push((dt, r.observed)),
            None => out.push((table.to_string(), vec![(dt, r.observed)])),
        }
    }
    out
}

/// Base configuration of the strong-order study: `M = 12`, `n = 3`,
/// `‖u₀‖_V = 2`, `T = 0.4`, full tamed system with constant noise.
pub fn strong_order_config() -> Config {
    Config {
        grid_m: 12,
        n: 3.0,
        init_radius: 3.0,
        t_end: 0.4,
        ..Config::default()
    }
}

/// Strong error at `T` of `dt₀/2^l`, `l = 0..3`, against a `dt₀/64` reference
/// driven by the same Brownian draws.
pub fn strong_order_table(opts: &VerifyOptions) -> Result<Vec<(f64, f64)>> {
    let base = Config {
        paths: opts.paths,
        seed: opts.seed,
        ..strong_order_config()
    };
    let dt0 = 0.02;
    let refine = 64usize;
    let levels = [1usize, 2, 4, 8];
    let reference = configured(&base, |c| {
        c.dt = dt0 / refine as f64;
        c.substeps = 1;
    })?;
    let coarse: Vec<SimConfig> = levels
        .iter()
        .map(|&l| {
            configured(&base, |c| {
                c.dt = dt0 / l as f64;
                c.substeps = refine / l;
            })
        })
        .collect::<Result<_>>()?;
    let per_path: Vec<Vec<f64>> = (0..opts.paths as u64)
        .into_par_iter()
        .map(|path| {
            let r = simulate_path(&reference, path)?.final_state;
            coarse
                .iter()
                .map(|c| Ok(simulate_path(c, path)?.final_state.sub(&r).h_sq()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let ms = per_path.iter().map(|p| p[i]).sum::<f64>() / per_path.len() as f64;
            (dt0 / l as f64, ms.sqrt())
        })
        .collect())
}

fn order_rows(prefix: &str, what: &str, table: &[(f64, f64)], min_order: f64) -> Vec<CheckRow> {
    let dts: Vec<f64> = table.iter().map(|x| x.0).collect();
    let errs: Vec<f64> = table.iter().map(|x| x.1).collect();
    let mut rows: Vec<CheckRow> = table
        .iter()
        .map(|(dt, e)| CheckRow::info(&format!("{prefix}_error_dt_{dt}"), what, *e, f64::NAN))
        .collect();
    for (i, o) in pairwise_orders(&dts, &errs).iter().enumerate() {
        rows.push(CheckRow::info(&format!("{prefix}_order_pair_{i}"), "order between consecutive refinements", *o, min_order));
    }
    let fit = fitted_order(&dts, &errs);
    rows.push(CheckRow::judged(
        &format!("{prefix}_order"),
        &format!("least-squares order of {what} over 3 dyadic refinements"),
        fit,
        min_order,
        fit >= min_order,
    ));
    rows
}

pub fn strong_order(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    Ok(order_rows("strong", "RMS strong error at T", &strong_order_table(opts)?, 0.45))
}

/// Base configuration of the energy-budget study: default system on
/// `M = 16`, `n = 4` from a field of rms velocity 4 (taming active).
pub fn budget_config() -> Config {
    Config {
        init_norm: NormChoice::H,
        init_value: 4.0 * (2.0 * PI).powf(1.5),
        init_radius: 4.0,
        t_end: 0.2,
        ..Config::default()
    }
}

/// Pooled RMS of the per-step Itô residual at `dt = 4·10⁻³ / 2^l`, `l = 0..3`,
/// with shared Brownian draws.
pub fn budget_table(opts: &VerifyOptions) -> Result<Vec<(f64, f64)>> {
    let base = Config {
        paths: opts.paths,
        seed: opts.seed,
        ..budget_config()
    };
    let dt0 = 4e-3;
    [1usize, 2, 4, 8]
        .iter()
        .map(|&l| {
            let cfg = configured(&base, |c| {
                c.dt = dt0 / l as f64;
                c.substeps = 8 / l;
            })?;
            Ok((cfg.dt, ensemble_budget_rms(&simulate_ensemble(&cfg)?)))
        })
        .collect()
}

pub fn budget_order(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    Ok(order_rows("energy_budget", "RMS per-step Ito residual", &budget_table(opts)?, 1.0))
}

/// `(M, n)` of the cutoff ladder.
pub const LADDER: [(usize, f64); 3] = [(16, 4.0), (20, 6.0), (32, 8.0)];

/// Base configuration of the a-priori ladder: `‖u₀‖_V = ρ = 2`, `T = 1`,
/// `dt = 10⁻³`, stopping radius `R = 4`.
pub fn apriori_config() -> Config {
    Config {
        init_value: 2.0,
        t_end: 1.0,
        dt: 1e-3,
        r_stop: Some(4.0),
        ..Config::default()
    }
}

/// Monte-Carlo monitors `(name, stopped, raw)` per rung of the ladder.
pub type LadderTable = Vec<(f64, Vec<(&'static str, (f64, f64), (f64, f64))>)>;

pub fn apriori_table(opts: &VerifyOptions) -> Result<(LadderTable, f64)> {
    let mut table = Vec::new();
    let mut bookkeeping: f64 = 0.0;
    for (m, n) in LADDER {
        let cfg = configured(&apriori_config(), |c| {
            c.grid_m = m;
            c.n = n;
            c.paths = opts.paths;
            c.seed = opts.seed;
        })?;
        let ens = simulate_ensemble(&cfg)?;
        let mon = apriori_monitors(&ens);
        let p2 = higher_moment_monitor(&ens, 2.0)?;
        let p3 = higher_moment_monitor(&ens, 3.0)?;
        let row = vec![
            ("sup_v", mon.sup_v.stopped, mon.sup_v.raw),
            ("int_da", mon.int_da.stopped, mon.int_da.raw),
            ("int_l4", mon.int_l4.stopped, mon.int_l4.raw),
            ("p2_sup_v", p2.sup_v.stopped, p2.sup_v.raw),
            ("p2_int_weighted", p2.int_weighted.stopped, p2.int_weighted.raw),
            ("p3_sup_v", p3.sup_v.stopped, p3.sup_v.raw),
            ("p3_int_weighted", p3.int_weighted.stopped, p3.int_weighted.raw),
        ];
        let quiet = crate::integrator::Ensemble {
            trajectories: ens
                .trajectories
                .iter()
                .filter(|t| t.hitting_time.is_infinite())
                .cloned()
                .collect(),
        };
        if !quiet.is_empty() {
            let q = apriori_monitors(&quiet);
            for e in [q.sup_v, q.int_da, q.int_l4] {
                bookkeeping = bookkeeping.max((e.stopped.0 - e.raw.0).abs());
            }
        }
        table.push((n, row));
    }
    Ok((table, bookkeeping))
}

pub fn apriori_ladder(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let (table, bookkeeping) = apriori_table(opts)?;
    let mut rows = Vec::new();
    for (n, mons) in &table {
        for (name, stopped, raw) in mons {
            rows.push(CheckRow::info(&format!("{name}_n{n}_stopped"), "mean over paths (bound column: 3 SE)", stopped.0, 3.0 * stopped.1));
            rows.push(CheckRow::info(&format!("{name}_n{n}_raw"), "mean over paths (bound column: 3 SE)", raw.0, 3.0 * raw.1));
        }
    }
    let names: Vec<&str> = table[0].1.iter().map(|x| x.0).collect();
    for (i, name) in names.iter().enumerate() {
        let values: Vec<(f64, f64)> = table.iter().map(|(_, m)| m[i].1).collect();
        let v = ladder_verdict(&values);
        let max_mean = values.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
        rows.push(CheckRow::judged(
            &format!("{name}_ladder"),
            "finite with a common bound across n = 4, 6, 8; no growth beyond 3 SE at every rung",
            max_mean,
            v.common_bound,
            v.pass(),
        ));
    }
    rows.push(CheckRow::le(
        "stopping_bookkeeping",
        "stopped and raw monitors agree on paths that never reach R",
        bookkeeping,
        0.0,
    ));
    Ok(rows)
}

/// Outcome of one side of the taming comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedOutcome {
    /// Largest `sup_t ‖u‖_V` over paths, `+∞` after a blow-up.
    pub sup_v: f64,
    pub final_v: f64,
    pub blow_up: Option<String>,
}

/// Base configuration of the taming comparison: rms velocity 10 initial
/// data on `M = 16`, `n = 4`, `T = 5`.
pub fn efficacy_config() -> Config {
    Config {
        init_norm: NormChoice::H,
        init_value: 10.0 * (2.0 * PI).powf(1.5),
        init_radius: 4.0,
        t_end: 5.0,
        dt: 1e-3,
        ..Config::default()
    }
}

pub fn paired_runs(paths: usize, seed: u64) -> Result<(PairedOutcome, PairedOutcome)> {
    let run = |tamed: bool| -> Result<PairedOutcome> {
        let cfg = configured(&efficacy_config(), |c| {
            c.tamed = tamed;
            c.paths = paths;
            c.seed = seed;
        })?;
        match simulate_ensemble(&cfg) {
            Ok(ens) => {
                let sup = ens
                    .trajectories
                    .iter()
                    .flat_map(|t| t.records.iter().map(|r| r.v_sq.sqrt()))
                    .fold(0.0, f64::max);
                let fin = ens.per_path(|t| t.final_state.norm(Norm::V)).0;
                Ok(PairedOutcome {
                    sup_v: sup,
                    final_v: fin,
                    blow_up: None,
                })
            }
            Err(e @ (Error::BlowUp { .. } | Error::Invariant { .. })) => Ok(PairedOutcome {
                sup_v: f64::INFINITY,
                final_v: f64::INFINITY,
                blow_up: Some(e.to_string()),
            }),
            Err(e) => Err(e),
        }
    };
    Ok((run(true)?, run(false)?))
}

pub fn taming_efficacy(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    let (on, off) = paired_runs(opts.paths.min(8), opts.seed)?;
    Ok(vec![
        CheckRow::judged(
            "tamed_run_finite",
            "taming on, rms velocity 10 start, T = 5: state stays finite",
            on.sup_v,
            f64::INFINITY,
            on.blow_up.is_none() && on.sup_v.is_finite(),
        ),
        CheckRow::info("tamed_run_final_v", "mean final ||u||_V with taming", on.final_v, f64::NAN),
        CheckRow::info("untamed_run_sup_v", "same start without taming, max sup_t ||u||_V (inf on blow-up)", off.sup_v, f64::NAN),
        CheckRow::info("untamed_run_final_v", "mean final ||u||_V without taming", off.final_v, f64::NAN),
    ])
}
