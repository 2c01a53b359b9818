//! Per-step functionals, the Itô energy budget, and the Monte-Carlo moment
//! monitors with their stopped and unstopped variants.

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::integrator::{mean_se, Ensemble, Trajectory};
use crate::noise::NoiseModel;
use crate::operators::{drift_parts, DriftParams, DriftParts};

/// Functionals of the state at one time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepRecord {
    pub t: f64,
    /// `|u|_H²`.
    pub h_sq: f64,
    /// `|∇u|²`.
    pub grad_sq: f64,
    /// `|Δu|²`.
    pub lap_sq: f64,
    /// `‖u‖_V²`.
    pub v_sq: f64,
    /// `|u|_{D(A)}²`.
    pub da_sq: f64,
    /// `‖u‖_{L⁴}⁴`.
    pub l4_pow4: f64,
    /// `‖|u||∇u|‖²`, only with full diagnostics.
    pub u_grad_sq: Option<f64>,
    /// `‖√g(|u|²) |u|‖²`.
    pub tamed_energy: f64,
    /// `Σ_j |G_j(u)|²`.
    pub noise_sq: f64,
    /// `⟨u, drift(u)⟩`.
    pub drift_pairing: f64,
    /// `F(u)`.
    pub f_value: f64,
    /// `D(u)`.
    pub d_value: f64,
    /// Itô residual of the step that ended at this record; 0 on the first row.
    pub residual: f64,
    pub hit: bool,
}

/// `‖|u||∇u|‖² = ∫ |u|² Σ_{a,i} (∂_a u_i)² dx` by quadrature.
pub fn u_grad_sq(u: &SpectralField) -> f64 {
    let g = u.grid();
    let grad = u.gradient().to_physical(g);
    let r = u.to_physical().magnitude_sq();
    let mut acc = 0.0;
    for (j, rj) in r.iter().enumerate() {
        let mut s = 0.0;
        for row in &grad {
            for v in row {
                s += v[j] * v[j];
            }
        }
        acc += rj * s;
    }
    acc * g.cell_volume()
}

/// Evaluate every per-step functional from precomputed drift parts.
pub fn measure(u: &SpectralField, parts: &DriftParts, nm: &NoiseModel, full: bool) -> StepRecord {
    let h_sq = u.h_sq();
    let grad_sq = u.grad_sq();
    let lap_sq = u.lap_sq();
    let noise_sq = nm.hs_norm_sq(u);
    let drift_pairing = u.inner(&parts.total());
    StepRecord {
        t: 0.0,
        h_sq,
        grad_sq,
        lap_sq,
        v_sq: h_sq + grad_sq,
        da_sq: h_sq + lap_sq,
        l4_pow4: parts.l4_pow4,
        u_grad_sq: full.then(|| u_grad_sq(u)),
        tamed_energy: parts.tamed_energy,
        noise_sq,
        drift_pairing,
        f_value: noise_sq + 2.0 * drift_pairing,
        d_value: drift_pairing + 0.5 * noise_sq,
        residual: 0.0,
        hit: false,
    }
}

/// `D(u) = ⟨u, -A_α u - B_n(u) - g_n(u) + f_n(u)⟩ + ½ Σ_j |G_j(u)|²`.
pub fn drift_dissipation(u: &SpectralField, p: &DriftParams, nm: &NoiseModel) -> f64 {
    let parts = drift_parts(u, p);
    u.inner(&parts.total()) + 0.5 * nm.hs_norm_sq(u)
}

/// Right side of `D(u) <= -(7/8)|∇u|² - ‖u‖⁴_{L⁴} + C_{N,f}|u|² + ½|b_f|_{L¹}`
/// for `ν = 1`.
pub fn dissipation_bound(rec: &StepRecord, p: &DriftParams) -> f64 {
    -0.875 * rec.grad_sq - rec.l4_pow4 + p.c_nf() * rec.h_sq + 0.5 * p.forcing.b_f_l1()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBudget {
    pub max_abs: f64,
    pub rms: f64,
    pub steps: usize,
}

/// Max and RMS of the per-step Itô residuals of one path.
pub fn energy_budget(traj: &Trajectory) -> EnergyBudget {
    let res: Vec<f64> = traj.records.iter().skip(1).map(|r| r.residual).collect();
    let steps = res.len();
    if steps == 0 {
        return EnergyBudget {
            max_abs: 0.0,
            rms: 0.0,
            steps,
        };
    }
    EnergyBudget {
        max_abs: res.iter().fold(0.0f64, |m, r| m.max(r.abs())),
        rms: (res.iter().map(|r| r * r).sum::<f64>() / steps as f64).sqrt(),
        steps,
    }
}

/// RMS residual pooled over an ensemble.
pub fn ensemble_budget_rms(ens: &Ensemble) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for tr in &ens.trajectories {
        for r in tr.records.iter().skip(1) {
            sum += r.residual * r.residual;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Mean and standard error, stopped at `T ∧ τ_R` and over the full horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub stopped: (f64, f64),
    pub raw: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub paths: usize,
    /// `E sup_t ‖u‖_V²`.
    pub sup_v: Estimate,
    /// `E ∫ |u|_{D(A)}² dt`.
    pub int_da: Estimate,
    /// `E ∫ ‖u‖⁴_{L⁴} dt`.
    pub int_l4: Estimate,
}

fn path_functional(tr: &Trajectory, stopped: bool, sup: impl Fn(&StepRecord) -> f64, int: bool) -> f64 {
    let tau = if stopped { tr.hitting_time } else { f64::INFINITY };
    let recs: Vec<&StepRecord> = tr.records.iter().take_while(|r| r.t <= tau).collect();
    if int {
        // left Riemann sum over [0, T ∧ τ)
        recs.windows(2).map(|w| (w[1].t - w[0].t) * sup(w[0])).sum()
    } else {
        recs.iter().map(|r| sup(r)).fold(0.0, f64::max)
    }
}

fn estimate(ens: &Ensemble, f: impl Fn(&StepRecord) -> f64 + Copy, int: bool) -> Estimate {
    let stopped: Vec<f64> = ens.trajectories.iter().map(|t| path_functional(t, true, f, int)).collect();
    let raw: Vec<f64> = ens.trajectories.iter().map(|t| path_functional(t, false, f, int)).collect();
    Estimate {
        stopped: mean_se(&stopped),
        raw: mean_se(&raw),
    }
}

pub fn apriori_monitors(ens: &Ensemble) -> MonitorReport {
    MonitorReport {
        paths: ens.len(),
        sup_v: estimate(ens, |r| r.v_sq, false),
        int_da: estimate(ens, |r| r.da_sq, true),
        int_l4: estimate(ens, |r| r.l4_pow4, true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub p: f64,
    /// `E sup_t ‖u‖_V^{2p}`.
    pub sup_v: Estimate,
    /// `E ∫ ‖u‖_V^{2(p-1)} |Au|² dt`.
    pub int_weighted: Estimate,
}

/// Higher moments for `p ∈ [1, 3]`.
pub fn higher_moment_monitor(ens: &Ensemble, p: f64) -> Result<MomentReport> {
    if !(1.0..=3.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("moment order p = {p} outside [1, 3]")));
    }
    Ok(MomentReport {
        p,
        sup_v: estimate(ens, move |r| r.v_sq.powf(p), false),
        int_weighted: estimate(ens, move |r| r.v_sq.powf(p - 1.0) * r.lap_sq, true),
    })
}

/// Outcome of comparing one monitor across a cutoff ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderVerdict {
    pub finite: bool,
    /// Every consecutive increase exceeds three combined standard errors.
    pub monotone_growth: bool,
    /// `max_n (mean + 3 SE)`.
    pub common_bound: f64,
}

impl LadderVerdict {
    pub fn pass(&self) -> bool {
        self.finite && !self.monotone_growth
    }
}

/// Judge `(mean, se)` values ordered by increasing cutoff.
pub fn ladder_verdict(values: &[(f64, f64)]) -> LadderVerdict {
    let finite = values.iter().all(|(m, s)| m.is_finite() && s.is_finite());
    let monotone_growth = values.len() >= 2
        && values
            .windows(2)
            .all(|w| w[1].0 - w[0].0 > 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    let common_bound = values.iter().map(|(m, s)| m + 3.0 * s).fold(f64::NEG_INFINITY, f64::max);
    LadderVerdict {
        finite,
        monotone_growth,
        common_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Norm;
    use crate::grid::{Grid, C64};
    use crate::integrator::{simulate_ensemble, simulate_path, Scheme, SimConfig};
    use crate::operators::Forcing;
    use crate::taming::TamingFunction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn config() -> SimConfig {
        let grid = Grid::new(8, 2.0 * PI).unwrap();
        let init = SpectralField::random(&grid, 2.0, &mut ChaCha8Rng::seed_from_u64(1)).normalized(Norm::V, 1.5);
        SimConfig {
            cutoff: 2.0,
            dt: 1e-2,
            t_end: 0.2,
            params: DriftParams {
                nu: 1.0,
                alpha: 0.0,
                taming: TamingFunction::new(1.0).unwrap(),
                forcing: Forcing::State {
                    f0: SpectralField::zeros(&grid),
                    kappa: 0.1,
                },
                advection: true,
                tamed: true,
            },
            noise: NoiseModel::constant(4, 0.25).unwrap(),
            seed: 9,
            n_paths: 4,
            scheme: Scheme::SemiImplicit,
            r_stop: None,
            substeps: 1,
            snapshot_every: 1,
            full_diagnostics: true,
            initial: init,
            grid,
        }
    }

    #[test]
    fn logged_values_match_recomputation_from_snapshots() {
        let c = config();
        let tr = simulate_path(&c, 0).unwrap();
        for (t, snap) in &tr.snapshots {
            let rec = tr.records.iter().find(|r| (r.t - t).abs() < 1e-12).unwrap();
            let parts = drift_parts(snap, &c.params);
            let again = measure(snap, &parts, &c.noise, true);
            for (a, b) in [
                (rec.h_sq, again.h_sq),
                (rec.v_sq, again.v_sq),
                (rec.da_sq, again.da_sq),
                (rec.l4_pow4, again.l4_pow4),
                (rec.f_value, again.f_value),
                (rec.u_grad_sq.unwrap(), again.u_grad_sq.unwrap()),
            ] {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_monitors() {
        let mut c = config();
        c.initial = SpectralField::zeros(&c.grid);
        c.params.forcing = Forcing::Fixed {
            f0: SpectralField::zeros(&c.grid),
        };
        let ens = simulate_ensemble(&c).unwrap();
        let m = apriori_monitors(&ens);
        assert_eq!(m.sup_v.raw.0, 0.0);
        assert_eq!(m.int_da.raw.0, 0.0);
        assert_eq!(m.int_l4.raw.0, 0.0);
        assert_eq!(energy_budget(&ens.trajectories[0]).max_abs, 0.0);
    }

    #[test]
    fn stopped_equals_raw_when_radius_never_hit() {
        let mut c = config();
        c.r_stop = Some(1e6);
        let ens = simulate_ensemble(&c).unwrap();
        let m = apriori_monitors(&ens);
        assert_eq!(m.sup_v.stopped, m.sup_v.raw);
        assert_eq!(m.int_da.stopped, m.int_da.raw);
        c.r_stop = Some(1e-3);
        let ens = simulate_ensemble(&c).unwrap();
        let m = apriori_monitors(&ens);
        assert!(m.int_da.stopped.0 < m.int_da.raw.0);
    }

    #[test]
    fn moment_order_range() {
        let ens = simulate_ensemble(&config()).unwrap();
        assert!(higher_moment_monitor(&ens, 0.5).is_err());
        assert!(higher_moment_monitor(&ens, 3.5).is_err());
        let one = higher_moment_monitor(&ens, 1.0).unwrap();
        let base = apriori_monitors(&ens);
        assert_eq!(one.sup_v, base.sup_v);
        assert!(higher_moment_monitor(&ens, 3.0).unwrap().sup_v.raw.0.is_finite());
    }

    #[test]
    fn dissipation_of_zero_and_large_fields() {
        let c = config();
        let mut p = c.params.clone();
        p.forcing = Forcing::Fixed {
            f0: SpectralField::zeros(&c.grid),
        };
        let z = SpectralField::zeros(&c.grid).project_ball(2.0);
        assert_eq!(drift_dissipation(&z, &p, &c.noise), 0.0);
        let u = SpectralField::random(&c.grid, 2.0, &mut ChaCha8Rng::seed_from_u64(4)).normalized(Norm::H, 200.0);
        assert!(drift_dissipation(&u, &p, &c.noise) < 0.0);
    }

    #[test]
    fn linear_budget_residual_is_second_order() {
        let mut c = config();
        c.params.advection = false;
        c.params.tamed = false;
        c.noise = NoiseModel::off();
        let z = C64::default();
        c.initial = SpectralField::single_mode(&c.grid, [1, 0, 0], [z, C64::new(1.0, 0.0), z]);
        let r1 = energy_budget(&simulate_path(&c, 0).unwrap()).max_abs;
        c.dt /= 2.0;
        let r2 = energy_budget(&simulate_path(&c, 0).unwrap()).max_abs;
        let order = (r1 / r2).log2();
        assert!((order - 2.0).abs() < 0.2, "{order}");
    }

    #[test]
    fn ladder_rule() {
        assert!(ladder_verdict(&[(1.0, 0.1), (1.05, 0.1), (1.02, 0.1)]).pass());
        assert!(!ladder_verdict(&[(1.0, 0.01), (2.0, 0.01), (3.0, 0.01)]).pass());
        assert!(!ladder_verdict(&[(1.0, 0.01), (f64::NAN, 0.01)]).pass());
    }
}
