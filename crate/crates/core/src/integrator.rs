//! Euler–Maruyama integration of the Galerkin system and ensemble execution.
//!
//! The semi-implicit scheme treats `A_α` implicitly and everything else
//! explicitly:
//!
//! `û⁺ = [û + dt(-B_n - g_n + f_n)(u) + Σ_j G_j(u) ΔW_j] / (1 + dt(α + ν|k|²))`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::diagnostics::{measure, StepRecord};
use crate::error::{Error, Result};
use crate::field::{Norm, SpectralField};
use crate::grid::Grid;
use crate::noise::NoiseModel;
use crate::operators::{drift_parts, DriftParams, DriftParts};
use crate::rng::WienerStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    SemiImplicit,
    Explicit,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::SemiImplicit => "semi-implicit",
            Scheme::Explicit => "explicit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: Arc<Grid>,
    /// Ball radius `n` in wavenumber units.
    pub cutoff: f64,
    pub dt: f64,
    pub t_end: f64,
    pub params: DriftParams,
    pub noise: NoiseModel,
    pub seed: u64,
    pub n_paths: usize,
    pub scheme: Scheme,
    pub r_stop: Option<f64>,
    /// Brownian substeps per step, for coupling against a finer run.
    pub substeps: usize,
    /// Keep every `k`-th state; `0` keeps only the initial and final state.
    pub snapshot_every: usize,
    /// Also log `‖|u||∇u|‖²` (five extra transforms per step).
    pub full_diagnostics: bool,
    pub initial: SpectralField,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(Error::range("model.n", "must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::range("time.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::range("time.T", "must be nonnegative"));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(Error::range("time.dt", "must divide time.T"));
        }
        if self.scheme == Scheme::Explicit {
            let limit = 2.0 / (self.params.alpha + self.params.nu * self.cutoff * self.cutoff);
            if self.dt > limit {
                return Err(Error::range(
                    "time.dt",
                    format!("explicit scheme needs dt <= 2/(α + νn²) = {limit}"),
                ));
            }
        }
        if let Some(r) = self.r_stop {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::range("stop.R", "must be positive"));
            }
        }
        if self.n_paths == 0 {
            return Err(Error::range("run.paths", "must be at least 1"));
        }
        if self.substeps == 0 {
            return Err(Error::range("time.substeps", "must be at least 1"));
        }
        if *self.initial.grid().as_ref() != *self.grid.as_ref() {
            return Err(Error::InvalidArgument("initial field lives on another grid".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// One integrated path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub path: u64,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<(f64, SpectralField)>,
    /// First time with `‖u‖_V >= R`, `+∞` when never reached or no `R` is set.
    pub hitting_time: f64,
    pub final_state: SpectralField,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

/// Initial data restricted to `H_n`, divergence-free and mean-free.
pub fn prepare_initial(u: &SpectralField, cutoff: f64) -> SpectralField {
    let mut v = u.project_ball(cutoff).leray_project();
    v.remove_mean();
    v.symmetrize();
    v
}

fn advance(u: &SpectralField, parts: &DriftParts, noise: Option<&SpectralField>, cfg: &SimConfig) -> SpectralField {
    let dt = cfg.dt;
    let mut next = match cfg.scheme {
        Scheme::SemiImplicit => {
            let mut rhs = u.clone();
            rhs.axpy(dt, &parts.explicit());
            rhs
        }
        Scheme::Explicit => {
            let mut rhs = u.clone();
            rhs.axpy(dt, &parts.total());
            rhs
        }
    };
    if let Some(n) = noise {
        next.axpy(1.0, n);
    }
    let mut next = next.project_ball(cfg.cutoff);
    if cfg.scheme == Scheme::SemiImplicit {
        let (nu, alpha) = (cfg.params.nu, cfg.params.alpha);
        let support = next.support().clone();
        let ksq = support.k_squared_table();
        for c in next.coeffs_mut().iter_mut() {
            for (x, &k) in c.iter_mut().zip(ksq) {
                *x /= 1.0 + dt * (alpha + nu * k);
            }
        }
    }
    next.remove_mean();
    next.leray_in_place();
    next
}

/// One step with the given increments.
pub fn step_with_increments(u: &SpectralField, cfg: &SimConfig, dw: &[f64]) -> SpectralField {
    let parts = drift_parts(u, &cfg.params);
    let noise = (!cfg.noise.is_off()).then(|| cfg.noise.apply_weighted(u, dw));
    advance(u, &parts, noise.as_ref(), cfg)
}

/// One step drawing its increments from `stream`.
pub fn step(u: &SpectralField, cfg: &SimConfig, stream: &mut WienerStream) -> Result<SpectralField> {
    let dw = stream.increments(cfg.dt);
    let next = step_with_increments(u, cfg, &dw);
    if !next.is_finite() {
        return Err(Error::BlowUp {
            t: f64::NAN,
            path: 0,
            what: "non-finite coefficient".into(),
        });
    }
    Ok(next)
}

fn check_invariants(u: &SpectralField, cutoff: f64, t: f64, path: u64) -> Result<()> {
    let what = if u.max_outside_ball(cutoff) != 0.0 {
        Some("support left the ball")
    } else if u.divergence_defect() > 1e-10 {
        Some("divergence-free constraint lost")
    } else if u.mean().iter().any(|c| c.norm() != 0.0) {
        Some("mean mode became nonzero")
    } else {
        None
    };
    match what {
        Some(w) => Err(Error::Invariant {
            t,
            path,
            what: w.into(),
        }),
        None => Ok(()),
    }
}

/// Integrate one path from `cfg.initial` to `cfg.t_end`.
pub fn simulate_path(cfg: &SimConfig, path: u64) -> Result<Trajectory> {
    let mut records = Vec::with_capacity(cfg.n_steps() + 1);
    let end = run_path(cfg, path, |rec, _| records.push(*rec))?;
    Ok(Trajectory {
        path,
        records,
        snapshots: end.snapshots,
        hitting_time: end.hitting_time,
        final_state: end.final_state,
    })
}

/// What [`run_path`] returns besides the per-step callbacks.
#[derive(Debug, Clone)]
pub struct PathEnd {
    pub snapshots: Vec<(f64, SpectralField)>,
    pub hitting_time: f64,
    pub final_state: SpectralField,
}

/// Integrate one path, handing every step's record and state to `observe`
/// instead of storing them.
pub fn run_path(
    cfg: &SimConfig,
    path: u64,
    mut observe: impl FnMut(&StepRecord, &SpectralField),
) -> Result<PathEnd> {
    cfg.validate()?;
    let check_every = if cfg!(debug_assertions) { 1 } else { 64 };
    let steps = cfg.n_steps();
    let mut u = prepare_initial(&cfg.initial, cfg.cutoff);
    let mut stream = WienerStream::new(cfg.seed, path, cfg.noise.j(), cfg.substeps);
    let mut dw = vec![0.0; cfg.noise.j()];
    let mut snapshots = vec![(0.0, u.clone())];
    let mut hitting_time = f64::INFINITY;
    // |u_k|², <u_k, drift>, Σ|G_j u_k|², Σ<u_k, G_j u_k>ΔW_j from the previous step
    let mut pending: Option<(f64, f64, f64, f64)> = None;

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if k % check_every == 0 {
            check_invariants(&u, cfg.cutoff, t, path)?;
        }
        let parts = drift_parts(&u, &cfg.params);
        let mut rec = measure(&u, &parts, &cfg.noise, cfg.full_diagnostics);
        rec.t = t;
        if let Some((h, pair, gsq, skew)) = pending.take() {
            rec.residual = rec.h_sq - h - 2.0 * cfg.dt * pair - gsq * cfg.dt - 2.0 * skew;
        }
        if let Some(r) = cfg.r_stop {
            rec.hit = rec.v_sq.sqrt() >= r;
            if rec.hit && hitting_time.is_infinite() {
                hitting_time = t;
            }
        }
        observe(&rec, &u);
        if k == steps {
            break;
        }

        stream.fill(cfg.dt, &mut dw);
        let noise = (!cfg.noise.is_off()).then(|| cfg.noise.apply_weighted(&u, &dw));
        let skew = noise.as_ref().map_or(0.0, |n| u.inner(n));
        let next = advance(&u, &parts, noise.as_ref(), cfg);
        if !next.is_finite() {
            return Err(Error::BlowUp {
                t: t + cfg.dt,
                path,
                what: "non-finite coefficient".into(),
            });
        }
        pending = Some((rec.h_sq, rec.drift_pairing, rec.noise_sq, skew));
        u = next;
        if cfg.snapshot_every > 0 && (k + 1) % cfg.snapshot_every == 0 && k + 1 < steps {
            snapshots.push(((k + 1) as f64 * cfg.dt, u.clone()));
        }
    }
    if steps > 0 {
        snapshots.push((steps as f64 * cfg.dt, u.clone()));
    }
    Ok(PathEnd {
        snapshots,
        hitting_time,
        final_state: u,
    })
}

/// Monte-Carlo mean and standard error of one scalar per time index.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
}

/// `(mean, standard error)` with the unbiased sample variance.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn series(&self, f: impl Fn(&StepRecord) -> f64) -> SeriesStats {
        let steps = self.trajectories.first().map_or(0, |t| t.records.len());
        let mut out = SeriesStats {
            times: Vec::with_capacity(steps),
            mean: Vec::with_capacity(steps),
            se: Vec::with_capacity(steps),
        };
        let mut buf = Vec::with_capacity(self.len());
        for k in 0..steps {
            buf.clear();
            buf.extend(self.trajectories.iter().map(|tr| f(&tr.records[k])));
            let (m, s) = mean_se(&buf);
            out.times.push(self.trajectories[0].records[k].t);
            out.mean.push(m);
            out.se.push(s);
        }
        out
    }

    /// Mean and standard error of a per-path scalar.
    pub fn per_path(&self, f: impl Fn(&Trajectory) -> f64) -> (f64, f64) {
        let xs: Vec<f64> = self.trajectories.iter().map(f).collect();
        mean_se(&xs)
    }
}

/// Run `cfg.n_paths` paths; results are in path order whatever the schedule.
pub fn simulate_ensemble(cfg: &SimConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let trajectories = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| simulate_path(cfg, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { trajectories })
}

/// `‖u‖_V` helper used by stopping-time logic.
pub fn v_norm(u: &SpectralField) -> f64 {
    u.norm(Norm::V)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Norm;
    use crate::grid::C64;
    use crate::operators::Forcing;
    use crate::taming::TamingFunction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub(crate) fn base_config(m: usize, n: f64) -> SimConfig {
        let grid = Grid::new(m, 2.0 * PI).unwrap();
        let init = SpectralField::random(&grid, 2.0, &mut ChaCha8Rng::seed_from_u64(1)).normalized(Norm::V, 2.0);
        SimConfig {
            cutoff: n,
            dt: 1e-2,
            t_end: 0.1,
            params: DriftParams {
                nu: 1.0,
                alpha: 0.0,
                taming: TamingFunction::default(),
                forcing: Forcing::State {
                    f0: SpectralField::zeros(&grid),
                    kappa: 0.1,
                },
                advection: true,
                tamed: true,
            },
            noise: NoiseModel::constant(4, 0.25).unwrap(),
            seed: 3,
            n_paths: 2,
            scheme: Scheme::SemiImplicit,
            r_stop: Some(1.0),
            substeps: 1,
            snapshot_every: 0,
            full_diagnostics: false,
            initial: init,
            grid,
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = base_config(8, 2.0);
        c.dt = 0.0;
        assert!(matches!(c.validate(), Err(Error::Range { key, .. }) if key == "time.dt"));
        let mut c = base_config(8, 2.0);
        c.scheme = Scheme::Explicit;
        c.dt = 0.5;
        assert!(c.validate().is_err());
        let mut c = base_config(8, 2.0);
        c.r_stop = Some(-1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let mut c = base_config(8, 2.0);
        c.initial = SpectralField::zeros(&c.grid);
        c.params.forcing = Forcing::Fixed {
            f0: SpectralField::zeros(&c.grid),
        };
        let tr = simulate_path(&c, 0).unwrap();
        assert_eq!(tr.final_state.h_sq(), 0.0);
        assert!(tr.records.iter().all(|r| r.residual == 0.0 && r.h_sq == 0.0));
    }

    #[test]
    fn horizon_zero_gives_initial_state_only() {
        let mut c = base_config(8, 2.0);
        c.t_end = 0.0;
        let tr = simulate_path(&c, 0).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert_eq!(tr.snapshots.len(), 1);
    }

    #[test]
    fn equal_seeds_are_bitwise_equal() {
        let c = base_config(8, 2.0);
        let a = simulate_path(&c, 1).unwrap();
        let b = simulate_path(&c, 1).unwrap();
        assert_eq!(a.records, b.records);
        let e = simulate_ensemble(&c).unwrap();
        assert_eq!(e.trajectories[1].records, a.records);
    }

    #[test]
    fn linear_mode_decays() {
        let mut c = base_config(8, 2.0);
        c.params.advection = false;
        c.params.tamed = false;
        c.params.alpha = 0.5;
        c.params.forcing = Forcing::Fixed {
            f0: SpectralField::zeros(&c.grid),
        };
        c.noise = NoiseModel::off();
        let z = C64::default();
        c.initial = SpectralField::single_mode(&c.grid, [1, 0, 0], [z, C64::new(1.0, 0.0), z]);
        c.dt = 1e-3;
        c.t_end = 1.0;
        let tr = simulate_path(&c, 0).unwrap();
        let exact = (-(0.5 + 1.0f64) * 1.0).exp();
        let idx = c.grid.index_of([1, 0, 0]).unwrap();
        let got = tr.final_state.get(1, idx).re;
        assert!((got / exact - 1.0).abs() < 2e-3);
    }

    #[test]
    fn hitting_time_recorded_without_stopping() {
        let c = base_config(8, 2.0);
        let tr = simulate_path(&c, 0).unwrap();
        // ‖u₀‖_V = 2 >= R = 1
        assert_eq!(tr.hitting_time, 0.0);
        assert_eq!(tr.records.len(), c.n_steps() + 1);
    }
}
