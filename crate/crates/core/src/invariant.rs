//! The damped system `du = [-A_α u - B_n(u) - g_n(u) + f]dt + G_n(u)dW`,
//! time-averaged empirical measures, and the Chebyshev tail bound on the
//! time-averaged exceedance probability of the `V`-norm.

use rayon::prelude::*;

use crate::diagnostics::StepRecord;
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::integrator::{mean_se, run_path, simulate_path, SimConfig, Trajectory};
use crate::operators::Forcing;

/// A scalar functional of the state, evaluated from the per-step record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    /// `‖u‖_V²`.
    VSq,
    /// `|u|_H²`.
    HSq,
    /// `‖u‖_{L⁴}⁴`.
    L4Pow4,
    /// `|∇u|²`.
    GradSq,
    /// The constant function 1.
    One,
}

impl Observable {
    pub const DEFAULT: [Observable; 3] = [Observable::VSq, Observable::HSq, Observable::L4Pow4];

    pub fn name(&self) -> &'static str {
        match self {
            Observable::VSq => "v_sq",
            Observable::HSq => "h_sq",
            Observable::L4Pow4 => "l4_pow4",
            Observable::GradSq => "grad_sq",
            Observable::One => "one",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "v_sq" => Ok(Observable::VSq),
            "h_sq" => Ok(Observable::HSq),
            "l4_pow4" => Ok(Observable::L4Pow4),
            "grad_sq" => Ok(Observable::GradSq),
            "one" => Ok(Observable::One),
            other => Err(Error::InvalidArgument(format!(
                "unknown observable `{other}` (expected v_sq, h_sq, l4_pow4, grad_sq, one)"
            ))),
        }
    }

    pub fn eval(&self, r: &StepRecord) -> f64 {
        match self {
            Observable::VSq => r.v_sq,
            Observable::HSq => r.h_sq,
            Observable::L4Pow4 => r.l4_pow4,
            Observable::GradSq => r.grad_sq,
            Observable::One => 1.0,
        }
    }
}

/// Damped configuration with its dissipation constants.
#[derive(Debug, Clone)]
pub struct DampedConfig {
    pub sim: SimConfig,
    /// `δ` with `2ν|∇u|² - ‖G(u)‖² >= 2δ|∇u|²`.
    pub delta: f64,
    /// `γ = min(α/2, δ)`.
    pub gamma: f64,
}

impl DampedConfig {
    /// Checks `α > 0`, a forcing independent of `u`, and the coercivity
    /// condition `2ν - sup_x Σ_j|σ_j(x)|² >= 2δ > 0`.
    pub fn new(sim: SimConfig) -> Result<Self> {
        sim.validate()?;
        let p = &sim.params;
        if p.alpha <= 0.0 {
            return Err(Error::range("model.alpha", "damped system needs alpha > 0"));
        }
        if !matches!(p.forcing, Forcing::Fixed { .. }) {
            return Err(Error::range("forcing.kind", "damped system needs fixed forcing"));
        }
        let delta = (2.0 * p.nu - sim.noise.bound_check()) / 2.0;
        if delta <= 0.0 {
            return Err(Error::range(
                "noise.strength",
                format!("2ν - sup|σ|² = {} must be positive", 2.0 * delta),
            ));
        }
        let gamma = (p.alpha / 2.0).min(delta);
        Ok(DampedConfig { sim, delta, gamma })
    }

    /// `20/γ`.
    pub fn default_horizon(&self) -> f64 {
        20.0 / self.gamma
    }

    /// `|u₀|²/(2γT) + |f|²/(4γ²)`.
    pub fn v_average_bound(&self) -> f64 {
        let u0 = self.sim.initial.project_ball(self.sim.cutoff).h_sq();
        let f = self.forcing_h_sq();
        u0 / (2.0 * self.gamma * self.sim.t_end) + f / (4.0 * self.gamma * self.gamma)
    }

    /// `|P_n f|²`, the part of the forcing the Galerkin system sees.
    pub fn forcing_h_sq(&self) -> f64 {
        let mut f = self.sim.params.forcing.f0().project_ball(self.sim.cutoff).leray_project();
        f.remove_mean();
        f.h_sq()
    }

    /// Radius at which the Chebyshev bound equals `level`.
    pub fn radius_for_level(&self, level: f64) -> f64 {
        (self.v_average_bound() / level).sqrt()
    }
}

/// One damped path with all records kept.
pub fn run_damped(cfg: &DampedConfig, path: u64) -> Result<Trajectory> {
    simulate_path(&cfg.sim, path)
}

/// Histogram plus running and windowed averages of one observable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub observable: String,
    pub burn_in: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Sum of the samples falling into each bin.
    pub sums: Vec<f64>,
    pub average: f64,
    pub running: Vec<f64>,
    pub windows: Vec<f64>,
}

impl EmpiricalMeasure {
    /// `Σ sums / Σ counts`.
    pub fn histogram_mean(&self) -> f64 {
        let n: u64 = self.counts.iter().sum();
        self.sums.iter().sum::<f64>() / n as f64
    }
}

const WINDOWS: usize = 10;

/// Left-Riemann time average of `samples` (taken at `k·dt`) over
/// `[burn_in, T)`, with a Freedman–Diaconis histogram.
pub fn time_average_samples(name: &str, samples: &[f64], dt: f64, burn_in: f64) -> Result<EmpiricalMeasure> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("time average needs at least one step".into()));
    }
    let horizon = (samples.len() - 1) as f64 * dt;
    if !(burn_in >= 0.0 && burn_in < horizon) {
        return Err(Error::InvalidArgument(format!(
            "burn-in {burn_in} must lie in [0, {horizon})"
        )));
    }
    let first = ((burn_in / dt) - 1e-9).ceil() as usize;
    let kept: Vec<f64> = samples[first..samples.len() - 1].to_vec();
    let n = kept.len();
    let average = kept.iter().sum::<f64>() / n as f64;
    let mut running = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (i, x) in kept.iter().enumerate() {
        acc += x;
        running.push(acc / (i + 1) as f64);
    }
    let windows = (0..WINDOWS.min(n))
        .map(|w| {
            let lo = w * n / WINDOWS.min(n);
            let hi = (w + 1) * n / WINDOWS.min(n);
            kept[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let edges = fd_edges(&kept);
    let (counts, sums) = bin(&kept, &edges);
    Ok(EmpiricalMeasure {
        observable: name.to_string(),
        burn_in,
        dt,
        samples: kept,
        edges,
        counts,
        sums,
        average,
        running,
        windows,
    })
}

/// [`time_average_samples`] of `obs` along a stored trajectory.
pub fn time_average(traj: &Trajectory, obs: Observable, burn_in: f64) -> Result<EmpiricalMeasure> {
    let dt = match traj.records.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => return Err(Error::InvalidArgument("time average needs at least one step".into())),
    };
    let xs: Vec<f64> = traj.records.iter().map(|r| obs.eval(r)).collect();
    time_average_samples(obs.name(), &xs, dt, burn_in)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

const MAX_BINS: usize = 10_000;

/// Freedman–Diaconis bin edges; one bin when the spread vanishes.
pub fn fd_edges(xs: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return vec![0.0, 1.0];
    }
    s.sort_by(f64::total_cmp);
    let (lo, hi) = (s[0], s[s.len() - 1]);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let width = 2.0 * iqr / (s.len() as f64).cbrt();
    if hi <= lo || width <= 0.0 {
        let pad = if lo == 0.0 { 0.5 } else { 0.5 * lo.abs() };
        return vec![lo - pad, hi + pad];
    }
    let bins = (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS);
    (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect()
}

/// Counts and per-bin sums; the last bin is closed, values outside are dropped.
pub fn bin(xs: &[f64], edges: &[f64]) -> (Vec<u64>, Vec<f64>) {
    let nb = edges.len() - 1;
    let mut counts = vec![0u64; nb];
    let mut sums = vec![0.0; nb];
    let (lo, hi) = (edges[0], edges[nb]);
    for &x in xs {
        if !(x >= lo && x <= hi) {
            continue;
        }
        let i = edges.partition_point(|&e| e <= x).saturating_sub(1).min(nb - 1);
        counts[i] += 1;
        sums[i] += x;
    }
    (counts, sums)
}

/// Per-path time series of the requested observables, without storing full
/// records.
#[derive(Debug, Clone)]
pub struct DampedPath {
    pub path: u64,
    pub series: Vec<Vec<f64>>,
    /// Time-averaged shell energy spectrum after burn-in.
    pub spectrum: Vec<(f64, f64)>,
    pub final_state: SpectralField,
}

/// Ensemble of damped paths.
#[derive(Debug, Clone)]
pub struct DampedEnsemble {
    pub observables: Vec<Observable>,
    pub dt: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub paths: Vec<DampedPath>,
}

/// Steps between energy-spectrum samples.
const SPECTRUM_EVERY: usize = 10;

/// Run `cfg.sim.n_paths` damped paths in parallel, logging `observables`
/// (always including `‖u‖_V²`) at every step.
pub fn damped_ensemble(cfg: &DampedConfig, observables: &[Observable], burn_in: f64) -> Result<DampedEnsemble> {
    let mut obs = vec![Observable::VSq];
    for o in observables {
        if !obs.contains(o) {
            obs.push(*o);
        }
    }
    let sim = &cfg.sim;
    if !(burn_in >= 0.0 && burn_in < sim.t_end) {
        return Err(Error::range("invariant.burn_in", "must lie in [0, time.T)"));
    }
    let first = ((burn_in / sim.dt) - 1e-9).ceil() as usize;
    let paths = (0..sim.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut series = vec![Vec::with_capacity(sim.n_steps() + 1); obs.len()];
            let mut spec: Vec<(f64, f64)> = Vec::new();
            let mut spec_n = 0usize;
            let mut k = 0usize;
            let end = run_path(sim, path, |rec, u| {
                for (s, o) in series.iter_mut().zip(&obs) {
                    s.push(o.eval(rec));
                }
                if k >= first && k < sim.n_steps() && (k - first) % SPECTRUM_EVERY == 0 {
                    let e = u.energy_spectrum();
                    if spec.is_empty() {
                        spec = e;
                    } else {
                        for (a, b) in spec.iter_mut().zip(e) {
                            a.1 += b.1;
                        }
                    }
                    spec_n += 1;
                }
                k += 1;
            })?;
            for s in spec.iter_mut() {
                s.1 /= spec_n.max(1) as f64;
            }
            Ok(DampedPath {
                path,
                series,
                spectrum: spec,
                final_state: end.final_state,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DampedEnsemble {
        observables: obs,
        dt: sim.dt,
        t_end: sim.t_end,
        burn_in,
        paths,
    })
}

impl DampedEnsemble {
    fn column(&self, obs: Observable) -> Result<usize> {
        self.observables
            .iter()
            .position(|o| *o == obs)
            .ok_or_else(|| Error::InvalidArgument(format!("observable {} was not logged", obs.name())))
    }

    /// Per-path `(1/(T - t₀)) ∫_{t₀}^T φ(u) dt` (left Riemann), then mean and SE over paths.
    pub fn path_average(&self, obs: Observable, from: f64) -> Result<(f64, f64)> {
        let c = self.column(obs)?;
        let first = ((from / self.dt) - 1e-9).ceil() as usize;
        let per: Vec<f64> = self
            .paths
            .iter()
            .map(|p| {
                let s = &p.series[c];
                let kept = &s[first.min(s.len() - 1)..s.len() - 1];
                kept.iter().sum::<f64>() / kept.len().max(1) as f64
            })
            .collect();
        Ok(mean_se(&per))
    }

    /// Empirical measure of `obs` pooled over all paths after burn-in.
    pub fn measure(&self, obs: Observable) -> Result<EmpiricalMeasure> {
        let c = self.column(obs)?;
        let mut pooled: Option<EmpiricalMeasure> = None;
        let mut all = Vec::new();
        for p in &self.paths {
            let m = time_average_samples(obs.name(), &p.series[c], self.dt, self.burn_in)?;
            all.extend_from_slice(&m.samples);
            pooled = Some(match pooled {
                None => m,
                Some(mut acc) => {
                    for (a, b) in acc.running.iter_mut().zip(&m.running) {
                        *a += b;
                    }
                    for (a, b) in acc.windows.iter_mut().zip(&m.windows) {
                        *a += b;
                    }
                    acc
                }
            });
        }
        let mut m = pooled.ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
        let np = self.paths.len() as f64;
        m.running.iter_mut().for_each(|x| *x /= np);
        m.windows.iter_mut().for_each(|x| *x /= np);
        m.average = all.iter().sum::<f64>() / all.len() as f64;
        m.edges = fd_edges(&all);
        let (counts, sums) = bin(&all, &m.edges);
        m.counts = counts;
        m.sums = sums;
        m.samples = all;
        Ok(m)
    }

    /// Path-averaged time-averaged energy spectrum.
    pub fn spectrum(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for p in &self.paths {
            if out.is_empty() {
                out = p.spectrum.clone();
            } else {
                for (a, b) in out.iter_mut().zip(&p.spectrum) {
                    a.1 += b.1;
                }
            }
        }
        let np = self.paths.len().max(1) as f64;
        out.iter_mut().for_each(|x| x.1 /= np);
        out
    }
}

/// Result of the Chebyshev tail check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailReport {
    pub radius: f64,
    /// Mean over paths of `(1/T)∫₀ᵀ 1{‖u‖_V > R} dt`.
    pub estimate: f64,
    pub se: f64,
    /// `(1/R²)[|u₀|²/(2γT) + |f|²/(4γ²)]`.
    pub chebyshev: f64,
}

impl TailReport {
    pub fn pass(&self) -> bool {
        self.estimate <= self.chebyshev + 3.0 * self.se
    }
}

pub fn tail_bound_check(ens: &DampedEnsemble, cfg: &DampedConfig, radius: f64) -> Result<TailReport> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("tail radius must be positive".into()));
    }
    let c = ens.column(Observable::VSq)?;
    let r2 = radius * radius;
    let per: Vec<f64> = ens
        .paths
        .iter()
        .map(|p| {
            let s = &p.series[c];
            let kept = &s[..s.len() - 1];
            kept.iter().filter(|&&v| v > r2).count() as f64 / kept.len().max(1) as f64
        })
        .collect();
    let (estimate, se) = mean_se(&per);
    Ok(TailReport {
        radius,
        estimate,
        se,
        chebyshev: cfg.v_average_bound() / r2,
    })
}

/// Time-averaged `‖u‖_V²` against `|u₀|²/(2γT) + |f|²/(4γ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageBoundReport {
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    /// Discretization allowance `dt·(‖u₀‖_V²/T + bound)`.
    pub allowance: f64,
}

impl AverageBoundReport {
    pub fn pass(&self) -> bool {
        self.estimate <= self.bound + 3.0 * self.se + self.allowance
    }
}

pub fn v_average_check(ens: &DampedEnsemble, cfg: &DampedConfig) -> Result<AverageBoundReport> {
    let (estimate, se) = ens.path_average(Observable::VSq, 0.0)?;
    let bound = cfg.v_average_bound();
    let v0 = {
        let u0 = cfg.sim.initial.project_ball(cfg.sim.cutoff);
        u0.h_sq() + u0.grad_sq()
    };
    Ok(AverageBoundReport {
        estimate,
        se,
        bound,
        allowance: cfg.sim.dt * (v0 / cfg.sim.t_end + bound),
    })
}

/// L¹ distance between the normalized histograms of two sample sets on
/// common Freedman–Diaconis bins; lies in `[0, 2]`.
pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let edges = fd_edges(&all);
    let (ca, _) = bin(a, &edges);
    let (cb, _) = bin(b, &edges);
    let na = ca.iter().sum::<u64>().max(1) as f64;
    let nb = cb.iter().sum::<u64>().max(1) as f64;
    ca.iter()
        .zip(&cb)
        .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
        .sum()
}

/// Distances between the empirical measures of two starts, per observable.
#[derive(Debug, Clone, PartialEq)]
pub struct StartComparison {
    pub rows: Vec<(String, f64, f64, f64)>,
}

/// Run the ensemble from `a` and from `b` (seed `seed_b` for the second) and
/// report, per observable, the two time averages and the histogram distance.
/// Nothing is asserted about the size of the distances.
pub fn two_start_comparison(
    cfg: &DampedConfig,
    a: &SpectralField,
    b: &SpectralField,
    seed_b: u64,
    observables: &[Observable],
    burn_in: f64,
) -> Result<StartComparison> {
    let mut ca = cfg.clone();
    ca.sim.initial = a.clone();
    let mut cb = cfg.clone();
    cb.sim.initial = b.clone();
    cb.sim.seed = seed_b;
    let ea = damped_ensemble(&ca, observables, burn_in)?;
    let eb = damped_ensemble(&cb, observables, burn_in)?;
    let mut rows = Vec::new();
    for &o in observables {
        let ma = ea.measure(o)?;
        let mb = eb.measure(o)?;
        rows.push((
            o.name().to_string(),
            ma.average,
            mb.average,
            histogram_distance(&ma.samples, &mb.samples),
        ));
    }
    Ok(StartComparison { rows })
}
