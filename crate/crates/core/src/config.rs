//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, keys are dotted. Every key
//! has a default, so an empty file is a complete configuration; unknown keys
//! are rejected. [`Config::print`] writes every key and parses back to an
//! equal value.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Norm, SpectralField};
use crate::grid::{Grid, C64};
use crate::integrator::{Scheme, SimConfig};
use crate::invariant::{DampedConfig, Observable};
use crate::noise::{NoiseKind, NoiseModel};
use crate::operators::{DriftParams, Forcing};
use crate::taming::TamingFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseChoice {
    Constant,
    Banded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingChoice {
    State,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitChoice {
    /// Random divergence-free field in the ball of radius `init.radius`.
    Random,
    Zero,
    /// `u = a (cos x₃, 0, 0)` scaled to the requested norm.
    Shear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormChoice {
    H,
    V,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub grid_m: usize,
    pub grid_l: f64,
    pub n: f64,
    pub nu: f64,
    pub alpha: f64,
    pub taming_n: f64,
    pub advection: bool,
    pub tamed: bool,
    pub noise_kind: NoiseChoice,
    pub noise_j: usize,
    pub noise_strength: f64,
    pub noise_beta: f64,
    pub noise_band: i64,
    pub forcing_kind: ForcingChoice,
    pub forcing_kappa: f64,
    pub forcing_norm: f64,
    pub forcing_radius: f64,
    pub forcing_seed: u64,
    pub init_kind: InitChoice,
    pub init_norm: NormChoice,
    pub init_value: f64,
    pub init_radius: f64,
    pub init_seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub substeps: usize,
    pub scheme: Scheme,
    pub paths: usize,
    pub seed: u64,
    pub r_stop: Option<f64>,
    pub snapshot_every: usize,
    pub full_diagnostics: bool,
    pub burn_in: f64,
    pub observables: Vec<Observable>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            grid_m: 16,
            grid_l: 2.0 * std::f64::consts::PI,
            n: 4.0,
            nu: 1.0,
            alpha: 0.0,
            taming_n: 10.0,
            advection: true,
            tamed: true,
            noise_kind: NoiseChoice::Constant,
            noise_j: 4,
            noise_strength: 0.25,
            noise_beta: 0.5,
            noise_band: 1,
            forcing_kind: ForcingChoice::State,
            forcing_kappa: 0.1,
            forcing_norm: 0.1,
            forcing_radius: 2.0,
            forcing_seed: 7,
            init_kind: InitChoice::Random,
            init_norm: NormChoice::V,
            init_value: 2.0,
            init_radius: 2.0,
            init_seed: 1,
            dt: 1e-3,
            t_end: 1.0,
            substeps: 1,
            scheme: Scheme::SemiImplicit,
            paths: 1,
            seed: 0,
            r_stop: None,
            snapshot_every: 0,
            full_diagnostics: false,
            burn_in: 0.0,
            observables: Observable::DEFAULT.to_vec(),
        }
    }
}

/// Every accepted key with a one-line description, in print order.
pub const KEYS: &[(&str, &str)] = &[
    ("grid.M", "collocation points per axis (even, >= 8)"),
    ("grid.L", "box side length"),
    ("model.n", "ball radius of the Galerkin truncation, wavenumber units"),
    ("model.nu", "viscosity"),
    ("model.alpha", "damping; 0 for the undamped system"),
    ("taming.N", "taming threshold N (alias model.N)"),
    ("model.advection", "include the advection term"),
    ("model.tamed", "include the taming term"),
    ("noise.kind", "constant | banded"),
    ("noise.J", "number of Wiener directions"),
    ("noise.strength", "sup_x sum_j |sigma_j(x)|^2, at most 0.25"),
    ("noise.beta", "modulation depth of banded noise"),
    ("noise.band", "integer wavenumber of banded noise"),
    ("forcing.kind", "state (f0 + kappa u) | fixed (f0)"),
    ("forcing.kappa", "Lipschitz gain of the state forcing"),
    ("forcing.norm", "L^2 norm of f0"),
    ("forcing.radius", "ball radius of f0"),
    ("forcing.seed", "seed of the random f0"),
    ("init.kind", "random | zero | shear"),
    ("init.norm", "H | V, the norm fixed by init.value"),
    ("init.value", "norm of the initial field"),
    ("init.radius", "ball radius of the random initial field"),
    ("init.seed", "seed of the random initial field"),
    ("time.dt", "time step"),
    ("time.T", "horizon, a multiple of time.dt"),
    ("time.substeps", "Brownian draws summed per step"),
    ("time.scheme", "semi-implicit | explicit"),
    ("run.paths", "ensemble size"),
    ("run.seed", "base seed of the Wiener streams"),
    ("stop.R", "V-norm stopping radius, or none"),
    ("output.snapshot_every", "steps between snapshots; 0 keeps first and last"),
    ("output.full_diagnostics", "also log the |u||grad u| functional"),
    ("invariant.burn_in", "burn-in time of time averages"),
    ("invariant.observables", "comma-separated list of v_sq, h_sq, l4_pow4, grad_sq, one"),
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Parse {
        key: key.to_string(),
        msg: format!("`{v}`: {e}"),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Parse {
            key: key.to_string(),
            msg: format!("`{v}`: expected true or false"),
        }),
    }
}

fn bad_choice(key: &str, v: &str, allowed: &str) -> Error {
    Error::Parse {
        key: key.to_string(),
        msg: format!("`{v}`: expected one of {allowed}"),
    }
}

impl Config {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                key: format!("line {}", lineno + 1),
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "grid.M" => self.grid_m = parse_num(key, v)?,
            "grid.L" => self.grid_l = parse_num(key, v)?,
            "model.n" => self.n = parse_num(key, v)?,
            "model.nu" => self.nu = parse_num(key, v)?,
            "model.alpha" => self.alpha = parse_num(key, v)?,
            "taming.N" | "model.N" => self.taming_n = parse_num(key, v)?,
            "model.advection" => self.advection = parse_bool(key, v)?,
            "model.tamed" => self.tamed = parse_bool(key, v)?,
            "noise.kind" => {
                self.noise_kind = match v {
                    "constant" => NoiseChoice::Constant,
                    "banded" => NoiseChoice::Banded,
                    _ => return Err(bad_choice(key, v, "constant, banded")),
                }
            }
            "noise.J" => self.noise_j = parse_num(key, v)?,
            "noise.strength" => self.noise_strength = parse_num(key, v)?,
            "noise.beta" => self.noise_beta = parse_num(key, v)?,
            "noise.band" => self.noise_band = parse_num(key, v)?,
            "forcing.kind" => {
                self.forcing_kind = match v {
                    "state" => ForcingChoice::State,
                    "fixed" => ForcingChoice::Fixed,
                    _ => return Err(bad_choice(key, v, "state, fixed")),
                }
            }
            "forcing.kappa" => self.forcing_kappa = parse_num(key, v)?,
            "forcing.norm" => self.forcing_norm = parse_num(key, v)?,
            "forcing.radius" => self.forcing_radius = parse_num(key, v)?,
            "forcing.seed" => self.forcing_seed = parse_num(key, v)?,
            "init.kind" => {
                self.init_kind = match v {
                    "random" => InitChoice::Random,
                    "zero" => InitChoice::Zero,
                    "shear" => InitChoice::Shear,
                    _ => return Err(bad_choice(key, v, "random, zero, shear")),
                }
            }
            "init.norm" => {
                self.init_norm = match v {
                    "H" => NormChoice::H,
                    "V" => NormChoice::V,
                    _ => return Err(bad_choice(key, v, "H, V")),
                }
            }
            "init.value" => self.init_value = parse_num(key, v)?,
            "init.radius" => self.init_radius = parse_num(key, v)?,
            "init.seed" => self.init_seed = parse_num(key, v)?,
            "time.dt" => self.dt = parse_num(key, v)?,
            "time.T" => self.t_end = parse_num(key, v)?,
            "time.substeps" => self.substeps = parse_num(key, v)?,
            "time.scheme" => {
                self.scheme = match v {
                    "semi-implicit" => Scheme::SemiImplicit,
                    "explicit" => Scheme::Explicit,
                    _ => return Err(bad_choice(key, v, "semi-implicit, explicit")),
                }
            }
            "run.paths" => self.paths = parse_num(key, v)?,
            "run.seed" => self.seed = parse_num(key, v)?,
            "stop.R" => {
                self.r_stop = match v {
                    "none" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "output.snapshot_every" => self.snapshot_every = parse_num(key, v)?,
            "output.full_diagnostics" => self.full_diagnostics = parse_bool(key, v)?,
            "invariant.burn_in" => self.burn_in = parse_num(key, v)?,
            "invariant.observables" => {
                self.observables = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(Observable::parse)
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::Parse {
                        key: key.to_string(),
                        msg: e.to_string(),
                    })?
            }
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Range checks that do not need a grid; each error names its key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::range(key, format!("must be positive, got {x}")))
            }
        };
        let nonneg = |key: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::range(key, format!("must be nonnegative, got {x}")))
            }
        };
        if self.grid_m < 8 || self.grid_m % 2 != 0 {
            return Err(Error::range("grid.M", format!("must be even and >= 8, got {}", self.grid_m)));
        }
        positive("grid.L", self.grid_l)?;
        positive("model.n", self.n)?;
        positive("model.nu", self.nu)?;
        nonneg("model.alpha", self.alpha)?;
        positive("taming.N", self.taming_n)?;
        if self.noise_j == 0 {
            return Err(Error::range("noise.J", "must be at least 1"));
        }
        if !(0.0..=0.25).contains(&self.noise_strength) {
            return Err(Error::range(
                "noise.strength",
                format!("must lie in [0, 0.25], got {}", self.noise_strength),
            ));
        }
        nonneg("noise.beta", self.noise_beta)?;
        if self.noise_band < 1 {
            return Err(Error::range("noise.band", "must be at least 1"));
        }
        nonneg("forcing.kappa", self.forcing_kappa)?;
        nonneg("forcing.norm", self.forcing_norm)?;
        positive("forcing.radius", self.forcing_radius)?;
        nonneg("init.value", self.init_value)?;
        positive("init.radius", self.init_radius)?;
        positive("time.dt", self.dt)?;
        nonneg("time.T", self.t_end)?;
        if self.substeps == 0 {
            return Err(Error::range("time.substeps", "must be at least 1"));
        }
        if self.paths == 0 {
            return Err(Error::range("run.paths", "must be at least 1"));
        }
        if let Some(r) = self.r_stop {
            positive("stop.R", r)?;
        }
        nonneg("invariant.burn_in", self.burn_in)?;
        if self.observables.is_empty() {
            return Err(Error::range("invariant.observables", "must name at least one observable"));
        }
        Ok(())
    }

    /// Every key with its current value, one per line, in [`KEYS`] order.
    pub fn print(&self) -> String {
        let mut s = String::new();
        for (key, _) in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value(key));
        }
        s
    }

    fn value(&self, key: &str) -> String {
        let b = |x: bool| if x { "true" } else { "false" }.to_string();
        match key {
            "grid.M" => self.grid_m.to_string(),
            "grid.L" => self.grid_l.to_string(),
            "model.n" => self.n.to_string(),
            "model.nu" => self.nu.to_string(),
            "model.alpha" => self.alpha.to_string(),
            "taming.N" => self.taming_n.to_string(),
            "model.advection" => b(self.advection),
            "model.tamed" => b(self.tamed),
            "noise.kind" => match self.noise_kind {
                NoiseChoice::Constant => "constant",
                NoiseChoice::Banded => "banded",
            }
            .into(),
            "noise.J" => self.noise_j.to_string(),
            "noise.strength" => self.noise_strength.to_string(),
            "noise.beta" => self.noise_beta.to_string(),
            "noise.band" => self.noise_band.to_string(),
            "forcing.kind" => match self.forcing_kind {
                ForcingChoice::State => "state",
                ForcingChoice::Fixed => "fixed",
            }
            .into(),
            "forcing.kappa" => self.forcing_kappa.to_string(),
            "forcing.norm" => self.forcing_norm.to_string(),
            "forcing.radius" => self.forcing_radius.to_string(),
            "forcing.seed" => self.forcing_seed.to_string(),
            "init.kind" => match self.init_kind {
                InitChoice::Random => "random",
                InitChoice::Zero => "zero",
                InitChoice::Shear => "shear",
            }
            .into(),
            "init.norm" => match self.init_norm {
                NormChoice::H => "H",
                NormChoice::V => "V",
            }
            .into(),
            "init.value" => self.init_value.to_string(),
            "init.radius" => self.init_radius.to_string(),
            "init.seed" => self.init_seed.to_string(),
            "time.dt" => self.dt.to_string(),
            "time.T" => self.t_end.to_string(),
            "time.substeps" => self.substeps.to_string(),
            "time.scheme" => self.scheme.name().into(),
            "run.paths" => self.paths.to_string(),
            "run.seed" => self.seed.to_string(),
            "stop.R" => self.r_stop.map_or("none".into(), |r| r.to_string()),
            "output.snapshot_every" => self.snapshot_every.to_string(),
            "output.full_diagnostics" => b(self.full_diagnostics),
            "invariant.burn_in" => self.burn_in.to_string(),
            "invariant.observables" => self
                .observables
                .iter()
                .map(|o| o.name())
                .collect::<Vec<_>>()
                .join(","),
            _ => unreachable!("key table and printer disagree on {key}"),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.grid_m, self.grid_l)
    }

    fn norm(&self) -> Norm {
        match self.init_norm {
            NormChoice::H => Norm::H,
            NormChoice::V => Norm::V,
        }
    }

    /// The forcing profile `f₀`.
    pub fn forcing_field(&self, grid: &Arc<Grid>) -> SpectralField {
        if self.forcing_norm == 0.0 {
            return SpectralField::zeros(grid);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.forcing_seed);
        SpectralField::random(grid, self.forcing_radius.min(self.n), &mut rng).normalized(Norm::H, self.forcing_norm)
    }

    /// The initial field `u₀`.
    pub fn initial_field(&self, grid: &Arc<Grid>) -> SpectralField {
        match self.init_kind {
            InitChoice::Zero => SpectralField::zeros(grid),
            InitChoice::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
                SpectralField::random(grid, self.init_radius.min(self.n), &mut rng).normalized(self.norm(), self.init_value)
            }
            InitChoice::Shear => {
                let z = C64::default();
                SpectralField::single_mode(grid, [0, 0, 1], [C64::new(0.5, 0.0), z, z]).normalized(self.norm(), self.init_value)
            }
        }
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        let kind = match self.noise_kind {
            NoiseChoice::Constant => NoiseKind::Constant,
            NoiseChoice::Banded => NoiseKind::Banded {
                beta: self.noise_beta,
                band: self.noise_band,
            },
        };
        NoiseModel::new(kind, self.noise_j, self.noise_strength)
    }

    pub fn build(&self) -> Result<SimConfig> {
        self.validate()?;
        let grid = self.grid()?;
        let f0 = self.forcing_field(&grid);
        let forcing = match self.forcing_kind {
            ForcingChoice::State => Forcing::State {
                f0,
                kappa: self.forcing_kappa,
            },
            ForcingChoice::Fixed => Forcing::Fixed { f0 },
        };
        let cfg = SimConfig {
            cutoff: self.n,
            dt: self.dt,
            t_end: self.t_end,
            params: DriftParams {
                nu: self.nu,
                alpha: self.alpha,
                taming: TamingFunction::new(self.taming_n)?,
                forcing,
                advection: self.advection,
                tamed: self.tamed,
            },
            noise: self.noise()?,
            seed: self.seed,
            n_paths: self.paths,
            scheme: self.scheme,
            r_stop: self.r_stop,
            substeps: self.substeps,
            snapshot_every: self.snapshot_every,
            full_diagnostics: self.full_diagnostics,
            initial: self.initial_field(&grid),
            grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_damped(&self) -> Result<DampedConfig> {
        DampedConfig::new(self.build()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Config::parse_str("").unwrap(), Config::default());
        assert_eq!(Config::parse_str("# only a comment\n\n").unwrap(), Config::default());
    }

    #[test]
    fn errors_name_the_key() {
        let e = Config::parse_str("model.alpha = -1").unwrap_err();
        assert!(matches!(&e, Error::Range { key, .. } if key == "model.alpha"), "{e}");
        let e = Config::parse_str("model.alpah = 1").unwrap_err();
        assert!(matches!(&e, Error::UnknownKey(k) if k == "model.alpah"));
        let e = Config::parse_str("time.dt = fast").unwrap_err();
        assert!(matches!(&e, Error::Parse { key, .. } if key == "time.dt"));
        let e = Config::parse_str("noise.strength = 0.3").unwrap_err();
        assert!(e.to_string().contains("noise.strength"));
        let e = Config::parse_str("grid.M").unwrap_err();
        assert!(e.to_string().contains("line 1"));
        assert!(matches!(
            Config::from_file(Path::new("/nonexistent/run.conf")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn alias_and_comments() {
        let c = Config::parse_str("model.N = 12.5  # alias\nstop.R = 3").unwrap();
        assert_eq!(c.taming_n, 12.5);
        assert_eq!(c.r_stop, Some(3.0));
    }

    #[test]
    fn print_parse_round_trip() {
        let mut c = Config::default();
        c.grid_l = 3.0f64.sqrt();
        c.dt = 1.0 / 3.0 * 1e-3;
        c.noise_kind = NoiseChoice::Banded;
        c.forcing_kind = ForcingChoice::Fixed;
        c.init_kind = InitChoice::Shear;
        c.scheme = Scheme::Explicit;
        c.r_stop = Some(0.1 + 0.2);
        c.observables = vec![Observable::One, Observable::GradSq];
        let text = c.print();
        assert_eq!(Config::parse_str(&text).unwrap(), c);
        assert_eq!(text.lines().count(), KEYS.len());
    }

    #[test]
    fn build_respects_norms() {
        let c = Config::default();
        let s = c.build().unwrap();
        assert!((s.initial.norm(Norm::V) - 2.0).abs() < 1e-12);
        assert!((s.params.forcing.f0().norm(Norm::H) - 0.1).abs() < 1e-12);
        assert!(s.initial.max_outside_ball(2.0) == 0.0);
    }
}
