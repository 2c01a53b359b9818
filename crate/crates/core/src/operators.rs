//! Right-hand side of the Galerkin system on `H_n`: the linear operator
//! `A_α = α - νΔ`, the advection `B_n`, the tamed term `g_n`, the forcing
//! `f_n`, the transport noise, their sum, and the growth functional `F`.
//!
//! The advection is evaluated in divergence form, `[(u·∇)u]_i = ∂_j(u_j u_i)`,
//! with the six products formed on the grid and the result truncated to the
//! 2/3-rule sphere before projection. Fields are kept mean-free: the `k = 0`
//! mode of the tamed term and of the forcing is dropped.

use crate::error::{Error, Result};
use crate::field::{spectral_pair, PhysicalField, SpectralField};
use crate::grid::C64;
use crate::noise::NoiseModel;
use crate::taming::TamingFunction;

/// Forcing term, either `f(x, u) = f₀(x) + κu` or a fixed `f₀`.
#[derive(Debug, Clone)]
pub enum Forcing {
    State { f0: SpectralField, kappa: f64 },
    Fixed { f0: SpectralField },
}

impl Forcing {
    pub fn f0(&self) -> &SpectralField {
        match self {
            Forcing::State { f0, .. } | Forcing::Fixed { f0 } => f0,
        }
    }

    pub fn kappa(&self) -> f64 {
        match self {
            Forcing::State { kappa, .. } => *kappa,
            Forcing::Fixed { .. } => 0.0,
        }
    }

    /// `C_f` in `|f(x,u)|² <= C_f |u|² + b_f(x)`; `2κ² <= κ` once `κ <= ½`.
    pub fn c_f(&self) -> f64 {
        match self {
            Forcing::State { kappa, .. } => kappa.max(2.0 * kappa * kappa),
            Forcing::Fixed { .. } => 0.0,
        }
    }

    /// `|b_f|_{L¹}` with `b_f = 2|f₀|²` for the state form and `|f₀|²` otherwise.
    pub fn b_f_l1(&self) -> f64 {
        match self {
            Forcing::State { f0, .. } => 2.0 * f0.h_sq(),
            Forcing::Fixed { f0 } => f0.h_sq(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriftParams {
    pub nu: f64,
    pub alpha: f64,
    pub taming: TamingFunction,
    pub forcing: Forcing,
    /// Switch for `B_n`; off gives the linear or purely tamed system.
    pub advection: bool,
    /// Switch for `g_n`.
    pub tamed: bool,
}

impl DriftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::range("model.nu", format!("must be positive, got {}", self.nu)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::range(
                "model.alpha",
                format!("must be nonnegative, got {}", self.alpha),
            ));
        }
        if !(self.forcing.kappa().is_finite() && self.forcing.kappa() >= 0.0) {
            return Err(Error::range("forcing.kappa", "must be nonnegative"));
        }
        Ok(())
    }

    /// `K₁ = 3/4 + 2C_f + 2|b_f|_{L¹}`.
    pub fn k1(&self) -> f64 {
        0.75 + 2.0 * self.forcing.c_f() + 2.0 * self.forcing.b_f_l1()
    }

    /// `C_{N,f} = N + 3/2 + C_f/2`.
    pub fn c_nf(&self) -> f64 {
        self.taming.threshold() + 1.5 + 0.5 * self.forcing.c_f()
    }
}

/// Every piece of the drift at one state, sharing a single set of transforms.
#[derive(Debug, Clone)]
pub struct DriftParts {
    /// `-A_α u`.
    pub linear: SpectralField,
    pub advection: SpectralField,
    pub tamed: SpectralField,
    pub forcing: SpectralField,
    pub physical: PhysicalField,
    /// Quadrature of `|u|⁴`.
    pub l4_pow4: f64,
    /// Quadrature of `g(|u|²)|u|²`.
    pub tamed_energy: f64,
}

impl DriftParts {
    /// `-B_n - g_n + f_n`, the part treated explicitly in time.
    pub fn explicit(&self) -> SpectralField {
        let mut out = self.forcing.clone();
        out.axpy(-1.0, &self.advection);
        out.axpy(-1.0, &self.tamed);
        out
    }

    /// `-A_α u - B_n(u) - g_n(u) + f_n(u)`.
    pub fn total(&self) -> SpectralField {
        let mut out = self.explicit();
        out.axpy(1.0, &self.linear);
        out
    }
}

/// Evaluate all drift components of `u`.
pub fn drift_parts(u: &SpectralField, p: &DriftParams) -> DriftParts {
    let g = u.grid().clone();
    let n = u.cutoff();
    let phys = u.to_physical();
    let v = phys.values();
    let r = phys.magnitude_sq();
    let cell = g.cell_volume();
    let l4_pow4 = r.iter().map(|x| x * x).sum::<f64>() * cell;

    let advection = if p.advection {
        let prod = |a: usize, b: usize| -> Vec<f64> { v[a].iter().zip(&v[b]).map(|(x, y)| x * y).collect() };
        let key = g.ball_key(n).min(g.dealias_key());
        let kept = g.support_for_key(key);
        let pair = |a: (usize, usize), b: (usize, usize)| spectral_pair(&g, &kept, &prod(a.0, a.1), Some(&prod(b.0, b.1)));
        let (s00, s01) = pair((0, 0), (0, 1));
        let (s02, s11) = pair((0, 2), (1, 1));
        let (s12, s22) = pair((1, 2), (2, 2));
        let s = [[&s00, &s01, &s02], [&s01, &s11, &s12], [&s02, &s12, &s22]];
        let mut out = SpectralField::zeros_in(&g, n);
        let i = C64::new(0.0, 1.0);
        {
            let target = out.support().clone();
            let oc = out.coeffs_mut();
            for (q, &idx) in kept.indices().iter().enumerate() {
                let Some(p) = target.position(idx) else { continue };
                let k = kept.k(q);
                for c in 0..3 {
                    oc[c][p] = i * (k[0] * s[0][c][q] + k[1] * s[1][c][q] + k[2] * s[2][c][q]);
                }
            }
        }
        out.leray_in_place();
        out
    } else {
        SpectralField::zeros(&g)
    };

    let (tamed, tamed_energy) = if p.tamed {
        let gr: Vec<f64> = r.iter().map(|&x| p.taming.g_unchecked(x)).collect();
        let energy = gr.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() * cell;
        if energy == 0.0 {
            (SpectralField::zeros(&g), 0.0)
        } else {
            let w = [0, 1, 2].map(|c| v[c].iter().zip(&gr).map(|(x, y)| x * y).collect::<Vec<f64>>());
            let mut t = PhysicalField::new(&g, w).to_spectral_ball(n);
            t.remove_mean();
            (t.leray_project(), energy)
        }
    } else {
        (SpectralField::zeros(&g), 0.0)
    };

    DriftParts {
        linear: u.stokes_apply(p.nu, p.alpha).scaled(-1.0),
        advection,
        tamed,
        forcing: forcing_fn(u, p),
        physical: phys,
        l4_pow4,
        tamed_energy,
    }
}

/// `B_n(u) = P_n Π[(u·∇)u]`.
pub fn nonlinear_b(u: &SpectralField) -> SpectralField {
    let p = DriftParams {
        nu: 1.0,
        alpha: 0.0,
        taming: TamingFunction::default(),
        forcing: Forcing::Fixed {
            f0: SpectralField::zeros(u.grid()),
        },
        advection: true,
        tamed: false,
    };
    drift_parts(u, &p).advection
}

/// `g_n(u) = P_n Π[g(|u|²)u]`.
pub fn tamed_gn(u: &SpectralField, tf: &TamingFunction) -> SpectralField {
    let mut t = tf.tamed_term(&u.to_physical()).to_spectral_ball(u.cutoff());
    t.remove_mean();
    t.leray_project()
}

/// `f_n(u) = P_n Π f₀ + κu` for `u ∈ H_n`.
pub fn forcing_fn(u: &SpectralField, p: &DriftParams) -> SpectralField {
    let mut out = p.forcing.f0().project_ball(u.cutoff()).leray_project();
    out.remove_mean();
    let kappa = p.forcing.kappa();
    if kappa != 0.0 {
        out.axpy(kappa, u);
    }
    out
}

/// `[G_1(u), …, G_J(u)]`.
pub fn noise_apply(u: &SpectralField, nm: &NoiseModel) -> Vec<SpectralField> {
    nm.apply_all(u)
}

/// `-A_α u - B_n(u) - g_n(u) + f_n(u)`.
pub fn drift(u: &SpectralField, p: &DriftParams) -> SpectralField {
    drift_parts(u, p).total()
}

/// `F(u) = Σ_j |G_j(u)|² + 2⟨u, drift(u)⟩`.
pub fn growth_functional_f(u: &SpectralField, p: &DriftParams, nm: &NoiseModel) -> f64 {
    nm.hs_norm_sq(u) + 2.0 * u.inner(&drift(u, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid() -> Arc<Grid> {
        Grid::new(16, 2.0 * PI).unwrap()
    }

    fn params(g: &Arc<Grid>, kappa: f64) -> DriftParams {
        let f0 = SpectralField::random(g, 2.0, &mut ChaCha8Rng::seed_from_u64(99)).normalized(crate::Norm::H, 0.3);
        DriftParams {
            nu: 1.0,
            alpha: 0.0,
            taming: TamingFunction::new(2.0).unwrap(),
            forcing: Forcing::State { f0, kappa },
            advection: true,
            tamed: true,
        }
    }

    #[test]
    fn shear_mode_has_no_self_advection() {
        let g = grid();
        let z = C64::default();
        // (sin x3, 0, 0)
        let u = SpectralField::single_mode(&g, [0, 0, 1], [C64::new(0.0, -0.5), z, z]).project_ball(4.0);
        assert!(nonlinear_b(&u).h_sq() < 1e-28);
        assert_eq!(nonlinear_b(&SpectralField::zeros(&g).project_ball(4.0)).h_sq(), 0.0);
    }

    #[test]
    fn advection_is_energy_neutral() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let u = SpectralField::random(&g, 4.0, &mut rng).normalized(crate::Norm::H, 3.0);
            let b = nonlinear_b(&u);
            let scale = u.h_sq().sqrt() * u.norm(crate::Norm::V) * u.norm(crate::Norm::DA);
            assert!(u.inner(&b).abs() <= 1e-10 * scale);
            assert!(b.divergence_defect() < 1e-12);
            assert_eq!(b.max_outside_ball(4.0), 0.0);
        }
    }

    #[test]
    fn parts_agree_with_standalone_operators() {
        let g = grid();
        let p = params(&g, 0.1);
        let u = SpectralField::random(&g, 4.0, &mut ChaCha8Rng::seed_from_u64(8)).normalized(crate::Norm::H, 40.0);
        let parts = drift_parts(&u, &p);
        let gn = tamed_gn(&u, &p.taming);
        assert!(gn.h_sq() > 0.0);
        assert!(parts.tamed.sub(&gn).h_sq().sqrt() <= 1e-12 * gn.h_sq().sqrt());
        let total = drift(&u, &p);
        let mut sum = u.stokes_apply(1.0, 0.0).scaled(-1.0);
        sum.axpy(-1.0, &nonlinear_b(&u));
        sum.axpy(-1.0, &gn);
        sum.axpy(1.0, &forcing_fn(&u, &p));
        assert!(total.sub(&sum).h_sq().sqrt() <= 1e-12 * total.h_sq().sqrt());
    }

    #[test]
    fn forcing_is_kappa_lipschitz() {
        let g = grid();
        let p = params(&g, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = SpectralField::random(&g, 4.0, &mut rng);
        let v = SpectralField::random(&g, 4.0, &mut rng);
        let lhs = forcing_fn(&u, &p).sub(&forcing_fn(&v, &p)).h_sq().sqrt();
        assert!(lhs <= 0.3 * u.sub(&v).h_sq().sqrt() * (1.0 + 1e-12));
        let mut q = p.clone();
        q.forcing = Forcing::State {
            f0: SpectralField::zeros(&g),
            kappa: 1.0,
        };
        assert!(forcing_fn(&u, &q).sub(&u).h_sq() < 1e-30);
    }

    #[test]
    fn linear_drift_on_single_mode() {
        let g = grid();
        let p = DriftParams {
            nu: 0.5,
            alpha: 0.2,
            taming: TamingFunction::default(),
            forcing: Forcing::Fixed {
                f0: SpectralField::zeros(&g),
            },
            advection: false,
            tamed: false,
        };
        let one = C64::new(1.0, 0.0);
        let z = C64::default();
        let u = SpectralField::single_mode(&g, [1, 1, 0], [z, z, one]);
        let d = drift(&u, &p);
        let idx = g.index_of([1, 1, 0]).unwrap();
        assert!((d.get(2, idx).re + (0.2 + 0.5 * 2.0)).abs() < 1e-14);
        assert_eq!(drift(&SpectralField::zeros(&g), &p).h_sq(), 0.0);
    }

    #[test]
    fn growth_functional_is_negative_at_large_amplitude() {
        let g = grid();
        let p = params(&g, 0.1);
        let nm = NoiseModel::constant(4, 0.25).unwrap();
        let u = SpectralField::random(&g, 4.0, &mut ChaCha8Rng::seed_from_u64(1));
        let f = growth_functional_f(&u.normalized(crate::Norm::H, 500.0), &p, &nm);
        assert!(f < 0.0);
        let z = SpectralField::zeros(&g).project_ball(4.0);
        let mut q = p.clone();
        q.forcing = Forcing::Fixed { f0: SpectralField::zeros(&g) };
        assert_eq!(growth_functional_f(&z, &q, &nm), 0.0);
    }
}
