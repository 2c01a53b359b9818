//! Transport noise `G_j(u) = P_n Π[(σ_j·∇)u]` for a finite family of fields
//! `σ_j = s_j(x) e_{d_j}` with direction `d_j = j mod 3`.
//!
//! * constant: `s_j ≡ c_j`;
//! * banded: `s_j(x) = c_j (1 + β sin(k x_e)) / (1 + β)` with `e = d_j + 1 mod 3`,
//!   so `σ_j` is divergence-free and varies across the flow direction.
//!
//! In both cases `c_j² = strength / J`, hence `sup_x Σ_j |σ_j(x)|² = strength`.

use crate::error::{Error, Result};
use crate::field::{PhysicalField, SpectralField};
use crate::grid::{Grid, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Constant,
    Banded { beta: f64, band: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    amps: Vec<f64>,
    strength: f64,
    bound: f64,
}

/// Largest `sup_x Σ_j |σ_j(x)|²` accepted.
pub const NOISE_BOUND: f64 = 0.25;

impl NoiseModel {
    pub fn new(kind: NoiseKind, j: usize, strength: f64) -> Result<Self> {
        if j == 0 {
            return Err(Error::range("noise.J", "must be at least 1"));
        }
        if !(0.0..=NOISE_BOUND).contains(&strength) {
            return Err(Error::range(
                "noise.strength",
                format!("must lie in [0, 1/4], got {strength}"),
            ));
        }
        if let NoiseKind::Banded { beta, band } = kind {
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(Error::range("noise.beta", "must be nonnegative"));
            }
            if band < 1 {
                return Err(Error::range("noise.band", "must be at least 1"));
            }
        }
        let c = (strength / j as f64).sqrt();
        let mut nm = NoiseModel {
            kind,
            amps: vec![c; j],
            strength,
            bound: 0.0,
        };
        nm.bound = nm.sampled_sup(32);
        if nm.bound > NOISE_BOUND * (1.0 + 1e-12) {
            return Err(Error::range("noise.strength", "sup of Σ|σ_j|² exceeds 1/4"));
        }
        Ok(nm)
    }

    pub fn constant(j: usize, strength: f64) -> Result<Self> {
        Self::new(NoiseKind::Constant, j, strength)
    }

    pub fn off() -> Self {
        Self::constant(1, 0.0).expect("zero noise is valid")
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn j(&self) -> usize {
        self.amps.len()
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn is_off(&self) -> bool {
        self.strength == 0.0
    }

    pub fn direction(&self, j: usize) -> usize {
        j % 3
    }

    /// Cached `sup_x Σ_j |σ_j(x)|²`.
    pub fn bound_check(&self) -> f64 {
        self.bound
    }

    /// `sup_x Σ_{a,j} |∂_a σ_j(x)|²` on a box of side `length`.
    pub fn gradient_bound(&self, length: f64) -> f64 {
        match self.kind {
            NoiseKind::Constant => 0.0,
            NoiseKind::Banded { beta, band } => {
                let k = 2.0 * std::f64::consts::PI / length * band as f64;
                self.strength * (beta * k / (1.0 + beta)).powi(2)
            }
        }
    }

    /// Constant in `Σ_j ‖G_j u‖_V² <= ½|Au|² + C_σ |∇u|²`.
    pub fn c_sigma(&self, length: f64) -> f64 {
        self.strength + 2.0 * self.gradient_bound(length)
    }

    fn profile(&self, j: usize, y: f64) -> f64 {
        match self.kind {
            NoiseKind::Constant => self.amps[j],
            NoiseKind::Banded { beta, .. } => self.amps[j] * (1.0 + beta * y.sin()) / (1.0 + beta),
        }
    }

    fn sampled_sup(&self, samples: usize) -> f64 {
        let band = match self.kind {
            NoiseKind::Constant => return self.amps.iter().map(|c| c * c).sum(),
            NoiseKind::Banded { band, .. } => band as f64,
        };
        let tau = 2.0 * std::f64::consts::PI;
        let mut best: f64 = 0.0;
        for a in 0..samples {
            for b in 0..samples {
                for c in 0..samples {
                    let y = [a, b, c].map(|i| band * tau * i as f64 / samples as f64);
                    let s: f64 = (0..self.j())
                        .map(|j| self.profile(j, y[(self.direction(j) + 1) % 3]).powi(2))
                        .sum();
                    best = best.max(s);
                }
            }
        }
        best
    }

    /// `σ_j` sampled on the grid.
    pub fn sigma_physical(&self, j: usize, grid: &std::sync::Arc<Grid>) -> PhysicalField {
        let d = self.direction(j);
        let e = (d + 1) % 3;
        let band = match self.kind {
            NoiseKind::Constant => 0.0,
            NoiseKind::Banded { band, .. } => band as f64,
        };
        let k = grid.base_wavenumber() * band;
        PhysicalField::from_fn(grid, |x| {
            let mut v = [0.0; 3];
            v[d] = self.profile(j, k * x[e]);
            v
        })
    }

    /// `Σ_j w_j G_j(u)` with the result restricted to the ball of `u`.
    pub fn apply_weighted(&self, u: &SpectralField, w: &[f64]) -> SpectralField {
        assert_eq!(w.len(), self.j(), "one weight per noise direction");
        let g = u.grid().clone();
        let sup = u.support().clone();
        let i = C64::new(0.0, 1.0);
        let cu = u.coeffs();
        let mut out = SpectralField::zeros_in(&g, u.cutoff());
        match self.kind {
            NoiseKind::Constant => {
                let mut a = [0.0; 3];
                for (j, (&c, &wj)) in self.amps.iter().zip(w).enumerate() {
                    a[self.direction(j)] += c * wj;
                }
                let oc = out.coeffs_mut();
                for p in 0..sup.len() {
                    let k = sup.k(p);
                    let s = i * (a[0] * k[0] + a[1] * k[1] + a[2] * k[2]);
                    for c in 0..3 {
                        oc[c][p] = s * cu[c][p];
                    }
                }
                out
            }
            NoiseKind::Banded { beta, band } => {
                let half = beta / (2.0 * i);
                let oc = out.coeffs_mut();
                for (j, (&c, &wj)) in self.amps.iter().zip(w).enumerate() {
                    if wj == 0.0 || c == 0.0 {
                        continue;
                    }
                    let d = self.direction(j);
                    let e = (d + 1) % 3;
                    let scale = wj * c / (1.0 + beta);
                    let near = |p: usize, by: i64| g.shifted(sup.indices()[p], e, by).and_then(|m| sup.position(m));
                    let shifts: Vec<(Option<usize>, Option<usize>)> =
                        (0..sup.len()).map(|p| (near(p, -band), near(p, band))).collect();
                    for comp in 0..3 {
                        let deriv = |q: usize| i * sup.k(q)[d] * cu[comp][q];
                        for (p, &(lo, hi)) in shifts.iter().enumerate() {
                            let mut acc = deriv(p);
                            if let Some(q) = lo {
                                acc += half * deriv(q);
                            }
                            if let Some(q) = hi {
                                acc -= half * deriv(q);
                            }
                            oc[comp][p] += scale * acc;
                        }
                    }
                }
                out.leray_in_place();
                out.symmetrize();
                out
            }
        }
    }

    /// `G_j(u)`.
    pub fn apply(&self, u: &SpectralField, j: usize) -> SpectralField {
        let mut w = vec![0.0; self.j()];
        w[j] = 1.0;
        self.apply_weighted(u, &w)
    }

    pub fn apply_all(&self, u: &SpectralField) -> Vec<SpectralField> {
        (0..self.j()).map(|j| self.apply(u, j)).collect()
    }

    /// `Σ_j |G_j(u)|_H²`.
    pub fn hs_norm_sq(&self, u: &SpectralField) -> f64 {
        if self.is_off() {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Constant => {
                let mut per_dir = [0.0; 3];
                for (j, c) in self.amps.iter().enumerate() {
                    per_dir[self.direction(j)] += c * c;
                }
                let sup = u.support();
                let cu = u.coeffs();
                let mut acc = 0.0;
                for p in 0..sup.len() {
                    let k = sup.k(p);
                    let w = per_dir[0] * k[0] * k[0] + per_dir[1] * k[1] * k[1] + per_dir[2] * k[2] * k[2];
                    if w != 0.0 {
                        acc += w * (0..3).map(|c| cu[c][p].norm_sqr()).sum::<f64>();
                    }
                }
                acc * u.grid().volume()
            }
            NoiseKind::Banded { .. } => self.apply_all(u).iter().map(|f| f.h_sq()).sum(),
        }
    }

    /// `Σ_j ‖G_j(u)‖_V²`.
    pub fn hs_norm_sq_v(&self, u: &SpectralField) -> f64 {
        self.apply_all(u).iter().map(|f| f.h_sq() + f.grad_sq()).sum()
    }

    /// `Σ_j ⟨u, G_j(u)⟩ w_j`.
    pub fn skew_pairing(&self, u: &SpectralField, w: &[f64]) -> f64 {
        if self.is_off() {
            return 0.0;
        }
        u.inner(&self.apply_weighted(u, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid() -> std::sync::Arc<Grid> {
        Grid::new(16, 2.0 * PI).unwrap()
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(NoiseModel::constant(0, 0.1).is_err());
        assert!(NoiseModel::constant(4, 0.3).is_err());
        assert!(NoiseModel::new(NoiseKind::Banded { beta: -1.0, band: 1 }, 4, 0.1).is_err());
        let nm = NoiseModel::constant(4, 0.25).unwrap();
        assert!((nm.bound_check() - 0.25).abs() < 1e-15);
        let b = NoiseModel::new(NoiseKind::Banded { beta: 0.5, band: 1 }, 4, 0.25).unwrap();
        assert!((b.bound_check() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_symbol_on_single_mode() {
        let g = grid();
        let nm = NoiseModel::constant(3, 0.25).unwrap();
        let one = C64::new(1.0, 0.0);
        let z = C64::default();
        let u = SpectralField::single_mode(&g, [0, 2, 0], [one, z, z]);
        let idx = g.index_of([0, 2, 0]).unwrap();
        let c = (0.25f64 / 3.0).sqrt();
        // σ_1 = c e_1 sees k_1 = 2
        let g1 = nm.apply(&u, 1);
        assert!((g1.get(0, idx) - C64::new(0.0, 2.0 * c)).norm() < 1e-14);
        // σ_0 = c e_0 is orthogonal to k
        assert_eq!(nm.apply(&u, 0).h_sq(), 0.0);
    }

    #[test]
    fn banded_matches_physical_product() {
        let g = grid();
        let nm = NoiseModel::new(NoiseKind::Banded { beta: 0.7, band: 1 }, 4, 0.2).unwrap();
        let u = SpectralField::random(&g, 4.0, &mut ChaCha8Rng::seed_from_u64(2));
        let grad = u.gradient().to_physical(&g);
        for j in 0..4 {
            let s = nm.sigma_physical(j, &g);
            let d = nm.direction(j);
            let vals = [0, 1, 2].map(|c| {
                (0..g.len())
                    .map(|x| s.values()[d][x] * grad[d][c][x])
                    .collect::<Vec<_>>()
            });
            let oracle = PhysicalField::new(&g, vals)
                .to_spectral()
                .leray_project()
                .project_ball(4.0);
            let got = nm.apply(&u, j);
            assert!(got.sub(&oracle).h_sq().sqrt() <= 1e-12 * oracle.h_sq().sqrt());
            assert!(got.divergence_defect() < 1e-12);
        }
    }

    #[test]
    fn quarter_gradient_bound_and_skewness() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for nm in [
            NoiseModel::constant(4, 0.25).unwrap(),
            NoiseModel::new(NoiseKind::Banded { beta: 0.5, band: 1 }, 4, 0.25).unwrap(),
        ] {
            for _ in 0..5 {
                let u = SpectralField::random(&g, 4.0, &mut rng);
                assert!(nm.hs_norm_sq(&u) <= 0.25 * u.grad_sq() * (1.0 + 1e-12));
                let lhs = nm.hs_norm_sq_v(&u);
                let rhs = 0.5 * u.lap_sq() + nm.c_sigma(g.length()) * u.grad_sq();
                assert!(lhs <= rhs);
            }
        }
        let nm = NoiseModel::constant(4, 0.25).unwrap();
        let u = SpectralField::random(&g, 5.0, &mut rng);
        let p = nm.skew_pairing(&u, &[0.3, -1.0, 2.0, 0.5]);
        assert!(p.abs() < 1e-12 * u.h_sq().sqrt() * u.grad_sq().sqrt());
    }

    #[test]
    fn weighted_sum_is_linear() {
        let g = grid();
        let u = SpectralField::random(&g, 4.0, &mut ChaCha8Rng::seed_from_u64(3));
        let nm = NoiseModel::new(NoiseKind::Banded { beta: 0.3, band: 2 }, 4, 0.25).unwrap();
        let w = [0.1, -0.4, 0.7, 1.3];
        let combined = nm.apply_weighted(&u, &w);
        let mut sum = SpectralField::zeros(&g);
        for (j, f) in nm.apply_all(&u).iter().enumerate() {
            sum.axpy(w[j], f);
        }
        assert!(combined.sub(&sum).h_sq().sqrt() < 1e-12 * combined.h_sq().sqrt());
    }
}
