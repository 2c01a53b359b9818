//! Vector fields on the periodic box, in Fourier and physical representation,
//! together with the ball projection, the Leray projector, the Stokes
//! operator and the norms used throughout the crate.
//!
//! A [`SpectralField`] stores one coefficient per mode of its ball support
//! (see [`Support`]); modes outside the ball are zero by construction.
//!
//! All norms are true integrals over the box: `|u|_H^2 = ∫|u|^2 dx =
//! L^3 Σ_k |û(k)|^2`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::{Grid, Support, C64};

/// Which norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    /// L^2 norm.
    H,
    /// H^1 norm, `|u|^2 + |∇u|^2`.
    V,
    /// Graph norm of the Stokes operator, `|u|^2 + |Au|^2` with `A = -Δ`.
    DA,
    /// L^4 norm by quadrature on the collocation grid.
    L4,
    /// Sobolev norm with weight `(1 + |k|^2)^γ`.
    Sobolev(f64),
}

/// Fourier coefficients of a real 3-component field supported in the ball
/// `|k| <= cutoff` (`cutoff = ∞` for the whole grid).
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<Grid>,
    support: Arc<Support>,
    coeffs: [Vec<C64>; 3],
    cutoff: f64,
}

/// Real-space samples of a 3-component field on the collocation grid.
#[derive(Clone, Debug)]
pub struct PhysicalField {
    grid: Arc<Grid>,
    values: [Vec<f64>; 3],
}

/// Spectral derivatives `d[a][i] = ∂_a u_i` on the support of `u`.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub support: Arc<Support>,
    pub d: [[Vec<C64>; 3]; 3],
}

const I: C64 = C64::new(0.0, 1.0);

/// Inverse transform of one or two Hermitian spectra stored on `support`.
pub(crate) fn physical_pair(grid: &Grid, support: &Support, a: &[C64], b: Option<&[C64]>) -> (Vec<f64>, Vec<f64>) {
    let mut buf = vec![C64::default(); grid.len()];
    match b {
        Some(b) => {
            for (p, &idx) in support.indices().iter().enumerate() {
                buf[idx] = a[p] + I * b[p];
            }
        }
        None => {
            for (p, &idx) in support.indices().iter().enumerate() {
                buf[idx] = a[p];
            }
        }
    }
    grid.inverse_pruned(&mut buf, support.prune_key());
    let re = buf.iter().map(|z| z.re).collect();
    let im = if b.is_some() {
        buf.iter().map(|z| z.im).collect()
    } else {
        Vec::new()
    };
    (re, im)
}

/// Forward transform of one or two real fields, keeping the modes of `support`.
pub(crate) fn spectral_pair(grid: &Grid, support: &Support, p: &[f64], q: Option<&[f64]>) -> (Vec<C64>, Vec<C64>) {
    let mut buf: Vec<C64> = match q {
        Some(q) => p.iter().zip(q).map(|(&x, &y)| C64::new(x, y)).collect(),
        None => p.iter().map(|&x| C64::new(x, 0.0)).collect(),
    };
    grid.forward_pruned(&mut buf, support.prune_key());
    let idx = support.indices();
    if q.is_none() {
        return (idx.iter().map(|&i| buf[i]).collect(), Vec::new());
    }
    let mut pa = Vec::with_capacity(idx.len());
    let mut qa = Vec::with_capacity(idx.len());
    for &i in idx {
        let z = buf[i];
        let zn = buf[grid.negated(i)].conj();
        pa.push((z + zn) * 0.5);
        // (z - zn) / (2i)
        let d = (z - zn) * 0.5;
        qa.push(C64::new(d.im, -d.re));
    }
    (pa, qa)
}

impl SpectralField {
    /// The zero field on the ball of radius `cutoff`.
    pub fn zeros_in(grid: &Arc<Grid>, cutoff: f64) -> Self {
        let support = grid.support(cutoff);
        let n = support.len();
        SpectralField {
            grid: grid.clone(),
            support,
            coeffs: [vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n]],
            cutoff,
        }
    }

    /// The zero field on the trivial ball `{0}`.
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::zeros_in(grid, 0.0)
    }

    /// Gather full-grid coefficient arrays (FFT order) onto the ball of
    /// radius `cutoff`.
    pub fn from_full(grid: &Arc<Grid>, full: &[Vec<C64>; 3], cutoff: f64) -> Self {
        for c in full {
            assert_eq!(c.len(), grid.len(), "coefficient array does not match grid");
        }
        let mut f = Self::zeros_in(grid, cutoff);
        for c in 0..3 {
            for (p, &idx) in f.support.indices().iter().enumerate() {
                f.coeffs[c][p] = full[c][idx];
            }
        }
        f
    }

    /// Scatter onto full-grid arrays in FFT order.
    pub fn to_full(&self) -> [Vec<C64>; 3] {
        [0, 1, 2].map(|c| {
            let mut v = vec![C64::default(); self.grid.len()];
            for (p, &idx) in self.support.indices().iter().enumerate() {
                v[idx] = self.coeffs[c][p];
            }
            v
        })
    }

    /// Real field `amp e^{i k·x} + c.c.` for the integer wavevector `z`.
    pub fn single_mode(grid: &Arc<Grid>, z: [i64; 3], amp: [C64; 3]) -> Self {
        let idx = grid.index_of(z).expect("mode outside the grid");
        let mut f = Self::zeros_in(grid, grid.k_squared(idx).sqrt());
        let nidx = grid.negated(idx);
        for c in 0..3 {
            if idx == nidx {
                f.set(c, idx, C64::new(amp[c].re, 0.0));
            } else {
                f.set(c, idx, amp[c]);
                f.set(c, nidx, amp[c].conj());
            }
        }
        f
    }

    /// Random divergence-free, mean-free field supported in the ball of
    /// radius `cutoff`. Modes are drawn in a fixed order over integer
    /// wavevectors, so the same seed gives the same field on any grid that
    /// contains the ball.
    pub fn random<R: Rng + ?Sized>(grid: &Arc<Grid>, cutoff: f64, rng: &mut R) -> Self {
        let mut f = Self::zeros_in(grid, cutoff);
        let base = grid.base_wavenumber();
        let zmax = (cutoff / base).floor().min(grid.m() as f64) as i64;
        let r2 = (cutoff / base).powi(2) * (1.0 + 1e-12);
        for z0 in -zmax..=zmax {
            for z1 in -zmax..=zmax {
                for z2 in -zmax..=zmax {
                    if ((z0 * z0 + z1 * z1 + z2 * z2) as f64) > r2 {
                        continue;
                    }
                    let draw = [0, 1, 2].map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
                    if let Some(p) = grid.index_of([z0, z1, z2]).and_then(|i| f.support.position(i)) {
                        for c in 0..3 {
                            f.coeffs[c][p] = draw[c];
                        }
                    }
                }
            }
        }
        f.remove_mean();
        f.symmetrize();
        f.leray_in_place();
        f
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn support(&self) -> &Arc<Support> {
        &self.support
    }

    /// Coefficients in support order, see [`Support::indices`].
    pub fn coeffs(&self) -> &[Vec<C64>; 3] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Vec<C64>; 3] {
        &mut self.coeffs
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Coefficient of component `c` at flat grid index `idx`; zero off the ball.
    pub fn get(&self, c: usize, idx: usize) -> C64 {
        self.support
            .position(idx)
            .map_or(C64::default(), |p| self.coeffs[c][p])
    }

    /// Set the coefficient at flat grid index `idx`; panics off the ball.
    pub fn set(&mut self, c: usize, idx: usize, v: C64) {
        let p = self.support.position(idx).expect("mode outside the field's ball");
        self.coeffs[c][p] = v;
    }

    /// Same coefficients on the ball of radius `cutoff`: modes outside it are
    /// dropped, new modes are zero.
    fn rebased(&self, cutoff: f64) -> Self {
        let support = self.grid.support(cutoff);
        if Arc::ptr_eq(&support, &self.support) {
            let mut out = self.clone();
            out.cutoff = cutoff;
            return out;
        }
        let mut out = Self::zeros_in(&self.grid, cutoff);
        let small = if support.len() <= self.support.len() {
            &support
        } else {
            &self.support
        };
        for &idx in small.indices() {
            if let (Some(a), Some(b)) = (self.support.position(idx), out.support.position(idx)) {
                for c in 0..3 {
                    out.coeffs[c][b] = self.coeffs[c][a];
                }
            }
        }
        out
    }

    /// `P_n`: keep modes with `|k| <= n`, zero the rest.
    pub fn project_ball(&self, n: f64) -> Self {
        assert!(n >= 0.0, "ball radius must be nonnegative");
        self.rebased(n)
    }

    /// Spherical 2/3-rule truncation.
    pub fn dealias(&self) -> Self {
        let mut out = self.clone();
        for (p, &idx) in self.support.indices().iter().enumerate() {
            if !self.grid.in_dealias_sphere(idx) {
                for c in 0..3 {
                    out.coeffs[c][p] = C64::default();
                }
            }
        }
        out.cutoff = self.cutoff.min(self.grid.dealias_radius());
        out
    }

    /// Leray projection `û ↦ (I - k kᵀ/|k|^2) û`; the mean mode passes through.
    pub fn leray_project(&self) -> Self {
        let mut out = self.clone();
        out.leray_in_place();
        out
    }

    pub(crate) fn leray_in_place(&mut self) {
        let s = &self.support;
        let [c0, c1, c2] = &mut self.coeffs;
        for p in 0..s.len() {
            let idx = s.indices()[p];
            if idx == 0 {
                continue;
            }
            let k = self.grid.wavevector(idx);
            let f = (c0[p] * k[0] + c1[p] * k[1] + c2[p] * k[2]) / self.grid.k_squared(idx);
            c0[p] -= f * k[0];
            c1[p] -= f * k[1];
            c2[p] -= f * k[2];
        }
    }

    /// Multiply every mode by `α + ν|k|^2`.
    pub fn stokes_apply(&self, nu: f64, alpha: f64) -> Self {
        let mut out = self.clone();
        let ksq = self.support.k_squared_table();
        for c in out.coeffs.iter_mut() {
            for (x, &k) in c.iter_mut().zip(ksq) {
                *x *= alpha + nu * k;
            }
        }
        out
    }

    /// `L^3 Σ_k w(|k|^2) |û(k)|^2`.
    pub fn weighted_sq(&self, w: impl Fn(f64) -> f64) -> f64 {
        let ksq = self.support.k_squared_table();
        let [c0, c1, c2] = &self.coeffs;
        let mut acc = 0.0;
        for p in 0..ksq.len() {
            let a = c0[p].norm_sqr() + c1[p].norm_sqr() + c2[p].norm_sqr();
            if a != 0.0 {
                acc += w(ksq[p]) * a;
            }
        }
        acc * self.grid.volume()
    }

    /// `|u|_H^2`.
    pub fn h_sq(&self) -> f64 {
        self.weighted_sq(|_| 1.0)
    }

    /// `|∇u|_{L^2}^2`.
    pub fn grad_sq(&self) -> f64 {
        self.weighted_sq(|k| k)
    }

    /// `|Δu|_{L^2}^2`, i.e. `|Au|^2` for `ν = 1`.
    pub fn lap_sq(&self) -> f64 {
        self.weighted_sq(|k| k * k)
    }

    /// Squared norm; for `L4` this is `‖u‖_{L^4}^2`.
    pub fn norm_sq(&self, which: Norm) -> f64 {
        match which {
            Norm::H => self.h_sq(),
            Norm::V => self.weighted_sq(|k| 1.0 + k),
            Norm::DA => self.weighted_sq(|k| 1.0 + k * k),
            Norm::Sobolev(g) => self.weighted_sq(|k| (1.0 + k).powf(g)),
            Norm::L4 => self.to_physical().l4_pow4().sqrt(),
        }
    }

    pub fn norm(&self, which: Norm) -> f64 {
        self.norm_sq(which).sqrt()
    }

    /// `L^3 Σ w(|k|^2) Re(û · conj v̂)` over the common modes.
    fn pairing(&self, other: &SpectralField, w: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        if Arc::ptr_eq(&self.support, &other.support) {
            let ksq = self.support.k_squared_table();
            for c in 0..3 {
                for (p, (a, b)) in self.coeffs[c].iter().zip(&other.coeffs[c]).enumerate() {
                    acc += w(ksq[p]) * (a.re * b.re + a.im * b.im);
                }
            }
        } else {
            let (small, big) = if self.support.len() <= other.support.len() {
                (self, other)
            } else {
                (other, self)
            };
            for (p, &idx) in small.support.indices().iter().enumerate() {
                if let Some(q) = big.support.position(idx) {
                    let wk = w(small.support.k_squared(p));
                    for c in 0..3 {
                        let (a, b) = (small.coeffs[c][p], big.coeffs[c][q]);
                        acc += wk * (a.re * b.re + a.im * b.im);
                    }
                }
            }
        }
        acc * self.grid.volume()
    }

    /// `⟨u, v⟩_H`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.pairing(other, |_| 1.0)
    }

    /// `((u, v)) = ⟨∇u, ∇v⟩_{L^2}`.
    pub fn inner_grad(&self, other: &SpectralField) -> f64 {
        self.pairing(other, |k| k)
    }

    pub fn gradient(&self) -> Gradient {
        let s = &self.support;
        let mut d: [[Vec<C64>; 3]; 3] = Default::default();
        for (a, row) in d.iter_mut().enumerate() {
            for (c, out) in row.iter_mut().enumerate() {
                *out = (0..s.len()).map(|p| I * s.k(p)[a] * self.coeffs[c][p]).collect();
            }
        }
        Gradient {
            support: s.clone(),
            d,
        }
    }

    /// Divergence coefficients in support order.
    pub fn divergence(&self) -> Vec<C64> {
        let s = &self.support;
        let [c0, c1, c2] = &self.coeffs;
        (0..s.len())
            .map(|p| {
                let k = s.k(p);
                I * (k[0] * c0[p] + k[1] * c1[p] + k[2] * c2[p])
            })
            .collect()
    }

    pub fn to_physical(&self) -> PhysicalField {
        let g = &self.grid;
        let (v0, v1) = physical_pair(g, &self.support, &self.coeffs[0], Some(&self.coeffs[1]));
        let (v2, _) = physical_pair(g, &self.support, &self.coeffs[2], None);
        PhysicalField {
            grid: g.clone(),
            values: [v0, v1, v2],
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.coeffs.iter_mut() {
            for v in c.iter_mut() {
                *v *= a;
            }
        }
    }

    /// `self += a * other`; the result lives on the larger of the two balls.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        if other.support.len() > self.support.len() {
            *self = self.rebased(other.cutoff);
        }
        self.cutoff = self.cutoff.max(other.cutoff);
        if Arc::ptr_eq(&self.support, &other.support) {
            for c in 0..3 {
                for (x, y) in self.coeffs[c].iter_mut().zip(&other.coeffs[c]) {
                    *x += a * y;
                }
            }
        } else {
            for (q, &idx) in other.support.indices().iter().enumerate() {
                let p = self.support.position(idx).expect("balls are nested");
                for c in 0..3 {
                    self.coeffs[c][p] += a * other.coeffs[c][q];
                }
            }
        }
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    /// Rescale so that `norm(which) == target`; a zero field stays zero.
    pub fn normalized(&self, which: Norm, target: f64) -> Self {
        let cur = self.norm(which);
        if cur == 0.0 {
            return self.clone();
        }
        self.scaled(target / cur)
    }

    /// Enforce exact Hermitian symmetry `û(-k) = conj û(k)`.
    pub fn symmetrize(&mut self) {
        let s = self.support.clone();
        for c in 0..3 {
            let src = self.coeffs[c].clone();
            for p in 0..s.len() {
                self.coeffs[c][p] = (src[p] + src[s.negated(p)].conj()) * 0.5;
            }
        }
    }

    /// Largest `|û(-k) - conj û(k)|` relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let s = &self.support;
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for c in 0..3 {
            for p in 0..s.len() {
                let a = self.coeffs[c][p];
                num = num.max((self.coeffs[c][s.negated(p)] - a.conj()).norm());
                den = den.max(a.norm());
            }
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// `|div u|_{L^2} / |∇u|_{L^2}`; zero for a constant field.
    pub fn divergence_defect(&self) -> f64 {
        let num: f64 = self.divergence().iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.volume();
        let den = self.grad_sq();
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    /// Largest coefficient magnitude outside the ball of radius `n`.
    pub fn max_outside_ball(&self, n: f64) -> f64 {
        let mut m: f64 = 0.0;
        for (p, &idx) in self.support.indices().iter().enumerate() {
            if !self.grid.in_ball(idx, n) {
                for c in 0..3 {
                    m = m.max(self.coeffs[c][p].norm());
                }
            }
        }
        m
    }

    /// Zero the `k = 0` mode.
    pub fn remove_mean(&mut self) {
        if let Some(p) = self.support.position(0) {
            for c in 0..3 {
                self.coeffs[c][p] = C64::default();
            }
        }
    }

    /// The `k = 0` coefficients.
    pub fn mean(&self) -> [C64; 3] {
        [0, 1, 2].map(|c| self.get(c, 0))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Shell-summed kinetic energy `E(κ) = ½ Σ_{shell κ} L^3 |û|^2`, shells of
    /// width `2π/L` centred on integer multiples of the base wavenumber.
    pub fn energy_spectrum(&self) -> Vec<(f64, f64)> {
        let g = &self.grid;
        let base = g.base_wavenumber();
        let shells = (g.m() as f64 * 3f64.sqrt() / 2.0).ceil() as usize + 1;
        let mut e = vec![0.0; shells];
        for p in 0..self.support.len() {
            let s = (self.support.k_squared(p).sqrt() / base).round() as usize;
            let a: f64 = (0..3).map(|c| self.coeffs[c][p].norm_sqr()).sum();
            e[s.min(shells - 1)] += 0.5 * a * g.volume();
        }
        e.into_iter()
            .enumerate()
            .map(|(s, v)| (s as f64 * base, v))
            .collect()
    }
}

impl Gradient {
    /// Physical-space values `[a][i] = ∂_a u_i(x)`.
    pub fn to_physical(&self, grid: &Grid) -> [[Vec<f64>; 3]; 3] {
        let flat: Vec<&Vec<C64>> = self.d.iter().flat_map(|r| r.iter()).collect();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(9);
        for pair in flat.chunks(2) {
            let (a, b) = physical_pair(grid, &self.support, pair[0], pair.get(1).map(|v| v.as_slice()));
            out.push(a);
            if pair.len() == 2 {
                out.push(b);
            }
        }
        let mut it = out.into_iter();
        let mut res: [[Vec<f64>; 3]; 3] = Default::default();
        for row in res.iter_mut() {
            for v in row.iter_mut() {
                *v = it.next().expect("nine components");
            }
        }
        res
    }
}

impl PhysicalField {
    pub fn new(grid: &Arc<Grid>, values: [Vec<f64>; 3]) -> Self {
        for v in &values {
            assert_eq!(v.len(), grid.len(), "value array does not match grid");
        }
        PhysicalField {
            grid: grid.clone(),
            values,
        }
    }

    /// Sample `f(x)` at the collocation points `x_a = L i_a / M`.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let m = grid.m();
        let h = grid.length() / m as f64;
        let mut values = [
            Vec::with_capacity(grid.len()),
            Vec::with_capacity(grid.len()),
            Vec::with_capacity(grid.len()),
        ];
        for i0 in 0..m {
            for i1 in 0..m {
                for i2 in 0..m {
                    let v = f([i0 as f64 * h, i1 as f64 * h, i2 as f64 * h]);
                    for c in 0..3 {
                        values[c].push(v[c]);
                    }
                }
            }
        }
        PhysicalField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Vec<f64>; 3] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<f64>; 3] {
        &mut self.values
    }

    /// All Fourier modes of the grid.
    pub fn to_spectral(&self) -> SpectralField {
        self.to_spectral_ball(f64::INFINITY)
    }

    /// Fourier modes with `|k| <= cutoff` only, i.e. `P_n` of the transform.
    pub fn to_spectral_ball(&self, cutoff: f64) -> SpectralField {
        let g = &self.grid;
        let support = g.support(cutoff);
        let (c0, c1) = spectral_pair(g, &support, &self.values[0], Some(&self.values[1]));
        let (c2, _) = spectral_pair(g, &support, &self.values[2], None);
        SpectralField {
            grid: g.clone(),
            support,
            coeffs: [c0, c1, c2],
            cutoff,
        }
    }

    /// Pointwise `|u(x)|^2`.
    pub fn magnitude_sq(&self) -> Vec<f64> {
        let [a, b, c] = &self.values;
        a.iter()
            .zip(b)
            .zip(c)
            .map(|((x, y), z)| x * x + y * y + z * z)
            .collect()
    }

    /// Quadrature of `|u|^2`.
    pub fn l2_sq(&self) -> f64 {
        self.magnitude_sq().iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Quadrature of `|u|^4`, i.e. `‖u‖_{L^4}^4`.
    pub fn l4_pow4(&self) -> f64 {
        self.magnitude_sq().iter().map(|r| r * r).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude_sq()
            .iter()
            .fold(0.0f64, |m, &r| m.max(r))
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}
