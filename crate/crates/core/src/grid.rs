//! Periodic collocation grid on the box `[0, L)^3` and its 3D FFT.
//!
//! Spectral coefficients use the convention
//! `u(x) = sum_k û(k) exp(i k·x)`, so the forward transform carries the
//! `1/M^3` factor and the inverse transform is a plain sum. Flat indices are
//! row-major `(i0 * M + i1) * M + i2`; axis 2 is contiguous.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Collocation grid plus precomputed wavenumber tables and FFT plans.
pub struct Grid {
    m: usize,
    length: f64,
    freq: Vec<i64>,
    /// Per flat index: wavevector, derivative wavevector (Nyquist zeroed), |k|^2, |z|^2.
    kvec: Vec<[f64; 3]>,
    kder: Vec<[f64; 3]>,
    ksq: Vec<f64>,
    zsq: Vec<i64>,
    neg: Vec<usize>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    supports: Mutex<HashMap<i64, Arc<Support>>>,
}

/// The modes of a ball `|z|² <= key` in integer units, in ascending flat-index
/// order, with per-mode tables. Spectral fields store one coefficient per
/// entry.
#[derive(Debug)]
pub struct Support {
    key: i64,
    prune: Option<i64>,
    idx: Vec<usize>,
    pos: Vec<u32>,
    neg: Vec<usize>,
    kder: Vec<[f64; 3]>,
    ksq: Vec<f64>,
}

const ABSENT: u32 = u32::MAX;

impl Support {
    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    /// Largest `|z|²` retained.
    pub fn key(&self) -> i64 {
        self.key
    }

    /// Key for pruned transforms; `None` for the full grid.
    pub fn prune_key(&self) -> Option<i64> {
        self.prune
    }

    /// Flat grid indices of the retained modes.
    pub fn indices(&self) -> &[usize] {
        &self.idx
    }

    /// Position of flat grid index `idx`, if retained.
    #[inline]
    pub fn position(&self, idx: usize) -> Option<usize> {
        match self.pos[idx] {
            ABSENT => None,
            p => Some(p as usize),
        }
    }

    /// Position of the mode `-k`.
    #[inline]
    pub fn negated(&self, p: usize) -> usize {
        self.neg[p]
    }

    /// Derivative wavevector (Nyquist zeroed) of position `p`.
    #[inline]
    pub fn k(&self, p: usize) -> [f64; 3] {
        self.kder[p]
    }

    #[inline]
    pub fn k_squared(&self, p: usize) -> f64 {
        self.ksq[p]
    }

    pub fn k_squared_table(&self) -> &[f64] {
        &self.ksq
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("m", &self.m)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.length == other.length
    }
}

impl Grid {
    pub fn new(m: usize, length: f64) -> Result<Arc<Self>> {
        if m < 8 || m % 2 != 0 {
            return Err(Error::Range {
                key: "grid.M".into(),
                msg: format!("must be even and >= 8, got {m}"),
            });
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Range {
                key: "grid.L".into(),
                msg: format!("must be positive, got {length}"),
            });
        }
        let freq: Vec<i64> = (0..m)
            .map(|i| if i < m / 2 { i as i64 } else { i as i64 - m as i64 })
            .collect();
        let base = 2.0 * PI / length;
        let nyq = -(m as i64) / 2;
        let n3 = m * m * m;
        let mut kvec = Vec::with_capacity(n3);
        let mut kder = Vec::with_capacity(n3);
        let mut ksq = Vec::with_capacity(n3);
        let mut zsq = Vec::with_capacity(n3);
        let mut neg = Vec::with_capacity(n3);
        for i0 in 0..m {
            for i1 in 0..m {
                for i2 in 0..m {
                    let z = [freq[i0], freq[i1], freq[i2]];
                    let k = [base * z[0] as f64, base * z[1] as f64, base * z[2] as f64];
                    let d = [0, 1, 2].map(|a| if z[a] == nyq { 0.0 } else { k[a] });
                    kvec.push(k);
                    kder.push(d);
                    ksq.push(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
                    zsq.push(z[0] * z[0] + z[1] * z[1] + z[2] * z[2]);
                    let n = |i: usize| (m - i) % m;
                    neg.push((n(i0) * m + n(i1)) * m + n(i2));
                }
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        Ok(Arc::new(Grid {
            m,
            length,
            freq,
            kvec,
            kder,
            ksq,
            zsq,
            neg,
            fwd,
            inv,
            supports: Mutex::new(HashMap::new()),
        }))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of collocation points, `M^3`.
    pub fn len(&self) -> usize {
        self.m * self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Box volume `L^3`.
    pub fn volume(&self) -> f64 {
        self.length.powi(3)
    }

    /// Quadrature weight of one collocation cell, `(L/M)^3`.
    pub fn cell_volume(&self) -> f64 {
        (self.length / self.m as f64).powi(3)
    }

    /// Fundamental wavenumber `2π/L`.
    pub fn base_wavenumber(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Integer frequencies along one axis in FFT order.
    pub fn frequencies(&self) -> &[i64] {
        &self.freq
    }

    pub fn index(&self, i0: usize, i1: usize, i2: usize) -> usize {
        (i0 * self.m + i1) * self.m + i2
    }

    /// Flat index of integer wavevector `z` (each component in `[-M/2, M/2)`).
    pub fn index_of(&self, z: [i64; 3]) -> Option<usize> {
        let m = self.m as i64;
        let mut idx = 0usize;
        for &c in &z {
            if c < -m / 2 || c >= m / 2 {
                return None;
            }
            idx = idx * self.m + c.rem_euclid(m) as usize;
        }
        Some(idx)
    }

    pub fn integer_wavevector(&self, idx: usize) -> [i64; 3] {
        let m = self.m;
        [
            self.freq[idx / (m * m)],
            self.freq[(idx / m) % m],
            self.freq[idx % m],
        ]
    }

    /// Index of `z(idx) + by·e_axis`, or `None` when that leaves the grid.
    pub fn shifted(&self, idx: usize, axis: usize, by: i64) -> Option<usize> {
        let mut z = self.integer_wavevector(idx);
        z[axis] += by;
        self.index_of(z)
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        self.kvec[idx]
    }

    /// Wavevector used for odd derivatives: the Nyquist component is zeroed.
    pub fn derivative_wavevector(&self, idx: usize) -> [f64; 3] {
        self.kder[idx]
    }

    pub fn k_squared(&self, idx: usize) -> f64 {
        self.ksq[idx]
    }

    pub fn k_squared_table(&self) -> &[f64] {
        &self.ksq
    }

    /// Index of the mode `-k`.
    pub fn negated(&self, idx: usize) -> usize {
        self.neg[idx]
    }

    /// Largest `|z|²` inside the closed ball `|k| <= radius`; the full grid
    /// for an infinite radius.
    pub fn ball_key(&self, radius: f64) -> i64 {
        let full = self.full_key();
        if !radius.is_finite() {
            return full;
        }
        let r = radius.max(0.0) / self.base_wavenumber();
        let key = (r * r * (1.0 + 1e-12)).floor();
        if key >= full as f64 {
            full
        } else {
            key as i64
        }
    }

    fn full_key(&self) -> i64 {
        let h = self.m as i64 / 2;
        3 * h * h
    }

    /// Largest `|z|²` inside the 2/3-rule sphere `|z| < M/3`.
    pub fn dealias_key(&self) -> i64 {
        let m2 = (self.m * self.m) as i64;
        (m2 - 1) / 9
    }

    /// Whether mode `idx` lies in the closed ball `|k| <= radius` (physical units).
    pub fn in_ball(&self, idx: usize, radius: f64) -> bool {
        self.zsq[idx] <= self.ball_key(radius)
    }

    /// Shared support table of the ball `|k| <= radius`.
    pub fn support(&self, radius: f64) -> Arc<Support> {
        self.support_for_key(self.ball_key(radius))
    }

    pub fn full_support(&self) -> Arc<Support> {
        self.support_for_key(self.full_key())
    }

    pub fn support_for_key(&self, key: i64) -> Arc<Support> {
        let key = key.min(self.full_key());
        let mut cache = self.supports.lock().expect("support cache poisoned");
        cache
            .entry(key)
            .or_insert_with(|| Arc::new(self.build_support(key)))
            .clone()
    }

    fn build_support(&self, key: i64) -> Support {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.zsq[i] <= key).collect();
        let mut pos = vec![ABSENT; self.len()];
        for (p, &i) in idx.iter().enumerate() {
            pos[i] = p as u32;
        }
        let neg = idx.iter().map(|&i| pos[self.neg[i]] as usize).collect();
        let prune = (key < self.full_key()).then_some(key);
        Support {
            key,
            prune,
            kder: idx.iter().map(|&i| self.kder[i]).collect(),
            ksq: idx.iter().map(|&i| self.ksq[i]).collect(),
            idx,
            pos,
            neg,
        }
    }

    /// 2/3-rule spherical mask: integer wavevector with `|z| < M/3`.
    pub fn in_dealias_sphere(&self, idx: usize) -> bool {
        9 * self.zsq[idx] < (self.m * self.m) as i64
    }

    /// Largest retained radius of the 2/3-rule sphere in physical units.
    pub fn dealias_radius(&self) -> f64 {
        self.base_wavenumber() * self.m as f64 / 3.0
    }

    /// In-place forward 3D transform including the `1/M^3` factor.
    pub fn forward(&self, data: &mut [C64]) {
        self.forward_pruned(data, None);
    }

    /// Forward transform that only produces modes with `|z|² <= key`; rows and
    /// slabs entirely outside that ball come back zero.
    pub fn forward_pruned(&self, data: &mut [C64], key: Option<i64>) {
        self.transform(data, &self.fwd, true, key);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    /// In-place inverse 3D transform (plain sum over modes).
    pub fn inverse(&self, data: &mut [C64]) {
        self.inverse_pruned(data, None);
    }

    /// Inverse transform of data supported in `|z|² <= key`.
    pub fn inverse_pruned(&self, data: &mut [C64], key: Option<i64>) {
        self.transform(data, &self.inv, false, key);
    }

    fn transform(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>, forward: bool, key: Option<i64>) {
        let m = self.m;
        let mm = m * m;
        assert_eq!(data.len(), self.len(), "buffer length does not match grid");
        let row_kept = |i0: usize, i1: usize| match key {
            None => true,
            Some(k) => self.freq[i0].pow(2) + self.freq[i1].pow(2) <= k,
        };
        let slab_kept = |i0: usize| key.is_none_or(|k| self.freq[i0].pow(2) <= k);

        SCRATCH.with(|cell| {
            let mut guard = cell.borrow_mut();
            let (scratch, tmp) = &mut *guard;
            scratch.resize(plan.get_inplace_scratch_len(), C64::default());
            tmp.resize((BLOCK * m).max(mm), C64::default());

            let axis2 = |data: &mut [C64], scratch: &mut Vec<C64>| {
                for i0 in 0..m {
                    for i1 in 0..m {
                        let row = &mut data[(i0 * m + i1) * m..(i0 * m + i1 + 1) * m];
                        if row_kept(i0, i1) {
                            plan.process_with_scratch(row, scratch);
                        } else if forward {
                            row.fill(C64::default());
                        }
                    }
                }
            };
            let axis1 = |data: &mut [C64], scratch: &mut Vec<C64>, tmp: &mut Vec<C64>| {
                for i0 in 0..m {
                    let slab = &mut data[i0 * mm..(i0 + 1) * mm];
                    if !slab_kept(i0) {
                        if forward {
                            slab.fill(C64::default());
                        }
                        continue;
                    }
                    for i1 in 0..m {
                        for i2 in 0..m {
                            tmp[i2 * m + i1] = slab[i1 * m + i2];
                        }
                    }
                    plan.process_with_scratch(&mut tmp[..mm], scratch);
                    for i1 in 0..m {
                        for i2 in 0..m {
                            slab[i1 * m + i2] = tmp[i2 * m + i1];
                        }
                    }
                }
            };
            let axis0 = |data: &mut [C64], scratch: &mut Vec<C64>, tmp: &mut Vec<C64>| {
                let mut j = 0;
                while j < mm {
                    let w = BLOCK.min(mm - j);
                    for i0 in 0..m {
                        let src = &data[i0 * mm + j..i0 * mm + j + w];
                        for (b, v) in src.iter().enumerate() {
                            tmp[b * m + i0] = *v;
                        }
                    }
                    plan.process_with_scratch(&mut tmp[..w * m], scratch);
                    for i0 in 0..m {
                        let dst = &mut data[i0 * mm + j..i0 * mm + j + w];
                        for (b, v) in dst.iter_mut().enumerate() {
                            *v = tmp[b * m + i0];
                        }
                    }
                    j += w;
                }
            };

            if forward {
                axis0(data, scratch, tmp);
                axis1(data, scratch, tmp);
                axis2(data, scratch);
            } else {
                axis2(data, scratch);
                axis1(data, scratch, tmp);
                axis0(data, scratch, tmp);
            }
        });
    }

    /// Inverse transform of two Hermitian spectra at once; returns their real
    /// physical-space values.
    pub fn to_physical_pair(&self, a: &[C64], b: Option<&[C64]>) -> (Vec<f64>, Vec<f64>) {
        self.to_physical_pair_pruned(a, b, None)
    }

    /// As [`Grid::to_physical_pair`] for spectra supported in `|z|² <= key`.
    pub fn to_physical_pair_pruned(&self, a: &[C64], b: Option<&[C64]>, key: Option<i64>) -> (Vec<f64>, Vec<f64>) {
        let i = C64::new(0.0, 1.0);
        let mut buf: Vec<C64> = match b {
            Some(b) => a.iter().zip(b).map(|(x, y)| x + i * y).collect(),
            None => a.to_vec(),
        };
        self.inverse_pruned(&mut buf, key);
        let re = buf.iter().map(|z| z.re).collect();
        let im = if b.is_some() {
            buf.iter().map(|z| z.im).collect()
        } else {
            Vec::new()
        };
        (re, im)
    }

    /// Forward transform of two real fields at once, separated by Hermitian
    /// symmetry.
    pub fn to_spectral_pair(&self, p: &[f64], q: Option<&[f64]>) -> (Vec<C64>, Vec<C64>) {
        self.to_spectral_pair_pruned(p, q, None)
    }

    /// As [`Grid::to_spectral_pair`], producing only modes with `|z|² <= key`
    /// (rows and slabs outside that ball come back zero).
    pub fn to_spectral_pair_pruned(&self, p: &[f64], q: Option<&[f64]>, key: Option<i64>) -> (Vec<C64>, Vec<C64>) {
        let mut buf: Vec<C64> = match q {
            Some(q) => p.iter().zip(q).map(|(&x, &y)| C64::new(x, y)).collect(),
            None => p.iter().map(|&x| C64::new(x, 0.0)).collect(),
        };
        self.forward_pruned(&mut buf, key);
        if q.is_none() {
            return (buf, Vec::new());
        }
        let n3 = self.len();
        let mut pa = vec![C64::default(); n3];
        let mut qa = vec![C64::default(); n3];
        for idx in 0..n3 {
            let z = buf[idx];
            if z == C64::default() && buf[self.neg[idx]] == C64::default() {
                continue;
            }
            let zn = buf[self.neg[idx]].conj();
            pa[idx] = (z + zn) * 0.5;
            // (z - zn) / (2i)
            let d = (z - zn) * 0.5;
            qa[idx] = C64::new(d.im, -d.re);
        }
        (pa, qa)
    }
}

/// Columns gathered per batch along the slowest axis.
const BLOCK: usize = 64;

thread_local! {
    static SCRATCH: std::cell::RefCell<(Vec<C64>, Vec<C64>)> = const { std::cell::RefCell::new((Vec::new(), Vec::new())) };
}
