//! The taming function `g`, its derivative, and the companion `φ(r) = r - g(r)`.
//!
//! `g` vanishes below `N`, equals `r - N` above `N + 1`, and on the bridge
//! `[N, N + 1]` is the cubic Hermite interpolant `g(N + t) = 2t² - t³`.

use crate::error::{Error, Result};
use crate::field::PhysicalField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TamingFunction {
    n: f64,
}

impl TamingFunction {
    pub fn new(n: f64) -> Result<Self> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::range("taming.N", format!("must be positive, got {n}")));
        }
        Ok(TamingFunction { n })
    }

    pub fn threshold(&self) -> f64 {
        self.n
    }

    fn check(r: f64) -> Result<()> {
        if r.is_nan() || r < 0.0 {
            Err(Error::InvalidArgument(format!(
                "taming function evaluated at negative argument {r}"
            )))
        } else {
            Ok(())
        }
    }

    pub fn g(&self, r: f64) -> Result<f64> {
        Self::check(r)?;
        Ok(self.g_unchecked(r))
    }

    pub fn g_prime(&self, r: f64) -> Result<f64> {
        Self::check(r)?;
        Ok(self.g_prime_unchecked(r))
    }

    pub fn phi(&self, r: f64) -> Result<f64> {
        Self::check(r)?;
        Ok(r - self.g_unchecked(r))
    }

    /// `g` without the sign check, for hot loops over `|u|²`.
    #[inline]
    pub fn g_unchecked(&self, r: f64) -> f64 {
        let t = r - self.n;
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            t
        } else {
            t * t * (2.0 - t)
        }
    }

    #[inline]
    pub fn g_prime_unchecked(&self, r: f64) -> f64 {
        let t = r - self.n;
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            t * (4.0 - 3.0 * t)
        }
    }

    /// `sup_r |φ'(r) r| = N`, attained at `r = N` from the left.
    pub fn sup_phi_prime_r(&self) -> f64 {
        self.n
    }

    /// `sup_r φ(r) = N + 4/27`, attained at `r = N + 1/3`.
    pub fn sup_phi(&self) -> f64 {
        self.n + 4.0 / 27.0
    }

    /// Pointwise `g(|u(x)|²) u(x)`.
    pub fn tamed_term(&self, u: &PhysicalField) -> PhysicalField {
        let r = u.magnitude_sq();
        let mut out = u.clone();
        let vals = out.values_mut();
        for (j, &rj) in r.iter().enumerate() {
            let gj = self.g_unchecked(rj);
            for v in vals.iter_mut() {
                v[j] *= gj;
            }
        }
        out
    }
}

impl Default for TamingFunction {
    fn default() -> Self {
        TamingFunction { n: 10.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    #[test]
    fn branch_values() {
        let tf = TamingFunction::new(3.0).unwrap();
        assert_eq!(tf.g(3.0).unwrap(), 0.0);
        assert_eq!(tf.g(4.0).unwrap(), 1.0);
        assert_eq!(tf.g(0.0).unwrap(), 0.0);
        assert_eq!(tf.g(8.0).unwrap(), 5.0);
        assert_eq!(tf.g(3.5).unwrap(), 0.375);
        assert_eq!(tf.g_prime(3.0).unwrap(), 0.0);
        assert_eq!(tf.g_prime(4.0).unwrap(), 1.0);
        assert_eq!(tf.phi(3.0).unwrap(), 3.0);
        assert_eq!(tf.phi(5.0).unwrap(), 3.0);
        assert_eq!(tf.phi(3.5).unwrap(), 3.125);
    }

    #[test]
    fn negative_argument_rejected() {
        let tf = TamingFunction::default();
        assert!(tf.g(-1.0).is_err());
        assert!(tf.g_prime(-1e-300).is_err());
        assert!(tf.phi(f64::NAN).is_err());
        assert!(TamingFunction::new(0.0).is_err());
    }

    #[test]
    fn bridge_derivative_peaks_at_four_thirds() {
        let tf = TamingFunction::new(1.0).unwrap();
        let at = tf.g_prime(1.0 + 2.0 / 3.0).unwrap();
        assert!((at - 4.0 / 3.0).abs() < 1e-15);
        let max = (0..=10000)
            .map(|i| tf.g_prime(1.0 + i as f64 / 10000.0).unwrap())
            .fold(0.0, f64::max);
        assert!(max <= 4.0 / 3.0 + 1e-15);
    }

    #[test]
    fn c1_gluing() {
        let tf = TamingFunction::new(2.0).unwrap();
        for knot in [2.0, 3.0] {
            let h = 1e-7;
            let left = (tf.g(knot).unwrap() - tf.g(knot - h).unwrap()) / h;
            let right = (tf.g(knot + h).unwrap() - tf.g(knot).unwrap()) / h;
            assert!((left - right).abs() < 1e-6);
            let dl = tf.g_prime(knot - 1e-12).unwrap();
            let dr = tf.g_prime(knot + 1e-12).unwrap();
            assert!((dl - dr).abs() < 1e-10);
        }
    }

    #[test]
    fn phi_suprema_match_closed_forms() {
        let tf = TamingFunction::new(5.0).unwrap();
        let mut sup_phi: f64 = 0.0;
        let mut sup_pr: f64 = 0.0;
        for i in 0..=200_000 {
            let r = 8.0 * i as f64 / 200_000.0;
            sup_phi = sup_phi.max(tf.phi(r).unwrap());
            sup_pr = sup_pr.max(((1.0 - tf.g_prime(r).unwrap()) * r).abs());
        }
        assert!((sup_phi - tf.sup_phi()).abs() < 1e-8);
        assert!((sup_pr - tf.sup_phi_prime_r()).abs() < 1e-3);
        assert!(sup_pr <= tf.sup_phi_prime_r() + 1e-12);
    }

    #[test]
    fn tamed_term_branches() {
        let g = Grid::new(8, 1.0).unwrap();
        let tf = TamingFunction::new(4.0).unwrap();
        let small = PhysicalField::from_fn(&g, |x| [x[0].sin(), 0.5, 0.0]);
        assert!(tf.tamed_term(&small).max_abs() == 0.0);
        let c = [2.0, 2.0, 2.0f64.sqrt()]; // |c|² = 10 = N + 6
        let big = PhysicalField::from_fn(&g, |_| c);
        let t = tf.tamed_term(&big);
        for (comp, v) in t.values().iter().enumerate() {
            assert!(v.iter().all(|&x| (x - 6.0 * c[comp]).abs() < 1e-12));
        }
    }

    proptest! {
        #[test]
        fn bounded_by_argument(n in 0.01f64..50.0, r in 0.0f64..200.0) {
            let tf = TamingFunction::new(n).unwrap();
            let g = tf.g(r).unwrap();
            prop_assert!(g >= 0.0 && g <= r);
            let p = tf.phi(r).unwrap();
            prop_assert!(p >= 0.0 && p <= r.min(n + 1.0));
        }

        #[test]
        fn lipschitz_two(n in 0.01f64..50.0, r in 0.0f64..100.0, s in 0.0f64..100.0) {
            let tf = TamingFunction::new(n).unwrap();
            prop_assert!((tf.g(r).unwrap() - tf.g(s).unwrap()).abs() <= 2.0 * (r - s).abs() + 1e-12);
        }

        #[test]
        fn monotone(n in 0.01f64..50.0, r in 0.0f64..100.0, d in 0.0f64..5.0) {
            let tf = TamingFunction::new(n).unwrap();
            prop_assert!(tf.g(r + d).unwrap() >= tf.g(r).unwrap());
            let gp = tf.g_prime(r).unwrap();
            prop_assert!((0.0..=2.0).contains(&gp));
        }
    }
}
