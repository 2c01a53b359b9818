use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tamed_nse::config::Config;
use tamed_nse::{Grid, Norm, SpectralField, TamingFunction};

fn grid() -> Arc<Grid> {
    Grid::new(12, 2.0 * PI).unwrap()
}

fn field(seed: u64, radius: f64) -> SpectralField {
    SpectralField::random(&grid(), radius, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ball_projection_is_idempotent_and_contracts(seed in any::<u64>(), n in 0.5f64..4.0) {
        let u = field(seed, 4.0);
        let p = u.project_ball(n);
        let pp = p.project_ball(n);
        prop_assert_eq!(p.to_full(), pp.to_full());
        prop_assert!(p.norm(Norm::V) <= u.norm(Norm::V) * (1.0 + 1e-14));
        prop_assert_eq!(p.max_outside_ball(n), 0.0);
    }

    #[test]
    fn leray_output_is_solenoidal_and_real(seed in any::<u64>()) {
        let u = field(seed, 3.5);
        let v = u.leray_project();
        prop_assert!(v.divergence_defect() <= 1e-12 * v.norm(Norm::V).max(1e-300));
        prop_assert!(v.hermitian_defect() <= 1e-14 * v.norm(Norm::H).max(1e-300));
        let vv = v.leray_project();
        prop_assert!(vv.sub(&v).norm(Norm::H) <= 1e-13 * v.norm(Norm::H).max(1e-300));
    }

    #[test]
    fn parseval_matches_quadrature(seed in any::<u64>()) {
        let u = field(seed, 3.0);
        let spectral = u.h_sq();
        let quad = u.to_physical().l2_sq();
        prop_assert!((spectral - quad).abs() <= 1e-10 * spectral);
    }

    #[test]
    fn taming_is_bounded_and_lipschitz(big_n in 0.0f64..50.0, r in 0.0f64..200.0, s in 0.0f64..200.0) {
        let g = TamingFunction::new(big_n).unwrap();
        let (gr, gs) = (g.g(r).unwrap(), g.g(s).unwrap());
        prop_assert!((0.0..=r).contains(&gr));
        prop_assert!((gr - gs).abs() <= 2.0 * (r - s).abs() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn config_print_parse_round_trip(
        m in prop::sample::select(vec![8usize, 12, 16, 24]),
        nu in 0.01f64..5.0,
        alpha in 0.0f64..3.0,
        big_n in 0.0f64..100.0,
        strength in 0.0f64..0.25,
        seed in any::<u64>(),
        paths in 1usize..300,
        stop in prop::option::of(0.1f64..100.0),
    ) {
        let c = Config {
            grid_m: m,
            n: m as f64 / 4.0,
            nu,
            alpha,
            taming_n: big_n,
            noise_strength: strength,
            seed,
            paths,
            r_stop: stop,
            ..Config::default()
        };
        prop_assert_eq!(Config::parse_str(&c.print()).unwrap(), c);
    }
}
