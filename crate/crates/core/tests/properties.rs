use hypac_core::grid::{Grid, GridField, Stencil};
use hypac_core::manifold::{smooth_step, smooth_step_derivs, LayerVector, Manifold, ProjectOptions};
use hypac_core::model::{Damping, Potential};
use hypac_core::pde::lyapunov;
use hypac_core::model::ModelSpec;
use hypac_core::profile::ProfileSolver;
use proptest::prelude::*;
use proptest::test_runner::Config;

proptest! {
    #[test]
    fn smoothstep_is_monotone_and_odd_about_half(x in -1.2f64..1.2, y in -1.2f64..1.2) {
        let (a, b) = (smooth_step(x), smooth_step(y));
        prop_assert!((0.0..=1.0).contains(&a));
        if x < y { prop_assert!(a <= b); }
        prop_assert!((smooth_step(x) + smooth_step(-x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn smoothstep_derivative_matches_differences(x in -0.99f64..0.99) {
        let d = 1e-6;
        let (_, d1, d2) = smooth_step_derivs(x);
        let fd1 = (smooth_step(x + d) - smooth_step(x - d)) / (2.0 * d);
        let fd2 = (smooth_step_derivs(x + d).1 - smooth_step_derivs(x - d).1) / (2.0 * d);
        prop_assert!((d1 - fd1).abs() < 1e-7);
        prop_assert!((d2 - fd2).abs() < 1e-6);
    }

    #[test]
    fn layer_vector_spacings_close_the_interval(mut h in proptest::collection::vec(0.01f64..0.99, 1..6)) {
        h.sort_by(f64::total_cmp);
        h.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let Ok(lv) = LayerVector::new(h.clone(), 1e-3, 1.0) else { return Ok(()) };
        let l = lv.spacings();
        let n = lv.n();
        let total: f64 = 0.5 * l[0] + l[1..n].iter().sum::<f64>() + 0.5 * l[n];
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(l.iter().all(|&v| v > 1e-3));
        prop_assert_eq!(lv.half(0), 0.0);
        prop_assert_eq!(lv.half(n), 1.0);
        for j in 1..=n {
            prop_assert!(lv.half(j - 1) < lv.node(j) && lv.node(j) < lv.half(j));
        }
    }

    #[test]
    fn lyapunov_is_bounded_below(a in 0.5f64..3.0, k in 1usize..6) {
        let g = Grid::new(129).unwrap();
        let spec = ModelSpec { potential: Potential::quartic(), damping: Damping::One };
        let u = GridField::from_fn(g, |x| a * (k as f64 * std::f64::consts::PI * x).cos());
        let v = GridField::from_fn(g, |x| x);
        let st = hypac_core::pde::SimState { t: 0.0, u, v };
        prop_assert!(lyapunov(&st, &spec, 0.1, 0.05, Stencil::Eighth) >= 0.0);
    }
}

proptest! {
    #![proptest_config(Config { cases: 8, ..Config::default() })]

    #[test]
    fn projection_round_trip(a in 0.2f64..0.45, b in 0.55f64..0.8) {
        let s = ProfileSolver::new(Potential::quartic()).unwrap();
        let eps = 0.04;
        let m = Manifold::new(&s, Grid::new(321).unwrap());
        let h = LayerVector::new(vec![a, b], eps, 0.4).unwrap();
        let u = m.build_uh(&h).unwrap();
        let guess = h.with_positions(vec![a + 2e-3, b - 2e-3]).unwrap();
        let c = m.project(&u, &guess, &ProjectOptions::default()).unwrap();
        for j in 0..2 {
            prop_assert!((c.h.h()[j] - h.h()[j]).abs() < 1e-9);
        }
        prop_assert!(c.w.norm_inf() < 1e-8);
    }
}
