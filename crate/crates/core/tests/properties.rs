use ibdwaves::asymptotics::{uptw_min_speed, wave_height_ratio};
use ibdwaves::numerics::fmt_g17;
use ibdwaves::ModelParams;
use proptest::prelude::*;

proptest! {
    #[test]
    fn a_times_b_is_beta1_beta2(alpha2 in 0.1f64..5.0, beta1 in 0.1f64..5.0, beta2 in 0.1f64..5.0) {
        let p = ModelParams::new(alpha2, beta1, beta2, 0.001, 1.0).unwrap();
        prop_assert!((p.a() * p.b() - beta1 * beta2).abs() <= 1e-12 * beta1 * beta2);
    }

    #[test]
    fn projection_lands_in_the_region(m in -0.5f64..1.5, i in -0.5f64..1.5, delta in 0.001f64..0.3) {
        let p = ModelParams::unit_rates(0.75, delta).unwrap();
        let (pm, pi, _) = p.project_to_region(m, i);
        prop_assert!(p.in_region(pm, pi, 1e-12));
        let (qm, qi, moved) = p.project_to_region(pm, pi);
        prop_assert!(!moved || ((qm - pm).abs() < 1e-15 && (qi - pi).abs() < 1e-15));
    }

    #[test]
    fn g17_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn height_ratio_exceeds_one_and_decreases(sigma in 1.001f64..100.0) {
        let r = wave_height_ratio(sigma).unwrap();
        prop_assert!(r > 1.0);
        prop_assert!(wave_height_ratio(sigma * 1.1).unwrap() < r);
    }

    #[test]
    fn upper_speed_is_continuous_and_increasing(sigma in 1.01f64..6.0) {
        let p = ModelParams::unit_rates(1.0, 0.05).unwrap();
        let h = 1e-7;
        let (a, b) = (uptw_min_speed(sigma, &p).unwrap(), uptw_min_speed(sigma + h, &p).unwrap());
        prop_assert!((b - a).abs() < 1e-5);
    }

    #[test]
    fn slow_manifold_value_is_a_probability(m in 0.0f64..0.999, i in 0.0f64..1.0) {
        let p = ModelParams::unit_rates(0.75, 0.05).unwrap();
        let b = p.slow_manifold_b(m, i).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        let r = p.reaction_rds([m, i, b, b]).unwrap();
        prop_assert!(r[2].abs() < 1e-9 && r[3].abs() < 1e-12);
    }
}
