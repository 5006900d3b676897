use ibdwaves::asymptotics::{wave_height_ratio, ScalarKind};
use ibdwaves::scalarwaves::{family_member, WaveKind};
use ibdwaves::systemwaves::{
    check_profile, leading_order_guess, min_speed_search, solve_evp, solve_fptw, BvpConfig, SpeedSpec,
};
use ibdwaves::ModelParams;

fn plateau(i: &[f64]) -> f64 {
    i[0]
}

#[test]
fn lower_transition_profiles_collapse_after_rescaling() {
    let sigma = 1.25;
    let v_native = 2.5;
    let cfg = BvpConfig::default();
    for delta in [0.05, 0.5] {
        let p = ModelParams::unit_rates(sigma, delta).unwrap();
        let c = p.derived().c_sigma_delta.unwrap();
        let v = v_native * p.d * c;
        let guess = leading_order_guess(WaveKind::Lptw, sigma, delta, &p, Some(v)).unwrap();
        let mut bvp = solve_evp(WaveKind::Lptw, sigma, delta, &p, SpeedSpec::Fixed(v), &cfg, &guess).unwrap();
        let mut reduced = family_member(ScalarKind::Mvp3, v_native, sigma, &p).unwrap();
        let level = 0.5 * p.b() * (sigma - 1.0);
        bvp.align(false, level).unwrap();
        reduced.align(false, level).unwrap();
        let (lo, hi) = (reduced.z[0].max(bvp.z[0]), reduced.z[reduced.len() - 1].min(bvp.z[bvp.len() - 1]));
        let mut err: f64 = 0.0;
        for k in 0..reduced.len() {
            let z = reduced.z[k];
            if z > lo && z < hi {
                err = err.max((bvp.sample(z).1 - reduced.i[k]).abs() / (2.0 * level));
            }
        }
        assert!(err < 1e-3, "delta {delta}: rescaled sup difference {err}");
        assert!(bvp.m.iter().all(|m| m.abs() <= 1e-10));
    }
}

#[test]
fn plateau_heights_give_the_height_ratio() {
    let cfg = BvpConfig::default();
    let p = ModelParams::unit_rates(4.0, 0.05).unwrap();
    let upper = min_speed_search(WaveKind::Uptw, 4.0, 0.05, &p, &cfg).unwrap().profile;
    let lower = min_speed_search(WaveKind::Lptw, 4.0, 0.05, &p, &cfg).unwrap().profile;
    assert!((plateau(&upper.i) - 0.8).abs() < 1e-5);
    assert!((plateau(&lower.i) - 0.6).abs() < 1e-5);
    let ratio = plateau(&upper.i) / plateau(&lower.i);
    assert!((ratio - wave_height_ratio(4.0).unwrap()).abs() < 1e-4);
    assert!(check_profile(&upper, &p).ok() && check_profile(&lower, &p).ok());
}

#[test]
fn full_transition_speed_approaches_the_cutoff_speed() {
    let cfg = BvpConfig::default();
    let reference = ibdwaves::scalarwaves::solve_mvp1_speed(0.75, &ModelParams::unit_rates(0.75, 0.05).unwrap(), 1e-12)
        .unwrap()
        .speed;
    let errs: Vec<f64> = [0.5, 0.05, 0.01]
        .iter()
        .map(|&d| {
            let w = solve_fptw(0.75, d, &ModelParams::unit_rates(0.75, d).unwrap(), &cfg).unwrap();
            assert!(check_profile(&w, &ModelParams::unit_rates(0.75, d).unwrap()).ok());
            (w.speed - reference).abs()
        })
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}
