//! Airy function `Ai` and its derivative for real arguments.
//!
//! Maclaurin series for `|x| <= 6`, the standard asymptotic expansions beyond.

use std::f64::consts::{FRAC_PI_4, PI};

const AI0: f64 = 0.355_028_053_887_817_24;
const AIP0: f64 = -0.258_819_403_792_806_8;
const SERIES_LIMIT: f64 = 6.0;

pub fn airy_ai(x: f64) -> f64 {
    airy_pair(x).0
}

pub fn airy_ai_prime(x: f64) -> f64 {
    airy_pair(x).1
}

/// `(Ai(x), Ai'(x))`.
pub fn airy_pair(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if x.abs() <= SERIES_LIMIT {
        series(x)
    } else if x > 0.0 {
        asymptotic_pos(x)
    } else {
        asymptotic_neg(-x)
    }
}

fn series(x: f64) -> (f64, f64) {
    // f = sum x^{3k} prod, g = sum x^{3k+1} prod
    let x3 = x * x * x;
    let mut f_term = 1.0;
    let mut g_term = x;
    let mut f = f_term;
    let mut g = g_term;
    let mut df = 0.0;
    let mut dg = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        f_term *= x3 / ((3.0 * kf - 1.0) * (3.0 * kf));
        g_term *= x3 / ((3.0 * kf) * (3.0 * kf + 1.0));
        f += f_term;
        g += g_term;
        if x != 0.0 {
            df += 3.0 * kf * f_term / x;
            dg += (3.0 * kf + 1.0) * g_term / x;
        }
        if f_term.abs() < 1e-18 * f.abs().max(1e-300) && g_term.abs() < 1e-18 * g.abs().max(1e-300) {
            break;
        }
    }
    (AI0 * f + AIP0 * g, AI0 * df + AIP0 * dg)
}

fn uv_coeffs(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![1.0];
    let mut v = vec![1.0];
    for k in 1..n {
        let kf = k as f64;
        let uk = u[k - 1] * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        u.push(uk);
        v.push(-(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * uk);
    }
    (u, v)
}

const N_ASYM: usize = 12;

fn asymptotic_pos(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let (u, v) = uv_coeffs(N_ASYM);
    let mut su = 0.0;
    let mut sv = 0.0;
    let mut zk = 1.0;
    for k in 0..N_ASYM {
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        su += sgn * u[k] / zk;
        sv += sgn * v[k] / zk;
        zk *= zeta;
    }
    let e = (-zeta).exp() / (2.0 * PI.sqrt());
    let q = x.powf(0.25);
    (e / q * su, -e * q * sv)
}

fn asymptotic_neg(z: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let (u, v) = uv_coeffs(2 * N_ASYM);
    let (mut pu, mut qu, mut pv, mut qv) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..N_ASYM {
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        let z2k = zeta.powi(2 * k as i32);
        pu += sgn * u[2 * k] / z2k;
        qu += sgn * u[2 * k + 1] / (z2k * zeta);
        pv += sgn * v[2 * k] / z2k;
        qv += sgn * v[2 * k + 1] / (z2k * zeta);
    }
    let (s, c) = (zeta - FRAC_PI_4).sin_cos();
    let q = z.powf(0.25);
    let ai = (c * pu + s * qu) / (PI.sqrt() * q);
    let aip = q / PI.sqrt() * (s * pv - c * qv);
    (ai, aip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{rk_adaptive, OdeOptions};

    #[test]
    fn tabulated_values() {
        let table = [
            (-12.0, -0.06655517505437264, 1.0231104533679707),
            (-8.0, -0.05270505035638643, 0.9355609381983064),
            (-6.0, -0.3291451736298231, 0.3459354872813428),
            (-1.0, 0.5355608832923522, -0.010160567116645175),
            (0.0, 0.3550280538878172, -0.2588194037928068),
            (1.0, 0.13529241631288147, -0.15914744129679328),
            (2.0, 0.03492413042327436, -0.05309038443365388),
            (6.0, 9.947694360252897e-06, -2.4765200397034972e-05),
            (8.0, 4.6922076160992236e-08, -1.3414392979067844e-07),
            (12.0, 1.393184688875363e-13, -4.854736554985317e-13),
        ];
        for (x, ai, aip) in table {
            let (a, d) = airy_pair(x);
            assert!(((a - ai) / ai).abs() < 1e-7, "Ai({x}) = {a} vs {ai}");
            assert!(((d - aip) / aip).abs() < 1e-7, "Ai'({x}) = {d} vs {aip}");
        }
    }

    #[test]
    fn continuity_at_switch() {
        for x in [SERIES_LIMIT, -SERIES_LIMIT] {
            let inner = series(x);
            let outer = if x > 0.0 { asymptotic_pos(x) } else { asymptotic_neg(-x) };
            assert!(((inner.0 - outer.0) / inner.0).abs() < 1e-7);
            assert!(((inner.1 - outer.1) / inner.1).abs() < 1e-7);
        }
    }

    #[test]
    fn satisfies_airy_equation() {
        // integrate y'' = x y from x = 0 with the known initial data
        let opts = OdeOptions::with_tol(1e-12, 1e-14);
        let sol = rk_adaptive(
            |x, y, dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = x * y[0];
            },
            &[AI0, AIP0],
            (0.0, 3.0),
            &opts,
            &[],
        )
        .unwrap();
        let (a, d) = airy_pair(3.0);
        assert!((sol.last()[0] - a).abs() < 1e-9);
        assert!((sol.last()[1] - d).abs() < 1e-9);
    }
}
