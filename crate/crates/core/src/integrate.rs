//! Adaptive Dormand–Prince 5(4) integration with dense output and
//! zero-crossing events.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OdeStatus {
    ReachedEnd,
    EventTriggered,
    StepFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Right-hand side at each stored state; used for Hermite interpolation.
    pub derivs: Vec<Vec<f64>>,
    pub status: OdeStatus,
    /// Index of the event function that stopped the integration.
    pub event: Option<usize>,
}

impl OdeSolution {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("solution always holds the initial state")
    }

    pub fn t_last(&self) -> f64 {
        *self.times.last().expect("solution always holds the initial state")
    }

    /// Cubic Hermite interpolation of the trajectory at `t` (clamped to the range).
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
        hermite(
            self.times[k - 1],
            &self.states[k - 1],
            &self.derivs[k - 1],
            self.times[k],
            &self.states[k],
            &self.derivs[k],
            t,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    /// Return the partial trajectory with `StepFailure` status instead of an error.
    pub keep_partial: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: None,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 1_000_000,
            keep_partial: false,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        OdeOptions { rtol, atol, ..Default::default() }
    }
}

pub type EventFn<'a> = &'a dyn Fn(f64, &[f64]) -> f64;

fn hermite(t0: f64, y0: &[f64], f0: &[f64], t1: f64, y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len())
        .map(|j| h00 * y0[j] + h10 * h * f0[j] + h01 * y1[j] + h11 * h * f1[j])
        .collect()
}

/// Integrate `y' = rhs(t, y)` over `t_span` with Dormand–Prince 5(4).
///
/// `rhs` writes the derivative into its third argument. Integration stops at the
/// first sign change of any event function, located by bisection on the
/// Hermite interpolant to within `atol` in `t`.
pub fn rk_adaptive<F>(
    mut rhs: F,
    y0: &[f64],
    t_span: (f64, f64),
    opts: &OdeOptions,
    events: &[EventFn<'_>],
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let (t0, t_end) = t_span;
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidParameter("rtol and atol must be positive".into()));
    }
    if !(t_end > t0) {
        return Err(Error::InvalidParameter(format!("empty time span [{t0}, {t_end}]")));
    }
    let n = y0.len();
    let mut f0 = vec![0.0; n];
    rhs(t0, y0, &mut f0);
    if f0.iter().chain(y0).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { field: "y", t: t0 });
    }

    let mut sol = OdeSolution {
        times: vec![t0],
        states: vec![y0.to_vec()],
        derivs: vec![f0.clone()],
        status: OdeStatus::ReachedEnd,
        event: None,
    };
    let mut ev_prev: Vec<f64> = events.iter().map(|e| e(t0, y0)).collect();

    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut t = t0;
    let mut y = y0.to_vec();
    k[0].copy_from_slice(&f0);

    let mut h = match opts.h_init {
        Some(h) => h,
        None => initial_step(&y, &k[0], opts),
    }
    .min(opts.h_max)
    .min(t_end - t0);
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0usize;

    while t < t_end {
        if steps >= opts.max_steps || h < opts.h_min {
            sol.status = OdeStatus::StepFailure;
            if opts.keep_partial {
                return Ok(sol);
            }
            return Err(Error::StepFailure { t, h_min: opts.h_min });
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        for j in 0..n {
            ytmp[j] = y[j] + h * A21 * k[0][j];
        }
        stage(&mut rhs, &mut k, 1, t + C2 * h, &ytmp);
        for j in 0..n {
            ytmp[j] = y[j] + h * (A31 * k[0][j] + A32 * k[1][j]);
        }
        stage(&mut rhs, &mut k, 2, t + C3 * h, &ytmp);
        for j in 0..n {
            ytmp[j] = y[j] + h * (A41 * k[0][j] + A42 * k[1][j] + A43 * k[2][j]);
        }
        stage(&mut rhs, &mut k, 3, t + C4 * h, &ytmp);
        for j in 0..n {
            ytmp[j] = y[j] + h * (A51 * k[0][j] + A52 * k[1][j] + A53 * k[2][j] + A54 * k[3][j]);
        }
        stage(&mut rhs, &mut k, 4, t + C5 * h, &ytmp);
        for j in 0..n {
            ytmp[j] = y[j]
                + h * (A61 * k[0][j] + A62 * k[1][j] + A63 * k[2][j] + A64 * k[3][j] + A65 * k[4][j]);
        }
        stage(&mut rhs, &mut k, 5, t + h, &ytmp);
        for j in 0..n {
            ynew[j] = y[j]
                + h * (A71 * k[0][j] + A73 * k[2][j] + A74 * k[3][j] + A75 * k[4][j] + A76 * k[5][j]);
        }
        stage(&mut rhs, &mut k, 6, t + h, &ynew);

        let mut err = 0.0;
        let mut finite = true;
        for j in 0..n {
            let e = h
                * (E1 * k[0][j] + E3 * k[2][j] + E4 * k[3][j] + E5 * k[4][j] + E6 * k[5][j] + E7 * k[6][j]);
            let sc = opts.atol + opts.rtol * y[j].abs().max(ynew[j].abs());
            err += (e / sc).powi(2);
            finite &= ynew[j].is_finite() && k[6][j].is_finite();
        }
        err = (err / n as f64).sqrt();
        if !finite || !err.is_finite() {
            h *= 0.25;
            continue;
        }

        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            let mut hit = None;
            for (idx, e) in events.iter().enumerate() {
                let g = e(t_new, &ynew);
                if ev_prev[idx] != 0.0 && g != 0.0 && g.signum() != ev_prev[idx].signum() {
                    hit = Some(idx);
                    break;
                }
                if ev_prev[idx] == 0.0 {
                    ev_prev[idx] = g;
                }
            }
            if let Some(idx) = hit {
                let (te, ye) = locate_event(events[idx], t, &y, &k[0], t_new, &ynew, &k[6], ev_prev[idx], opts.atol);
                let mut fe = vec![0.0; n];
                rhs(te, &ye, &mut fe);
                if te > t {
                    sol.times.push(te);
                    sol.states.push(ye);
                    sol.derivs.push(fe);
                }
                sol.status = OdeStatus::EventTriggered;
                sol.event = Some(idx);
                return Ok(sol);
            }
            for (idx, e) in events.iter().enumerate() {
                let g = e(t_new, &ynew);
                if g != 0.0 {
                    ev_prev[idx] = g;
                }
            }

            t = t_new;
            y.copy_from_slice(&ynew);
            let f_last = k[6].clone();
            k[0].copy_from_slice(&f_last);
            sol.times.push(t);
            sol.states.push(y.clone());
            sol.derivs.push(f_last);

            let fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.14) * err_prev.powf(0.08) };
            h *= fac.clamp(0.2, 5.0);
            h = h.min(opts.h_max);
            err_prev = err.max(1e-4);
        } else {
            let fac = 0.9 * err.powf(-0.2);
            h *= fac.clamp(0.1, 0.9);
        }
    }
    Ok(sol)
}

#[inline]
fn stage<F>(rhs: &mut F, k: &mut [Vec<f64>], idx: usize, t: f64, y: &[f64])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rhs(t, y, &mut k[idx]);
}

fn initial_step(y: &[f64], f: &[f64], opts: &OdeOptions) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for j in 0..y.len() {
        let sc = opts.atol + opts.rtol * y[j].abs();
        d0 += (y[j] / sc).powi(2);
        d1 += (f[j] / sc).powi(2);
    }
    let n = y.len().max(1) as f64;
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        (0.01 * d0 / d1).min(1e-2)
    }
}

#[allow(clippy::too_many_arguments)]
fn locate_event(
    g: EventFn<'_>,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    t1: f64,
    y1: &[f64],
    f1: &[f64],
    g0: f64,
    atol: f64,
) -> (f64, Vec<f64>) {
    let mut lo = t0;
    let mut hi = t1;
    let tol = atol.max(1e-15 * t1.abs());
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let ym = hermite(t0, y0, f0, t1, y1, f1, mid);
        let gm = g(mid, &ym);
        if gm == 0.0 {
            return (mid, ym);
        }
        if gm.signum() == g0.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (hi, hermite(t0, y0, f0, t1, y1, f1, hi))
}

/// Trajectory of the spatially uniform system `m' = i m (1 - m)`, `i' = f(m, i) / delta`.
pub fn solve_temporal_ds(m0: f64, i0: f64, p: &ModelParams, t_end: f64) -> Result<OdeSolution> {
    p.validate()?;
    if !p.in_region(m0, i0, 1e-12) {
        return Err(Error::Domain(format!("initial state ({m0}, {i0}) outside R(delta)")));
    }
    if m0 >= 1.0 && i0 <= 0.0 {
        return Err(Error::Singularity("initial state at the corner (1, 0)".into()));
    }
    let p = *p;
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (m, i) = (y[0], y[1]);
        dy[0] = i * m * (1.0 - m);
        dy[1] = p.immune_rate(m, i) / p.delta;
    };
    let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
    rk_adaptive(rhs, &[m0, i0], (0.0, t_end), &opts, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_solution() {
        let sol = rk_adaptive(|_, _, dy: &mut [f64]| dy[0] = 0.0, &[3.5], (0.0, 10.0), &OdeOptions::default(), &[])
            .unwrap();
        assert_eq!(sol.last()[0], 3.5);
        assert_eq!(sol.status, OdeStatus::ReachedEnd);
    }

    #[test]
    fn exponential_growth() {
        let rtol = 1e-10;
        let opts = OdeOptions::with_tol(rtol, 1e-12);
        let sol = rk_adaptive(|_, y, dy: &mut [f64]| dy[0] = y[0], &[1.0], (0.0, 1.0), &opts, &[]).unwrap();
        assert!((sol.last()[0] - std::f64::consts::E).abs() / std::f64::consts::E < 10.0 * rtol);
        assert!(sol.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn riccati_decay() {
        let rtol = 1e-10;
        let opts = OdeOptions::with_tol(rtol, 1e-12);
        let sol = rk_adaptive(|_, y, dy: &mut [f64]| dy[0] = -y[0] * y[0], &[1.0], (0.0, 9.0), &opts, &[]).unwrap();
        assert!((sol.last()[0] - 0.1).abs() / 0.1 < 10.0 * rtol);
    }

    #[test]
    fn event_stops_at_crossing() {
        let opts = OdeOptions::with_tol(1e-10, 1e-12);
        let ev = |_t: f64, y: &[f64]| y[0] - 0.5;
        let sol = rk_adaptive(|_, y, dy: &mut [f64]| dy[0] = -y[0], &[1.0], (0.0, 5.0), &opts, &[&ev]).unwrap();
        assert_eq!(sol.status, OdeStatus::EventTriggered);
        assert_relative_eq!(sol.t_last(), std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let opts = OdeOptions { h_max: 0.05, ..OdeOptions::with_tol(1e-10, 1e-12) };
        let sol = rk_adaptive(
            |_, y, dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[0.0, 1.0],
            (0.0, 3.0),
            &opts,
            &[],
        )
        .unwrap();
        let y = sol.interpolate(1.2345);
        assert_relative_eq!(y[0], 1.2345f64.sin(), epsilon = 1e-6);
    }

    #[test]
    fn step_failure_on_blow_up() {
        let opts = OdeOptions { h_min: 1e-10, ..OdeOptions::with_tol(1e-8, 1e-10) };
        let res = rk_adaptive(|_, y, dy: &mut [f64]| dy[0] = y[0] * y[0], &[1.0], (0.0, 2.0), &opts, &[]);
        assert!(matches!(res, Err(Error::StepFailure { .. })));
    }

    #[test]
    fn temporal_system_limits() {
        let p = ModelParams::unit_rates(0.5, 0.05).unwrap();
        let sol = solve_temporal_ds(0.2, 0.3, &p, 20.0).unwrap();
        let y = sol.last();
        assert!((y[0] - 0.2).abs() < 0.05 && y[1].abs() < 1e-8, "{y:?}");

        let p = ModelParams::unit_rates(1.25, 0.05).unwrap();
        let sol = solve_temporal_ds(0.5, 0.1, &p, 200.0).unwrap();
        let (mf, i_f) = p.e_full();
        assert!((sol.last()[0] - mf).abs() < 1e-6 && (sol.last()[1] - i_f).abs() < 1e-6);

        let p = ModelParams::unit_rates(4.0, 0.05).unwrap();
        let sol = solve_temporal_ds(0.0, 0.1, &p, 20.0).unwrap();
        assert_eq!(sol.last()[0], 0.0);
        assert_relative_eq!(sol.last()[1], 0.6, epsilon = 1e-8);
    }
}
