//! Phase-plane shooting for the scalar reduced wave problems, the
//! transition-layer problem and the composite immune profile.
//!
//! Every reduced problem has the form `X'' + v X' + F(X) = 0` with `X -> 1`
//! behind the front and `X -> 0` ahead of it. Paths leave the saddle `(1, 0)`
//! along its unstable eigenvector and are classified where they reach the
//! far end:
//!
//! * `Overshoot`: the path crosses `X = 0`, or arrives there steeper than the
//!   fast eigendirection of the origin (`v` too small);
//! * `Undershoot`: for the cut-off problem only, the path stops at a positive
//!   equilibrium on `[1 - sigma, 1)` (`v` too large);
//! * `Connection`: a monotone path into the origin.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{b_of, uptw_rescaled_min, ScalarKind};
use crate::error::{Error, Result};
use crate::integrate::{rk_adaptive, EventFn, OdeOptions, OdeSolution, OdeStatus};
use crate::model::ModelParams;
use crate::numerics::{airy_ai, airy_ai_prime, integrate_adaptive};

/// Distance of the first shooting point from the saddle `(1, 0)`.
pub const UNSTABLE_DISPLACEMENT: f64 = 1e-8;
/// Amplitude below which the linearisation about the origin is used to classify a path.
pub const LINEAR_FLOOR: f64 = 1e-8;

const SHOOT_RTOL: f64 = 1e-13;
const SHOOT_ATOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveKind {
    Fptw,
    Uptw,
    Lptw,
}

/// A travelling wave sampled on an increasing grid in the travelling coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub z: Vec<f64>,
    pub m: Vec<f64>,
    pub i: Vec<f64>,
    pub speed: f64,
    pub kind: WaveKind,
    pub sigma: f64,
    pub delta: f64,
    /// Final Newton residual for finite-difference solutions.
    pub residual: Option<f64>,
}

impl WaveProfile {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Linear interpolation of `(M, I)` at `z`, clamped to the grid ends.
    pub fn sample(&self, z: f64) -> (f64, f64) {
        (interp(&self.z, &self.m, z), interp(&self.z, &self.i, z))
    }

    /// Coordinate of the first downward crossing of `level` by the chosen field.
    pub fn crossing(&self, use_m: bool, level: f64) -> Option<f64> {
        let f = if use_m { &self.m } else { &self.i };
        for k in 1..f.len() {
            if (f[k - 1] - level) * (f[k] - level) <= 0.0 && f[k - 1] != f[k] {
                let s = (level - f[k - 1]) / (f[k] - f[k - 1]);
                return Some(self.z[k - 1] + s * (self.z[k] - self.z[k - 1]));
            }
        }
        None
    }

    /// Shift the coordinate so that the chosen field crosses `level` at `z = 0`.
    pub fn align(&mut self, use_m: bool, level: f64) -> Result<()> {
        let z0 = self
            .crossing(use_m, level)
            .ok_or_else(|| Error::Domain(format!("profile never crosses level {level}")))?;
        self.z.iter_mut().for_each(|z| *z -= z0);
        Ok(())
    }

    /// Whether both fields are non-increasing (up to `tol`) on the interior
    /// `interior` fraction of the grid.
    pub fn is_monotone_decreasing(&self, tol: f64, interior: f64) -> bool {
        let n = self.z.len();
        let skip = ((1.0 - interior) * 0.5 * n as f64) as usize;
        let range = skip.max(1)..n.saturating_sub(skip);
        range.clone().all(|k| self.m[k] - self.m[k - 1] <= tol) && range.clone().all(|k| self.i[k] - self.i[k - 1] <= tol)
    }

    /// Sup-norm distance of the M component from `g(z)` on the grid.
    pub fn sup_distance_m<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        self.z.iter().zip(&self.m).map(|(&z, &m)| (m - g(z)).abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn interp(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return f64::NAN;
    }
    if t <= x[0] {
        return y[0];
    }
    if t >= x[n - 1] {
        return y[n - 1];
    }
    let k = x.partition_point(|&v| v <= t).clamp(1, n - 1);
    let s = (t - x[k - 1]) / (x[k] - x[k - 1]);
    y[k - 1] + s * (y[k] - y[k - 1])
}

/// One scalar reduced problem with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProblem {
    pub kind: ScalarKind,
    pub sigma: f64,
    pub b: f64,
    pub gamma: f64,
}

impl ScalarProblem {
    pub fn new(kind: ScalarKind, sigma: f64, p: &ModelParams) -> Result<Self> {
        let valid = match kind {
            ScalarKind::Mvp1 => sigma > 0.0 && sigma < 1.0,
            ScalarKind::Mvp2 => sigma == 1.0,
            ScalarKind::Mvp3 | ScalarKind::Mvp4 => sigma > 1.0,
        };
        if !valid || !sigma.is_finite() {
            return Err(Error::Domain(format!("sigma = {sigma} is outside the range of {kind:?}")));
        }
        let b = b_of(p, sigma);
        let gamma = if sigma > 1.0 { p.alpha2 * b * (sigma - 1.0) / p.beta2 } else { 0.0 };
        Ok(ScalarProblem { kind, sigma, b, gamma })
    }

    #[inline]
    pub fn reaction(&self, x: f64) -> f64 {
        match self.kind {
            ScalarKind::Mvp1 => {
                let cut = 1.0 - self.sigma;
                if x <= cut {
                    0.0
                } else {
                    self.b * (x - cut) * x * (1.0 - x)
                }
            }
            ScalarKind::Mvp2 => self.b * x * x * (1.0 - x),
            ScalarKind::Mvp3 => x * (1.0 - x) / (1.0 + self.gamma * x),
            ScalarKind::Mvp4 => x * (1.0 + x / (self.sigma - 1.0)) * (1.0 - x),
        }
    }

    /// `F'(1)`, negative for every kind.
    pub fn slope_at_one(&self) -> f64 {
        match self.kind {
            ScalarKind::Mvp1 => -self.b * self.sigma,
            ScalarKind::Mvp2 => -self.b,
            ScalarKind::Mvp3 => -1.0 / (1.0 + self.gamma),
            ScalarKind::Mvp4 => -self.sigma / (self.sigma - 1.0),
        }
    }

    /// `F'(0)` (zero below the cut-off for the first kind).
    pub fn slope_at_zero(&self) -> f64 {
        match self.kind {
            ScalarKind::Mvp1 | ScalarKind::Mvp2 => 0.0,
            ScalarKind::Mvp3 | ScalarKind::Mvp4 => 1.0,
        }
    }

    /// Amplitude at which paths are classified.
    pub fn floor(&self) -> f64 {
        match self.kind {
            ScalarKind::Mvp1 => 1.0 - self.sigma,
            _ => LINEAR_FLOOR,
        }
    }

    /// Level fixing translation invariance.
    pub fn phase_level(&self) -> f64 {
        match self.kind {
            ScalarKind::Mvp1 => 1.0 - self.sigma,
            _ => 0.5,
        }
    }

    fn unstable_rate(&self, v: f64) -> f64 {
        (-v + (v * v - 4.0 * self.slope_at_one()).sqrt()) / 2.0
    }

    /// Fast decay rate at the origin, `None` when the eigenvalues are complex.
    fn fast_root(&self, v: f64) -> Option<f64> {
        let disc = v * v - 4.0 * self.slope_at_zero();
        (disc >= 0.0).then(|| (-v - disc.sqrt()) / 2.0)
    }
}

/// A phase path `(X, X')` sampled uniformly in the native coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePath {
    pub s: Vec<f64>,
    pub chi: Vec<f64>,
    pub dchi: Vec<f64>,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShootOutcome {
    Undershoot,
    Overshoot,
    Connection(PhasePath),
}

impl ShootOutcome {
    pub fn is_overshoot(&self) -> bool {
        matches!(self, ShootOutcome::Overshoot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Under,
    Over,
    Connect,
}

fn path_cap(problem: &ScalarProblem, v: f64, displacement: f64) -> f64 {
    let lam = problem.unstable_rate(v);
    (displacement.recip().ln() + 40.0) / lam + 200.0 / v.max(1e-3) + 200.0
}

fn classify(problem: &ScalarProblem, v: f64, displacement: f64) -> Result<Verdict> {
    let rhs = rhs_for(problem, v);
    let lam = problem.unstable_rate(v);
    let y0 = [1.0 - displacement, -lam * displacement];
    let floor = problem.floor();
    let ev_floor = move |_t: f64, y: &[f64]| y[0] - floor;
    let opts = OdeOptions { keep_partial: true, ..OdeOptions::with_tol(SHOOT_RTOL, SHOOT_ATOL) };
    let events: [EventFn<'_>; 1] = [&ev_floor];
    let sol = rk_adaptive(rhs, &y0, (0.0, path_cap(problem, v, displacement)), &opts, &events)?;
    let y = sol.last();
    let (chi, psi) = (y[0], y[1]);
    match sol.status {
        OdeStatus::EventTriggered => {}
        OdeStatus::StepFailure => return Err(Error::Shooting(format!("integration stalled at v = {v}"))),
        OdeStatus::ReachedEnd => {
            // never reached the floor
            return Ok(match problem.kind {
                ScalarKind::Mvp1 => Verdict::Under,
                _ => ratio_verdict(problem, v, chi, psi),
            });
        }
    }
    Ok(ratio_verdict(problem, v, chi, psi))
}

fn ratio_verdict(problem: &ScalarProblem, v: f64, chi: f64, psi: f64) -> Verdict {
    match problem.fast_root(v) {
        None => Verdict::Over,
        Some(fast) => {
            if psi < fast * chi {
                Verdict::Over
            } else if problem.kind == ScalarKind::Mvp1 {
                Verdict::Under
            } else {
                Verdict::Connect
            }
        }
    }
}

fn rhs_for(problem: &ScalarProblem, v: f64) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    move |_t, y, dy| {
        dy[0] = y[1];
        dy[1] = -v * y[1] - problem.reaction(y[0]);
    }
}

/// Integrate the full path for profile output, down to `X ~ 1e-10` or the length cap.
fn trace_path(problem: &ScalarProblem, v: f64) -> Result<PhasePath> {
    let lam = problem.unstable_rate(v);
    let d = UNSTABLE_DISPLACEMENT;
    let y0 = [1.0 - d, -lam * d];
    let tiny = 1e-10;
    let ev = move |_t: f64, y: &[f64]| y[0] - tiny;
    let events: [EventFn<'_>; 1] = [&ev];
    let mut cap = path_cap(problem, v, d);
    if problem.kind == ScalarKind::Mvp1 {
        // exponential tail below the cut-off
        cap += ((1.0 - problem.sigma) / tiny).ln() / v;
    }
    let opts = OdeOptions { keep_partial: true, h_max: 0.5, ..OdeOptions::with_tol(SHOOT_RTOL, SHOOT_ATOL) };
    let sol = rk_adaptive(rhs_for(problem, v), &y0, (0.0, cap), &opts, &events)?;
    if sol.status == OdeStatus::StepFailure {
        return Err(Error::Shooting(format!("profile integration failed at v = {v}")));
    }
    if sol.states.iter().any(|y| y[0] < -1e-6) {
        return Err(Error::Shooting(format!("path at v = {v} is not a monotone connection")));
    }
    Ok(resample(&sol, v, problem.phase_level()))
}

fn resample(sol: &OdeSolution, v: f64, level: f64) -> PhasePath {
    let t0 = sol.times[0];
    let t1 = sol.t_last();
    let n = (((t1 - t0) / 0.02) as usize).clamp(2001, 40001);
    let h = (t1 - t0) / (n - 1) as f64;
    let mut s = Vec::with_capacity(n);
    let mut chi = Vec::with_capacity(n);
    let mut dchi = Vec::with_capacity(n);
    for k in 0..n {
        let t = if k + 1 == n { t1 } else { t0 + h * k as f64 };
        let y = sol.interpolate(t);
        s.push(t);
        chi.push(y[0]);
        dchi.push(y[1]);
    }
    // shift so that chi crosses `level` at s = 0, using the accurate dense output
    let mut shift = 0.0;
    for k in 1..sol.times.len() {
        let (a, b) = (sol.states[k - 1][0], sol.states[k][0]);
        if a >= level && b <= level {
            let (mut lo, mut hi) = (sol.times[k - 1], sol.times[k]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if sol.interpolate(mid)[0] > level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            shift = 0.5 * (lo + hi);
            break;
        }
    }
    s.iter_mut().for_each(|x| *x -= shift);
    PhasePath { s, chi, dchi, speed: v }
}

/// Shoot one path of the reduced problem `kind` at native speed `v`.
pub fn shoot_phase_path(kind: ScalarKind, v: f64, sigma: f64, p: &ModelParams) -> Result<ShootOutcome> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("speed must be positive, got {v}")));
    }
    let problem = ScalarProblem::new(kind, sigma, p)?;
    shoot_with(&problem, v, UNSTABLE_DISPLACEMENT)
}

fn shoot_with(problem: &ScalarProblem, v: f64, displacement: f64) -> Result<ShootOutcome> {
    match classify(problem, v, displacement)? {
        Verdict::Over => Ok(ShootOutcome::Overshoot),
        Verdict::Under => Ok(ShootOutcome::Undershoot),
        Verdict::Connect => Ok(ShootOutcome::Connection(trace_path(problem, v)?)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedClass {
    Unique,
    MinimumOfFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    /// Speed in the original travelling coordinate.
    pub speed: f64,
    /// Speed in the native (possibly rescaled) units of the reduced problem.
    pub native_speed: f64,
    pub profile: WaveProfile,
    /// Final native-speed bracket.
    pub bracket: (f64, f64),
    pub classification: SpeedClass,
    /// The sampled phase path in native units.
    pub path: PhasePath,
}

/// Conversion factors `(length, speed)` from native to original units.
fn native_scales(problem: &ScalarProblem, p: &ModelParams) -> Result<(f64, f64)> {
    match problem.kind {
        ScalarKind::Mvp1 | ScalarKind::Mvp2 => Ok((1.0, 1.0)),
        ScalarKind::Mvp3 => {
            let q = p.with_sigma(problem.sigma)?;
            let c = q.derived().c_sigma_delta.expect("sigma > 1");
            // y = C z and v' = v / (D C)
            Ok((1.0 / c, q.d * c))
        }
        ScalarKind::Mvp4 => {
            let r = (problem.b * (problem.sigma - 1.0)).sqrt();
            Ok((1.0 / r, r))
        }
    }
}

fn to_profile(problem: &ScalarProblem, path: &PhasePath, p: &ModelParams) -> Result<WaveProfile> {
    let (len, spd) = native_scales(problem, p)?;
    let z: Vec<f64> = path.s.iter().map(|s| s * len).collect();
    let (m, i, kind): (Vec<f64>, Vec<f64>, WaveKind) = match problem.kind {
        ScalarKind::Mvp1 => {
            let cut = 1.0 - problem.sigma;
            let i = path.chi.iter().map(|&x| (problem.b * (x - cut)).max(0.0)).collect();
            (path.chi.clone(), i, WaveKind::Fptw)
        }
        ScalarKind::Mvp2 => (path.chi.clone(), path.chi.iter().map(|&x| problem.b * x).collect(), WaveKind::Fptw),
        ScalarKind::Mvp3 => {
            let lvl = problem.b * (problem.sigma - 1.0);
            (vec![0.0; path.chi.len()], path.chi.iter().map(|&x| lvl * x).collect(), WaveKind::Lptw)
        }
        ScalarKind::Mvp4 => {
            let i = path.chi.iter().map(|&x| problem.b * (x + problem.sigma - 1.0)).collect();
            (path.chi.clone(), i, WaveKind::Uptw)
        }
    };
    Ok(WaveProfile { z, m, i, speed: path.speed * spd, kind, sigma: problem.sigma, delta: p.delta, residual: None })
}

/// Unique speed `v*(sigma)` of the cut-off front by bisection on the shooting outcome.
pub fn solve_mvp1_speed(sigma: f64, p: &ModelParams, tol: f64) -> Result<ShootingResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let problem = ScalarProblem::new(ScalarKind::Mvp1, sigma, p)?;
    let (mut lo, mut hi) = (tol, 10.0);
    if classify(&problem, lo, UNSTABLE_DISPLACEMENT)? != Verdict::Over
        || classify(&problem, hi, UNSTABLE_DISPLACEMENT)? != Verdict::Under
    {
        return Err(Error::BracketFailure { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match classify(&problem, mid, UNSTABLE_DISPLACEMENT)? {
            Verdict::Over => lo = mid,
            _ => hi = mid,
        }
    }
    let v = 0.5 * (lo + hi);
    let path = trace_path_mvp1(&problem, v)?;
    let profile = to_profile(&problem, &path, p)?;
    Ok(ShootingResult {
        speed: v,
        native_speed: v,
        profile,
        bracket: (lo, hi),
        classification: SpeedClass::Unique,
        path,
    })
}

fn trace_path_mvp1(problem: &ScalarProblem, v: f64) -> Result<PhasePath> {
    // at the converged speed the path settles within tol of zero; tolerate that
    let lam = problem.unstable_rate(v);
    let d = UNSTABLE_DISPLACEMENT;
    let cut = 1.0 - problem.sigma;
    let tail = (cut / 1e-10).ln() / v;
    let opts = OdeOptions { keep_partial: true, h_max: 0.5, ..OdeOptions::with_tol(SHOOT_RTOL, SHOOT_ATOL) };
    let ev_cut = move |_t: f64, y: &[f64]| y[0] - cut;
    let events: [EventFn<'_>; 1] = [&ev_cut];
    let head = rk_adaptive(rhs_for(problem, v), &[1.0 - d, -lam * d], (0.0, path_cap(problem, v, d)), &opts, &events)?;
    if head.status != OdeStatus::EventTriggered {
        return Err(Error::Shooting(format!("path at v = {v} does not reach the cut-off")));
    }
    let t_cut = head.t_last();
    let rest = rk_adaptive(rhs_for(problem, v), head.last(), (t_cut, t_cut + tail), &opts, &[])?;
    let mut sol = head;
    sol.times.extend_from_slice(&rest.times[1..]);
    sol.states.extend_from_slice(&rest.states[1..]);
    sol.derivs.extend_from_slice(&rest.derivs[1..]);
    Ok(resample(&sol, v, cut))
}

/// Minimum speed of a one-parameter front family by bisection on the
/// overshoot predicate.
pub fn min_speed_family(kind: ScalarKind, sigma: f64, p: &ModelParams, tol: f64) -> Result<ShootingResult> {
    if kind == ScalarKind::Mvp1 {
        return Err(Error::Domain("the cut-off problem has a unique speed, not a family".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let problem = ScalarProblem::new(kind, sigma, p)?;
    let guess = match kind {
        ScalarKind::Mvp2 => (problem.b / 2.0).sqrt(),
        ScalarKind::Mvp3 => 2.0,
        ScalarKind::Mvp4 => uptw_rescaled_min(sigma)?,
        ScalarKind::Mvp1 => unreachable!(),
    };
    let (mut lo, mut hi) = (0.25 * guess, 2.0 * guess + 1.0);
    if classify(&problem, lo, UNSTABLE_DISPLACEMENT)? != Verdict::Over
        || classify(&problem, hi, UNSTABLE_DISPLACEMENT)? != Verdict::Connect
    {
        return Err(Error::BracketFailure { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match classify(&problem, mid, UNSTABLE_DISPLACEMENT)? {
            Verdict::Over => lo = mid,
            _ => hi = mid,
        }
    }
    let path = trace_path(&problem, hi)?;
    let profile = to_profile(&problem, &path, p)?;
    let (_, spd) = native_scales(&problem, p)?;
    Ok(ShootingResult {
        speed: hi * spd,
        native_speed: hi,
        profile,
        bracket: (lo, hi),
        classification: SpeedClass::MinimumOfFamily,
        path,
    })
}

/// Connected profile of a family member at native speed `v` (at or above the minimum).
pub fn family_member(kind: ScalarKind, v: f64, sigma: f64, p: &ModelParams) -> Result<WaveProfile> {
    let problem = ScalarProblem::new(kind, sigma, p)?;
    match shoot_with(&problem, v, UNSTABLE_DISPLACEMENT)? {
        ShootOutcome::Connection(path) => to_profile(&problem, &path, p),
        other => Err(Error::Nonexistence(format!("no monotone connection at v = {v}: {other:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExactKind {
    /// Minimum-speed front at `sigma = 1`.
    CubicFisherMin,
    /// Minimum-speed upper-transition front for `sigma in (1, 3/2]`, in the rescaled coordinate.
    UptwMin,
}

/// Closed-form minimum-speed waveforms.
pub fn exact_waveform(kind: ExactKind, sigma: f64, z: f64, p: &ModelParams) -> Result<f64> {
    match kind {
        ExactKind::CubicFisherMin => {
            if sigma != 1.0 {
                return Err(Error::Domain(format!("the cubic waveform needs sigma = 1, got {sigma}")));
            }
            let v = (b_of(p, 1.0) / 2.0).sqrt();
            let e = (-v * z).exp();
            Ok(if e.is_infinite() { 1.0 } else { e / (1.0 + e) })
        }
        ExactKind::UptwMin => {
            if !(sigma > 1.0 && sigma <= 1.5) {
                return Err(Error::Domain(format!("the exact upper waveform needs sigma in (1, 3/2], got {sigma}")));
            }
            Ok(1.0 / (1.0 + (z / (2.0 * (sigma - 1.0)).sqrt()).exp()))
        }
    }
}

/// Rescaled small-`sigma` phase-path problem: returns `V(sigma)` such that
/// `dY/dX = sigma V + (1 - sigma X) X (1 - X) / Y` with the unstable-manifold
/// start at `X -> 0` reaches `Y(1) = -V (1 - sigma)`.
pub fn small_sigma_rescaled_speed(sigma: f64, tol: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Domain(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    let mismatch = |vv: f64| -> Result<f64> {
        let vt = sigma.powf(1.5) * vv;
        let lam = (-vt + (vt * vt + 4.0 * sigma).sqrt()) / 2.0;
        let x0 = 1e-7;
        let y0 = -lam / sigma.sqrt() * x0;
        let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = sigma * vv + (1.0 - sigma * x) * x * (1.0 - x) / y[0];
        };
        let ev = |_x: f64, y: &[f64]| y[0];
        let events: [EventFn<'_>; 1] = [&ev];
        let opts = OdeOptions::with_tol(1e-12, 1e-16);
        let sol = rk_adaptive(rhs, &[y0], (x0, 1.0), &opts, &events)?;
        if sol.status == OdeStatus::EventTriggered {
            // path turned back to Y = 0 before X = 1
            return Ok(1.0);
        }
        Ok(sol.last()[0] + vv * (1.0 - sigma))
    };
    let (mut lo, mut hi) = (0.05, 3.0);
    let (flo, fhi) = (mismatch(lo)?, mismatch(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::BracketFailure { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mismatch(mid)?.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solution of the transition-layer problem `H'' + c H (b m - H) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbpSolution {
    pub sigma: f64,
    pub b: f64,
    pub c: f64,
    /// Left Airy amplitude in the original variables.
    pub c_minus: f64,
    /// Right Airy amplitude fitted from the computed solution.
    pub c_plus: f64,
    /// `c_minus (c / b^2)^(1/3)`.
    pub c_hat: f64,
    /// Right amplitude in the rescaled variables.
    pub c_hat_plus: f64,
    /// Left amplitude re-fitted from the computed solution in the rescaled variables.
    pub c_hat_minus_fit: f64,
    pub m: Vec<f64>,
    pub h: Vec<f64>,
    pub dh: Vec<f64>,
    /// Truncation of the left tail in rescaled units.
    pub m_max: f64,
}

impl TbpSolution {
    fn amp(&self) -> f64 {
        (self.b * self.b / self.c).cbrt()
    }

    fn arg(&self) -> f64 {
        (self.c * self.b).cbrt()
    }

    /// `H(m)` in the original variables, with Airy tails outside the table.
    pub fn eval(&self, m: f64) -> f64 {
        let n = self.m.len();
        if m < self.m[0] {
            return self.c_minus * airy_ai(-self.arg() * m);
        }
        if m > self.m[n - 1] {
            return self.b * m + self.c_plus * airy_ai(self.arg() * m);
        }
        let k = self.m.partition_point(|&x| x <= m).clamp(1, n - 1);
        let (m0, m1) = (self.m[k - 1], self.m[k]);
        let h = m1 - m0;
        let s = (m - m0) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.h[k - 1]
            + (s3 - 2.0 * s2 + s) * h * self.dh[k - 1]
            + (-2.0 * s3 + 3.0 * s2) * self.h[k]
            + (s3 - s2) * h * self.dh[k]
    }

    /// Rescaled `H~(m~)`.
    pub fn eval_rescaled(&self, mt: f64) -> f64 {
        self.eval(mt / self.arg()) / self.amp()
    }
}

/// Shooting on the rescaled amplitude for fixed `(b, c)`; returns the bracket midpoint.
fn tbp_shoot(b: f64, c: f64, m_max: f64, tol: f64) -> Result<(f64, OdeSolution)> {
    let arg = (c * b).cbrt();
    let amp = (b * b / c).cbrt();
    let m0 = -m_max / arg;
    let m_end = 6.0 / arg;
    let run = |chat: f64| -> Result<(i8, OdeSolution)> {
        let cm = chat * amp;
        let y0 = [cm * airy_ai(m_max), -cm * arg * airy_ai_prime(m_max)];
        let rhs = move |m: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -c * y[0] * (b * m - y[0]);
        };
        let up = move |m: f64, y: &[f64]| (y[0] - b * m.max(0.0)) / amp - 1.0;
        let down = move |m: f64, y: &[f64]| (y[0] - b * m.max(0.0)) / amp + 1.0;
        let events: [EventFn<'_>; 2] = [&up, &down];
        let opts = OdeOptions { keep_partial: true, h_max: 0.05 / arg, ..OdeOptions::with_tol(1e-13, 1e-16 * amp) };
        let sol = rk_adaptive(rhs, &y0, (m0, m_end), &opts, &events)?;
        let verdict = match (sol.status, sol.event) {
            (OdeStatus::EventTriggered, Some(0)) => 1,
            (OdeStatus::EventTriggered, _) => -1,
            (OdeStatus::StepFailure, _) => return Err(Error::Shooting("transition problem integration failed".into())),
            (OdeStatus::ReachedEnd, _) => {
                let y = sol.last();
                let k = (y[0] - b * m_end) / amp;
                if k > chat * airy_ai(6.0) {
                    1
                } else {
                    -1
                }
            }
        };
        Ok((verdict, sol))
    };
    let (mut lo, mut hi) = (0.1, 5.0);
    if run(lo)?.0 != -1 || run(hi)?.0 != 1 {
        return Err(Error::BracketFailure { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if run(mid)?.0 > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let (_, sol) = run(mid)?;
    Ok((mid, sol))
}

/// Solve the transition-layer problem at `sigma` by shooting on the left Airy amplitude.
///
/// The truncation of the left tail is increased until the rescaled amplitude
/// stops changing by more than `tol`.
pub fn solve_tbp(sigma: f64, p: &ModelParams, tol: f64) -> Result<TbpSolution> {
    let v = solve_mvp1_speed(sigma, p, 1e-11)?.speed;
    solve_tbp_with_speed(sigma, p, v, tol)
}

/// As [`solve_tbp`] with a known `v*(sigma)`.
pub fn solve_tbp_with_speed(sigma: f64, p: &ModelParams, v_star: f64, tol: f64) -> Result<TbpSolution> {
    let q = p.with_sigma(sigma)?;
    let c = q.derived().c_transition(&q, v_star)?;
    let b = q.b();
    let inner_tol = (tol * 1e-3).max(1e-14);
    let mut m_max = 5.0;
    let (mut chat, _) = tbp_shoot(b, c, m_max, inner_tol)?;
    let sol = loop {
        let next = m_max + 2.0;
        let (c2, s2) = tbp_shoot(b, c, next, inner_tol)?;
        let change = (c2 - chat).abs();
        chat = c2;
        m_max = next;
        if change <= tol || m_max >= 11.0 {
            break s2;
        }
    };
    let amp = (b * b / c).cbrt();
    let m: Vec<f64> = sol.times.clone();
    let h: Vec<f64> = sol.states.iter().map(|y| y[0]).collect();
    let dh: Vec<f64> = sol.states.iter().map(|y| y[1]).collect();
    let mut out = TbpSolution {
        sigma,
        b,
        c,
        c_minus: chat * amp,
        c_plus: 0.0,
        c_hat: chat,
        c_hat_plus: 0.0,
        c_hat_minus_fit: 0.0,
        m,
        h,
        dh,
        m_max,
    };
    // fit both tails at |m~| = 3 where the linearisation is accurate
    let fit_at = 3.0;
    let kp = out.eval_rescaled(fit_at) - fit_at;
    let km = out.eval_rescaled(-fit_at);
    out.c_hat_plus = kp / airy_ai(fit_at);
    out.c_hat_minus_fit = km / airy_ai(fit_at);
    out.c_plus = out.c_hat_plus * amp;
    Ok(out)
}

/// Uniform leading-order approximation `I_T = H(M_T)` of the cut-off front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeH {
    pub sigma: f64,
    pub delta_bar: f64,
    pub b: f64,
    pub c: f64,
    pub v_star: f64,
    pub tbp: TbpSolution,
}

/// Rescaled transition coordinate beyond which the outer solutions are used.
const TRANSITION_LEFT: f64 = -3.0;
const TRANSITION_RIGHT: f64 = 6.0;

impl CompositeH {
    pub fn new(sigma: f64, delta_bar: f64, p: &ModelParams, v_star: f64) -> Result<Self> {
        if !(delta_bar > 0.0) {
            return Err(Error::InvalidParameter(format!("delta_bar must be positive, got {delta_bar}")));
        }
        let tbp = solve_tbp_with_speed(sigma, p, v_star, 1e-8)?;
        Ok(CompositeH { sigma, delta_bar, b: tbp.b, c: tbp.c, v_star, tbp })
    }

    /// `Phi0(M)` by quadrature after the substitution `s = (1 - sigma) - w^2`.
    pub fn phi0(&self, m: f64) -> Result<f64> {
        phi0(self.sigma, self.b, self.c, m)
    }

    pub fn eval(&self, m: f64) -> Result<f64> {
        if !(-1e-12..=1.0 + 1e-12).contains(&m) {
            return Err(Error::Domain(format!("M_T = {m} outside [0, 1]")));
        }
        let cut = 1.0 - self.sigma;
        let scale = self.delta_bar.cbrt();
        let mt = (self.c * self.b).cbrt() * (m - cut) / scale;
        if mt >= TRANSITION_RIGHT {
            Ok(self.b * (m - cut))
        } else if mt >= TRANSITION_LEFT {
            Ok(scale * self.tbp.eval((m - cut) / scale))
        } else if m <= 0.0 {
            Ok(0.0)
        } else {
            Ok((-self.phi0(m)? / self.delta_bar.sqrt()).exp())
        }
    }
}

/// WKB exponent `Phi0(M) = (1-sigma) sqrt(sigma b c) int_M^{1-sigma} sqrt((1-sigma)-s) / (s sqrt(1-s)) ds`.
pub fn phi0(sigma: f64, b: f64, c: f64, m: f64) -> Result<f64> {
    let k = 1.0 - sigma;
    if !(m > 0.0 && m <= k) {
        return Err(Error::Domain(format!("Phi0 needs M in (0, {k}], got {m}")));
    }
    let w_max = (k - m).sqrt();
    let integrand = |w: f64| 2.0 * w * w / ((k - w * w) * (sigma + w * w).sqrt());
    let val = integrate_adaptive(integrand, 0.0, w_max, 1e-12 * (1.0 + w_max))?;
    Ok(k * (sigma * b * c).sqrt() * val)
}

/// Near-cut-off behaviour `(2/3) sqrt(b c) ((1-sigma) - M)^(3/2)`.
pub fn phi0_near_cutoff(sigma: f64, b: f64, c: f64, m: f64) -> f64 {
    2.0 / 3.0 * (b * c).sqrt() * ((1.0 - sigma) - m).max(0.0).powf(1.5)
}

/// Exponent of the algebraic decay `H ~ M^(Gamma / sqrt(delta_bar))` as `M -> 0`.
pub fn gamma_exponent(sigma: f64, b: f64, c: f64) -> f64 {
    (sigma * (1.0 - sigma).powi(3) * b * c).sqrt()
}

/// One-off evaluation of the composite immune profile.
pub fn composite_h(m: f64, sigma: f64, delta_bar: f64, p: &ModelParams, v_star: f64) -> Result<f64> {
    CompositeH::new(sigma, delta_bar, p, v_star)?.eval(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(sigma: f64) -> ModelParams {
        ModelParams::unit_rates(sigma, 0.01).unwrap()
    }

    #[test]
    fn cubic_connection_matches_logistic() {
        let p = unit(1.0);
        // the minimum-speed path is the separatrix itself, so shoot just above it
        match shoot_phase_path(ScalarKind::Mvp2, 0.5 + 1e-8, 1.0, &p).unwrap() {
            ShootOutcome::Connection(path) => {
                let err = path
                    .s
                    .iter()
                    .zip(&path.chi)
                    .map(|(&z, &x)| (x - exact_waveform(ExactKind::CubicFisherMin, 1.0, z, &p).unwrap()).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-4, "sup error {err}");
            }
            other => panic!("expected a connection, got {other:?}"),
        }
        assert!(shoot_phase_path(ScalarKind::Mvp2, 0.4, 1.0, &p).unwrap().is_overshoot());
    }

    #[test]
    fn pushed_upper_front_matches_exact_waveform() {
        let p = unit(1.25);
        let vm = uptw_rescaled_min(1.25).unwrap();
        assert!((vm - 2.1213).abs() < 1e-4);
        match shoot_phase_path(ScalarKind::Mvp4, vm * (1.0 + 1e-9), 1.25, &p).unwrap() {
            ShootOutcome::Connection(path) => {
                let err = path
                    .s
                    .iter()
                    .zip(&path.chi)
                    .map(|(&y, &x)| (x - exact_waveform(ExactKind::UptwMin, 1.25, y, &p).unwrap()).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-4, "sup error {err}");
            }
            other => panic!("expected a connection, got {other:?}"),
        }
    }

    #[test]
    fn cutoff_speed_properties() {
        let p = unit(0.5);
        let r = solve_mvp1_speed(0.75, &p, 1e-10).unwrap();
        assert!(r.bracket.1 - r.bracket.0 <= 1e-10);
        // exponential tail ahead of the cut-off
        let cut = 0.25;
        let tail_err = r
            .profile
            .z
            .iter()
            .zip(&r.profile.m)
            .filter(|(z, _)| **z >= 0.0)
            .map(|(&z, &m)| (m - cut * (-r.speed * z).exp()).abs())
            .fold(0.0, f64::max);
        assert!(tail_err <= 1e-6 * cut, "tail error {tail_err}");
        assert!(r.profile.is_monotone_decreasing(1e-12, 1.0));

        let v3 = solve_mvp1_speed(0.3, &p, 1e-8).unwrap().speed;
        let v6 = solve_mvp1_speed(0.6, &p, 1e-8).unwrap().speed;
        let v9 = solve_mvp1_speed(0.9, &p, 1e-8).unwrap().speed;
        assert!(v3 < v6 && v6 < v9);
    }

    #[test]
    fn displacement_sensitivity() {
        let p = unit(0.5);
        let problem = ScalarProblem::new(ScalarKind::Mvp1, 0.6, &p).unwrap();
        let speed = |d: f64| {
            let (mut lo, mut hi) = (1e-3, 2.0);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if classify(&problem, mid, d).unwrap() == Verdict::Over {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        assert!((speed(UNSTABLE_DISPLACEMENT) - speed(0.5 * UNSTABLE_DISPLACEMENT)).abs() < 1e-8);
    }

    #[test]
    fn family_minima() {
        let p = unit(2.0);
        let r = min_speed_family(ScalarKind::Mvp4, 2.0, &p, 1e-6).unwrap();
        assert!((r.native_speed - 2.0).abs() < 1e-4, "{}", r.native_speed);
        let r = min_speed_family(ScalarKind::Mvp4, 1.25, &unit(1.25), 1e-8).unwrap();
        assert!((r.native_speed - 2.1213203).abs() < 1e-5);
        let r = min_speed_family(ScalarKind::Mvp3, 1.25, &unit(1.25), 1e-6).unwrap();
        assert!((r.native_speed - 2.0).abs() < 1e-4);
        assert_eq!(r.profile.kind, WaveKind::Lptw);
        assert!(r.profile.m.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn exact_waveform_values() {
        let p = unit(1.0);
        assert_eq!(exact_waveform(ExactKind::CubicFisherMin, 1.0, 0.0, &p).unwrap(), 0.5);
        assert_eq!(exact_waveform(ExactKind::UptwMin, 1.25, 0.0, &p).unwrap(), 0.5);
        let v = exact_waveform(ExactKind::CubicFisherMin, 1.0, 2.0, &p).unwrap();
        assert!((v - 0.26894).abs() < 1e-5);
        assert!(exact_waveform(ExactKind::UptwMin, 2.0, 0.0, &p).is_err());
        assert!(exact_waveform(ExactKind::CubicFisherMin, 0.9, 0.0, &p).is_err());
    }

    #[test]
    fn transition_problem_symmetry_and_monotonicity() {
        let p = unit(0.5);
        let t = solve_tbp(0.6, &p, 1e-7).unwrap();
        assert!(((t.c_hat_plus - t.c_hat_minus_fit) / t.c_hat).abs() < 0.01);
        assert!(t.h.windows(2).all(|w| w[1] > w[0]));
        // H~(m~) - m~ = H~(-m~)
        for mt in [0.5, 1.0, 2.0] {
            let lhs = t.eval_rescaled(mt) - mt;
            let rhs = t.eval_rescaled(-mt);
            assert!((lhs - rhs).abs() < 1e-6, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn phi0_matches_near_cutoff_form() {
        let (sigma, b, c) = (0.75, 4.0 / 7.0, 20.0);
        let m = 0.25 - 1e-3;
        let q = phi0(sigma, b, c, m).unwrap();
        let a = phi0_near_cutoff(sigma, b, c, m);
        assert!(((q - a) / a).abs() < 0.01);
        let m = 1e-8;
        let q = phi0(sigma, b, c, m).unwrap();
        let slope = gamma_exponent(sigma, b, c);
        // leading log behaviour dominates for tiny M
        assert!(((q / m.ln().abs()) - slope).abs() / slope < 0.15);
    }

    #[test]
    fn small_sigma_rescaled_problem() {
        let v = small_sigma_rescaled_speed(0.02, 1e-10).unwrap();
        assert!((v - crate::asymptotics::V0).abs() / crate::asymptotics::V0 < 0.03);
    }
}
