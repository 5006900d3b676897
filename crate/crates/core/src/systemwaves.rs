//! Finite-difference Newton solver for the two-component travelling-wave
//! problems at finite `delta`.
//!
//! With `z = x - v t` the reduced system becomes
//!
//! ```text
//! M'' + v M' + I M (1 - M)       = 0
//! D I'' + v I' + f(M, I) / delta = 0
//! ```
//!
//! on `[-L, L]`. Second-order central differences give a banded system; the
//! unknowns are interleaved `(M_0, I_0, M_1, I_1, ...)` so the Jacobian has
//! five sub- and super-diagonals once the one-sided boundary derivatives are
//! included. One extra unknown (the speed, or a slack in a boundary row) and
//! one phase condition border the banded block.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{lptw_min_speed, uptw_min_speed, vstar_sigma_one, ScalarKind};
use crate::error::{Error, Result};
use crate::model::{Equilibrium, EquilibriumKind, ModelParams, Stability};
use crate::numerics::linalg::{solve_bordered, BandMatrix};
use crate::scalarwaves::{family_member, min_speed_family, solve_mvp1_speed, WaveKind, WaveProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BvpConfig {
    /// Half-length of the truncated domain.
    pub l: f64,
    /// Number of grid points.
    pub n: usize,
    pub rtol: f64,
    /// Newton tolerance on the scaled residual.
    pub atol: f64,
    pub max_newton_iters: usize,
}

impl Default for BvpConfig {
    fn default() -> Self {
        BvpConfig { l: 30.0, n: 5000, rtol: 1e-13, atol: 1e-10, max_newton_iters: 60 }
    }
}

impl BvpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) || self.n < 100 {
            return Err(Error::InvalidParameter(format!("need L > 0 and N >= 100, got L = {}, N = {}", self.l, self.n)));
        }
        if !(self.atol > 0.0) || !(self.rtol > 0.0) || self.max_newton_iters == 0 {
            return Err(Error::InvalidParameter("tolerances and the iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = 2.0 * self.l / (self.n - 1) as f64;
        (0..self.n).map(|k| -self.l + h * k as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Linear boundary relation `U' = Lambda (U - U_eq)` at one end of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOperator {
    pub side: Side,
    pub equilibrium: (f64, f64),
    /// Eigenvalue selected for the M-mode and the I-mode.
    pub rates: [f64; 2],
    pub lambda: [[f64; 2]; 2],
    /// Rows `r` with `r . (M - M_eq, I - I_eq, M', I') = 0`.
    pub rows: [[f64; 4]; 2],
}

impl BoundaryOperator {
    fn from_lambda(side: Side, equilibrium: (f64, f64), rates: [f64; 2], lambda: [[f64; 2]; 2]) -> Self {
        let rows = [
            [-lambda[0][0], -lambda[0][1], 1.0, 0.0],
            [-lambda[1][0], -lambda[1][1], 0.0, 1.0],
        ];
        BoundaryOperator { side, equilibrium, rates, lambda, rows }
    }
}

/// Roots of `d mu^2 + v mu + r = 0`, ascending.
fn quadratic_roots(d: f64, v: f64, r: f64) -> Result<(f64, f64)> {
    let disc = v * v - 4.0 * d * r;
    if disc < 0.0 {
        return Err(Error::ComplexEigenvalue { re: -v / (2.0 * d), im: (-disc).sqrt() / (2.0 * d) });
    }
    let s = disc.sqrt();
    // avoid cancellation in the smaller-magnitude root
    let q = -0.5 * (v + s);
    let r1 = q / d;
    let r2 = if q != 0.0 { r / q } else { 0.0 };
    Ok(if r1 < r2 { (r1, r2) } else { (r2, r1) })
}

/// Reaction Jacobian `[[dF_M/dM, dF_M/dI], [dF_I/dM, dF_I/dI]]` of the wave system.
fn reaction_jacobian(p: &ModelParams, m: f64, i: f64) -> [[f64; 2]; 2] {
    let (fm, fi) = p.immune_rate_grad(m, i);
    [[i * (1.0 - 2.0 * m), m * (1.0 - m)], [fm / p.delta, fi / p.delta]]
}

fn select_root(side: Side, roots: (f64, f64), r: f64) -> Result<f64> {
    let (lo, hi) = roots;
    let zero_tol = 1e-14;
    match side {
        Side::Left => Ok(hi),
        Side::Right => {
            // slowest genuinely decaying root; a zero root belongs to the equilibrium continuum
            if r.abs() <= zero_tol || hi >= -zero_tol {
                if lo < -zero_tol {
                    Ok(lo)
                } else {
                    Err(Error::Domain("no decaying mode at the right boundary".into()))
                }
            } else {
                Ok(hi)
            }
        }
    }
}

/// Boundary operator at `eq` from the linearisation of the wave system.
///
/// The left end takes the growing root of each component (falling back to
/// the slower decaying root when a component has none), the right end the
/// slowest decaying root. Complex roots signal speeds outside the range
/// where monotone waves exist.
pub fn linearized_bc(eq: &Equilibrium, side: Side, v: f64, p: &ModelParams) -> Result<BoundaryOperator> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("speed must be positive, got {v}")));
    }
    let (m, i) = eq.coords;
    let r = reaction_jacobian(p, m, i);
    if r[0][1] != 0.0 && r[1][0] != 0.0 {
        return Err(Error::Domain(format!("linearisation at ({m}, {i}) is not triangular")));
    }
    let mu_m = select_root(side, quadratic_roots(1.0, v, r[0][0])?, r[0][0])?;
    let mu_i = select_root(side, quadratic_roots(p.d, v, r[1][1])?, r[1][1])?;
    // eigenvectors (1, x) for the M-mode and (y, 1) for the I-mode
    let denom_i = p.d * mu_m * mu_m + v * mu_m + r[1][1];
    let x = if r[1][0] == 0.0 { 0.0 } else { -r[1][0] / denom_i };
    let denom_m = mu_i * mu_i + v * mu_i + r[0][0];
    let y = if r[0][1] == 0.0 { 0.0 } else { -r[0][1] / denom_m };
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Singularity(format!("resonant boundary eigenvalues at ({m}, {i})")));
    }
    let det = 1.0 - x * y;
    // Lambda = P diag(mu) P^{-1}, P = [[1, y], [x, 1]]
    let inv = [[1.0 / det, -y / det], [-x / det, 1.0 / det]];
    let pm = [[mu_m, y * mu_i], [x * mu_m, mu_i]];
    let mut lambda = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            lambda[a][b] = pm[a][0] * inv[0][b] + pm[a][1] * inv[1][b];
        }
    }
    Ok(BoundaryOperator::from_lambda(side, (m, i), [mu_m, mu_i], lambda))
}

/// Speed handling for [`solve_evp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpeedSpec {
    Fixed(f64),
    /// Treat the speed as an unknown, starting from the given value.
    SolveFor(f64),
}

struct Setup {
    q: ModelParams,
    left: Equilibrium,
    right: Equilibrium,
    /// Phase condition: field (0 = M, 1 = I) and level at z = 0.
    phase: (usize, f64),
    /// Component whose right boundary row carries the slack at fixed speed.
    free: usize,
    /// Use the slow-manifold relation for the right I row.
    slow_right_i: bool,
}

fn equilibrium_at(p: &ModelParams, kind: EquilibriumKind) -> Equilibrium {
    match kind {
        EquilibriumKind::FullySaturated => Equilibrium {
            coords: p.e_full(),
            kind,
            stability: Stability::HyperbolicStableNode,
        },
        EquilibriumKind::Transitional => Equilibrium {
            coords: p.e_transition().unwrap_or((0.0, 0.0)),
            kind,
            stability: Stability::HyperbolicSaddle,
        },
        EquilibriumKind::Continuum { m_e } => Equilibrium {
            coords: (m_e, 0.0),
            kind,
            stability: Stability::DegenerateStableNode,
        },
    }
}

fn setup(kind: WaveKind, sigma: f64, delta: f64, p: &ModelParams, fixed: bool) -> Result<Setup> {
    let q = p.with_sigma(sigma)?.with_delta(delta)?;
    let b = q.b();
    let full = equilibrium_at(&q, EquilibriumKind::FullySaturated);
    let origin = equilibrium_at(&q, EquilibriumKind::Continuum { m_e: 0.0 });
    let s = match kind {
        WaveKind::Fptw => {
            let level = if sigma < 1.0 { 1.0 - sigma } else { 0.5 };
            Setup {
                q,
                left: full,
                right: origin,
                phase: (0, level),
                free: 0,
                slow_right_i: fixed && sigma == 1.0,
            }
        }
        WaveKind::Uptw | WaveKind::Lptw => {
            if !(sigma > 1.0) {
                return Err(Error::Domain(format!("{kind:?} needs sigma > 1, got {sigma}")));
            }
            let trans = equilibrium_at(&q, EquilibriumKind::Transitional);
            if kind == WaveKind::Uptw {
                Setup { q, left: full, right: trans, phase: (1, b * (sigma - 0.5)), free: 0, slow_right_i: false }
            } else {
                Setup { q, left: trans, right: origin, phase: (1, 0.5 * b * (sigma - 1.0)), free: 1, slow_right_i: false }
            }
        }
    };
    Ok(s)
}

struct Discretisation {
    n: usize,
    h: f64,
    z: Vec<f64>,
    phase_k: usize,
    phase_w: f64,
}

impl Discretisation {
    fn new(cfg: &BvpConfig) -> Self {
        let z = cfg.grid();
        let h = z[1] - z[0];
        let k = (((0.0 - z[0]) / h).floor() as usize).min(cfg.n - 2);
        let w = (0.0 - z[k]) / h;
        Discretisation { n: cfg.n, h, z, phase_k: k, phase_w: w }
    }
}

/// Scaled residual of the discrete problem. `w` is the speed when
/// `speed_unknown`, otherwise the slack.
fn residual(s: &Setup, d: &Discretisation, x: &[f64], v: f64, slack: f64, out: &mut [f64]) -> Result<f64> {
    let n = d.n;
    let h = d.h;
    let q = &s.q;
    let h2 = h * h;
    for k in 1..n - 1 {
        let (mm, mi, mp) = (x[2 * k - 2], x[2 * k], x[2 * k + 2]);
        let (im, ii, ip) = (x[2 * k - 1], x[2 * k + 1], x[2 * k + 3]);
        out[2 * k] = (mp - 2.0 * mi + mm) + 0.5 * h * v * (mp - mm) + h2 * ii * mi * (1.0 - mi);
        let denom = q.alpha2 * ii + q.beta2 * (1.0 - mi);
        if !(denom > 0.0) {
            return Err(Error::Singularity(format!("immune reaction denominator vanished at z = {}", d.z[k])));
        }
        out[2 * k + 1] = q.delta * (q.d * (ip - 2.0 * ii + im) + 0.5 * h * v * (ip - im)) + h2 * q.immune_rate(mi, ii);
    }
    let ops = boundary_ops(s, v)?;
    for (side, op) in [(Side::Left, &ops.0), (Side::Right, &ops.1)] {
        let (node, deriv) = match side {
            Side::Left => (0, one_sided(x, 0, 1, h)),
            Side::Right => (n - 1, one_sided(x, n - 1, -1, h)),
        };
        let u = [x[2 * node] - op.equilibrium.0, x[2 * node + 1] - op.equilibrium.1];
        for c in 0..2 {
            let row = op.rows[c];
            let mut val = h * (row[0] * u[0] + row[1] * u[1] + row[2] * deriv[0] + row[3] * deriv[1]);
            if side == Side::Right && c == s.free {
                val -= slack;
            }
            out[2 * node + c] = val;
        }
    }
    let (c, level) = s.phase;
    let k = d.phase_k;
    let phase = (1.0 - d.phase_w) * x[2 * k + c] + d.phase_w * x[2 * k + 2 + c] - level;
    Ok(phase)
}

/// Second-order one-sided derivative at `node` looking in direction `dir`.
fn one_sided(x: &[f64], node: usize, dir: isize, h: f64) -> [f64; 2] {
    let k1 = (node as isize + dir) as usize;
    let k2 = (node as isize + 2 * dir) as usize;
    let sgn = dir as f64;
    [
        sgn * (-3.0 * x[2 * node] + 4.0 * x[2 * k1] - x[2 * k2]) / (2.0 * h),
        sgn * (-3.0 * x[2 * node + 1] + 4.0 * x[2 * k1 + 1] - x[2 * k2 + 1]) / (2.0 * h),
    ]
}

fn boundary_ops(s: &Setup, v: f64) -> Result<(BoundaryOperator, BoundaryOperator)> {
    let left = linearized_bc(&s.left, Side::Left, v, &s.q)?;
    let mut right = linearized_bc(&s.right, Side::Right, v, &s.q)?;
    if s.slow_right_i {
        right.rows[1] = [-s.q.b(), 1.0, 0.0, 0.0];
    }
    Ok((left, right))
}

fn assemble(s: &Setup, d: &Discretisation, x: &[f64], v: f64, a: &mut BandMatrix) -> Result<()> {
    let n = d.n;
    let h = d.h;
    let q = &s.q;
    let h2 = h * h;
    a.clear();
    for k in 1..n - 1 {
        let (rm, ri) = (2 * k, 2 * k + 1);
        let (mi, ii) = (x[2 * k], x[2 * k + 1]);
        a.add(rm, 2 * k - 2, 1.0 - 0.5 * h * v);
        a.add(rm, 2 * k, -2.0 + h2 * ii * (1.0 - 2.0 * mi));
        a.add(rm, 2 * k + 1, h2 * mi * (1.0 - mi));
        a.add(rm, 2 * k + 2, 1.0 + 0.5 * h * v);
        let (fm, fi) = q.immune_rate_grad(mi, ii);
        a.add(ri, 2 * k - 1, q.delta * (q.d - 0.5 * h * v));
        a.add(ri, 2 * k, h2 * fm);
        a.add(ri, 2 * k + 1, -2.0 * q.delta * q.d + h2 * fi);
        a.add(ri, 2 * k + 3, q.delta * (q.d + 0.5 * h * v));
    }
    let ops = boundary_ops(s, v)?;
    for (side, op) in [(Side::Left, &ops.0), (Side::Right, &ops.1)] {
        let (node, dir): (usize, isize) = match side {
            Side::Left => (0, 1),
            Side::Right => (n - 1, -1),
        };
        let k1 = (node as isize + dir) as usize;
        let k2 = (node as isize + 2 * dir) as usize;
        let sgn = dir as f64;
        for c in 0..2 {
            let row = op.rows[c];
            let r = 2 * node + c;
            for comp in 0..2 {
                a.add(r, 2 * node + comp, h * row[comp]);
                let g = row[2 + comp] * sgn * 0.5;
                a.add(r, 2 * node + comp, -3.0 * g);
                a.add(r, 2 * k1 + comp, 4.0 * g);
                a.add(r, 2 * k2 + comp, -g);
            }
        }
    }
    Ok(())
}

fn norm_inf(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solve one of the exact wave problems by damped Newton iteration.
///
/// For [`SpeedSpec::SolveFor`] the speed is an unknown closed by the phase
/// condition `M(0) = 1 - sigma` (`1/2` at `sigma = 1`). For a fixed speed the
/// translation is fixed by `I(0)` at the mid-plateau level and a slack frees
/// the right boundary row of the component whose tail is not determined by
/// the speed.
pub fn solve_evp(
    kind: WaveKind,
    sigma: f64,
    delta: f64,
    p: &ModelParams,
    speed: SpeedSpec,
    cfg: &BvpConfig,
    guess: &WaveProfile,
) -> Result<WaveProfile> {
    cfg.validate()?;
    let fixed = matches!(speed, SpeedSpec::Fixed(_));
    let result = solve_inner(kind, sigma, delta, p, speed, cfg, guess, fixed);
    match (kind, result) {
        (WaveKind::Fptw, Err(e)) if sigma > 1.0 => {
            Err(Error::Nonexistence(format!("no full-transition wave at sigma = {sigma} > 1 ({e})")))
        }
        (_, r) => r,
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_inner(
    kind: WaveKind,
    sigma: f64,
    delta: f64,
    p: &ModelParams,
    speed: SpeedSpec,
    cfg: &BvpConfig,
    guess: &WaveProfile,
    fixed: bool,
) -> Result<WaveProfile> {
    let s = setup(kind, sigma, delta, p, fixed)?;
    let d = Discretisation::new(cfg);
    let n = d.n;
    let mut x = vec![0.0; 2 * n];
    for (k, &z) in d.z.iter().enumerate() {
        let (m, i) = guess.sample(z);
        x[2 * k] = m;
        x[2 * k + 1] = i;
    }
    if kind == WaveKind::Lptw {
        (0..n).for_each(|k| x[2 * k] = 0.0);
    }
    let (mut v, mut slack) = match speed {
        SpeedSpec::Fixed(v) => (v, 0.0),
        SpeedSpec::SolveFor(v) => (v, 0.0),
    };
    if !(v > 0.0) {
        return Err(Error::InvalidParameter(format!("speed must be positive, got {v}")));
    }
    let mut a = BandMatrix::new(2 * n, 5, 5);
    let mut r = vec![0.0; 2 * n];
    let mut r_trial = vec![0.0; 2 * n];
    let mut phase = residual(&s, &d, &x, v, slack, &mut r)?;
    let mut norm = norm_inf(&r).max(phase.abs());
    let mut iterations = 0;
    while norm > cfg.atol {
        if iterations >= cfg.max_newton_iters {
            return Err(Error::ResidualStall { iterations, residual: norm });
        }
        iterations += 1;
        assemble(&s, &d, &x, v, &mut a)?;
        // border column: derivative of the residual with respect to the extra unknown
        let mut col = vec![0.0; 2 * n];
        if fixed {
            col[2 * (n - 1) + s.free] = -1.0;
        } else {
            let dv = 1e-7 * v.max(1e-3);
            residual(&s, &d, &x, v + dv, slack, &mut r_trial)?;
            for (c, (rt, r0)) in col.iter_mut().zip(r_trial.iter().zip(&r)) {
                *c = (rt - r0) / dv;
            }
        }
        let mut row = vec![0.0; 2 * n];
        let (pc, _) = s.phase;
        row[2 * d.phase_k + pc] = 1.0 - d.phase_w;
        row[2 * d.phase_k + 2 + pc] = d.phase_w;
        a.factor()?;
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let (dx, dw) = solve_bordered(&a, &col, &row, 0.0, &neg_r, -phase)?;
        // damped update
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + lambda * b).collect();
            let (vt, st) = if fixed { (v, slack + lambda * dw) } else { (v + lambda * dw, slack) };
            if vt > 0.0 {
                if let Ok(pt) = residual(&s, &d, &xt, vt, st, &mut r_trial) {
                    let nt = norm_inf(&r_trial).max(pt.abs());
                    if nt.is_finite() && (nt < norm || nt <= cfg.atol) {
                        x = xt;
                        v = vt;
                        slack = st;
                        std::mem::swap(&mut r, &mut r_trial);
                        phase = pt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence { iterations, residual: norm });
        }
    }
    let _ = slack;
    let m: Vec<f64> = (0..n).map(|k| x[2 * k]).collect();
    let i: Vec<f64> = (0..n).map(|k| x[2 * k + 1]).collect();
    if m.iter().chain(&i).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { field: "profile", t: 0.0 });
    }
    Ok(WaveProfile { z: d.z, m, i, speed: v, kind, sigma, delta, residual: Some(norm) })
}

/// Property check for converged profiles: monotone on the interior and
/// inside the bounds of the wave family.
pub fn check_profile(profile: &WaveProfile, p: &ModelParams) -> ProfileCheck {
    let tol = MONOTONE_TOL;
    let monotone = profile.is_monotone_decreasing(tol, MONOTONE_INTERIOR);
    let q = p.with_sigma(profile.sigma).unwrap_or(*p);
    let top = q.b() * profile.sigma;
    let in_bounds = profile.m.iter().all(|&m| m > -tol && m < 1.0 + tol)
        && profile.i.iter().all(|&i| i > -tol && i < top + tol);
    let m_zero = profile.kind != WaveKind::Lptw || profile.m.iter().all(|m| m.abs() <= 1e-10);
    ProfileCheck { monotone, in_bounds, m_zero }
}

/// Tolerance of the discrete-derivative monotonicity test.
pub const MONOTONE_TOL: f64 = 1e-8;
/// Fraction of the grid (centred) on which monotonicity is tested.
pub const MONOTONE_INTERIOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileCheck {
    pub monotone: bool,
    pub in_bounds: bool,
    /// `M` vanishes identically (trivially true except for lower-transition waves).
    pub m_zero: bool,
}

impl ProfileCheck {
    pub fn ok(&self) -> bool {
        self.monotone && self.in_bounds && self.m_zero
    }
}

/// Leading-order initial guess for the exact problem at speed `v` (native
/// scalar speed for the transition families is derived from `v`).
pub fn leading_order_guess(kind: WaveKind, sigma: f64, delta: f64, p: &ModelParams, v: Option<f64>) -> Result<WaveProfile> {
    let q = p.with_sigma(sigma)?.with_delta(delta)?;
    match kind {
        WaveKind::Fptw if sigma < 1.0 => Ok(solve_mvp1_speed(sigma, &q, 1e-10)?.profile),
        WaveKind::Fptw if sigma == 1.0 => {
            let vm = vstar_sigma_one(&q);
            let v = v.unwrap_or(vm).max(vm * (1.0 + 1e-8));
            family_member(ScalarKind::Mvp2, v, 1.0, &q)
        }
        WaveKind::Fptw => Err(Error::Nonexistence(format!("no full-transition wave at sigma = {sigma} > 1"))),
        WaveKind::Uptw | WaveKind::Lptw => {
            let scalar = if kind == WaveKind::Uptw { ScalarKind::Mvp4 } else { ScalarKind::Mvp3 };
            let r = min_speed_family(scalar, sigma, &q, 1e-6)?;
            if let Some(v) = v {
                let native = v * r.native_speed / r.speed;
                if native > r.native_speed {
                    return family_member(scalar, native, sigma, &q).map(|mut w| {
                        w.delta = delta;
                        w
                    });
                }
            }
            Ok(r.profile)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinSpeedResult {
    pub v_m: f64,
    pub profile: WaveProfile,
    /// Last monotone and first non-monotone speeds.
    pub bracket: (f64, f64),
    /// Every speed tried with whether it produced a monotone wave.
    pub history: Vec<(f64, bool)>,
}

/// Minimum speed of a wave family: decrease the speed from 1.5 times the
/// leading-order value until the converged profile stops being monotone,
/// then bisect between the last monotone and the first failing speed.
pub fn min_speed_search(kind: WaveKind, sigma: f64, delta: f64, p: &ModelParams, cfg: &BvpConfig) -> Result<MinSpeedResult> {
    let q = p.with_sigma(sigma)?.with_delta(delta)?;
    let v_ref = match kind {
        WaveKind::Fptw if sigma == 1.0 => vstar_sigma_one(&q),
        WaveKind::Fptw => {
            return Err(Error::Domain(format!(
                "minimum-speed search applies to wave families; sigma = {sigma} has a unique full-transition speed"
            )))
        }
        WaveKind::Uptw => uptw_min_speed(sigma, &q)?,
        WaveKind::Lptw => lptw_min_speed(sigma, delta, &q)?,
    };
    let attempt = |v: f64, seed: &WaveProfile| -> Option<WaveProfile> {
        let w = solve_evp(kind, sigma, delta, &q, SpeedSpec::Fixed(v), cfg, seed).ok()?;
        let c = check_profile(&w, &q);
        c.ok().then_some(w)
    };
    let mut v = 1.5 * v_ref;
    let start_guess = leading_order_guess(kind, sigma, delta, &q, Some(v))?;
    let mut history = Vec::new();
    let mut good = match attempt(v, &start_guess) {
        Some(w) => w,
        None => {
            return Err(Error::Continuation(format!("no monotone wave at the starting speed {v}")));
        }
    };
    history.push((v, true));
    let step = 0.05 * v_ref;
    let mut v_good = v;
    let v_bad = loop {
        v -= step;
        if v <= 0.0 {
            return Err(Error::Continuation("continuation reached zero speed without losing monotonicity".into()));
        }
        match attempt(v, &good) {
            Some(w) => {
                history.push((v, true));
                good = w;
                v_good = v;
            }
            None => {
                history.push((v, false));
                break v;
            }
        }
    };
    let (mut lo, mut hi) = (v_bad, v_good);
    while hi - lo > 1e-5 * v_ref {
        let mid = 0.5 * (lo + hi);
        match attempt(mid, &good) {
            Some(w) => {
                history.push((mid, true));
                good = w;
                hi = mid;
            }
            None => {
                history.push((mid, false));
                lo = mid;
            }
        }
    }
    Ok(MinSpeedResult { v_m: hi, profile: good, bracket: (hi, lo), history })
}

/// Full-transition wave with the speed as an unknown, seeded by the
/// leading-order front.
pub fn solve_fptw(sigma: f64, delta: f64, p: &ModelParams, cfg: &BvpConfig) -> Result<WaveProfile> {
    let guess = leading_order_guess(WaveKind::Fptw, sigma, delta, p, None)?;
    solve_evp(WaveKind::Fptw, sigma, delta, p, SpeedSpec::SolveFor(guess.speed), cfg, &guess)
}

/// Full-transition wave at a small `delta` reached by continuation from a larger one.
pub fn solve_fptw_continued(sigma: f64, deltas: &[f64], p: &ModelParams, cfg: &BvpConfig) -> Result<Vec<WaveProfile>> {
    let mut out: Vec<WaveProfile> = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let w = match out.last() {
            Some(prev) => solve_evp(WaveKind::Fptw, sigma, delta, p, SpeedSpec::SolveFor(prev.speed), cfg, prev)
                .or_else(|_| solve_fptw(sigma, delta, p, cfg))?,
            None => solve_fptw(sigma, delta, p, cfg)?,
        };
        out.push(w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma: f64, delta: f64) -> ModelParams {
        ModelParams::unit_rates(sigma, delta).unwrap()
    }

    #[test]
    fn origin_operator_has_rate_minus_v_for_m() {
        let p = params(0.5, 0.05);
        let eq = equilibrium_at(&p, EquilibriumKind::Continuum { m_e: 0.0 });
        let op = linearized_bc(&eq, Side::Right, 0.3, &p).unwrap();
        assert!((op.rates[0] + 0.3).abs() < 1e-14);
        assert!(op.rates[1] < 0.0);
        assert_eq!(op.lambda[0][1], 0.0);
        assert_eq!(op.lambda[1][0], 0.0);
    }

    #[test]
    fn transitional_operator_matches_rescaled_rate() {
        let sigma = 4.0;
        let p = params(sigma, 0.05);
        let eq = equilibrium_at(&p, EquilibriumKind::Transitional);
        let v = 12.0;
        let op = linearized_bc(&eq, Side::Left, v, &p).unwrap();
        let c = p.derived().c_sigma_delta.unwrap();
        let vp = v / (p.d * c);
        let gamma = p.derived().gamma_sigma.unwrap();
        let mu = ((vp * vp + 4.0 / (1.0 + gamma)).sqrt() - vp) / 2.0;
        assert!((op.rates[1] / c - mu).abs() < 1e-12, "{} vs {mu}", op.rates[1] / c);
        // below the linear spreading speed the M-mode turns oscillatory
        let slow = 2.0 * (p.b() * (sigma - 1.0)).sqrt();
        assert!(matches!(
            linearized_bc(&eq, Side::Right, 0.99 * slow, &p),
            Err(Error::ComplexEigenvalue { .. })
        ));
    }

    #[test]
    fn full_state_is_left_unstable() {
        for sigma in [0.5, 1.0, 4.0] {
            let p = params(sigma, 0.05);
            let eq = equilibrium_at(&p, EquilibriumKind::FullySaturated);
            let op = linearized_bc(&eq, Side::Left, 0.4, &p).unwrap();
            assert!(op.rates.iter().all(|&r| r > 0.0));
        }
    }

    #[test]
    fn operator_reproduces_eigenvectors() {
        let p = params(4.0, 0.05);
        let eq = equilibrium_at(&p, EquilibriumKind::FullySaturated);
        let v = 1.6;
        let op = linearized_bc(&eq, Side::Left, v, &p).unwrap();
        let r = reaction_jacobian(&p, 1.0, p.b() * 4.0);
        // Lambda^2 U + v D^-1 Lambda U + D^-1 R U = 0 for every U
        for u in [[1.0, 0.0], [0.0, 1.0]] {
            let lu = [
                op.lambda[0][0] * u[0] + op.lambda[0][1] * u[1],
                op.lambda[1][0] * u[0] + op.lambda[1][1] * u[1],
            ];
            let llu = [
                op.lambda[0][0] * lu[0] + op.lambda[0][1] * lu[1],
                op.lambda[1][0] * lu[0] + op.lambda[1][1] * lu[1],
            ];
            let res_m = llu[0] + v * lu[0] + r[0][0] * u[0] + r[0][1] * u[1];
            let res_i = p.d * llu[1] + v * lu[1] + r[1][0] * u[0] + r[1][1] * u[1];
            assert!(res_m.abs() < 1e-9 && res_i.abs() < 1e-9, "{res_m} {res_i}");
        }
    }

    #[test]
    fn lptw_fixed_speed_is_second_order() {
        let sigma = 4.0;
        let delta = 0.5;
        let p = params(sigma, delta);
        let v = 1.2 * lptw_min_speed(sigma, delta, &p).unwrap();
        let guess = leading_order_guess(WaveKind::Lptw, sigma, delta, &p, Some(v)).unwrap();
        let solve = |n: usize| {
            let cfg = BvpConfig { l: 20.0, n, ..BvpConfig::default() };
            solve_evp(WaveKind::Lptw, sigma, delta, &p, SpeedSpec::Fixed(v), &cfg, &guess).unwrap()
        };
        let fine = solve(1601);
        let err = |w: &WaveProfile| {
            w.z.iter().zip(&w.i).map(|(&z, &i)| (i - fine.sample(z).1).abs()).fold(0.0, f64::max)
        };
        let e1 = err(&solve(201));
        let e2 = err(&solve(401));
        let ratio = e1 / e2;
        assert!(ratio > 3.0 && ratio < 5.0, "refinement ratio {ratio}");
        assert!(fine.m.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn fptw_above_one_is_reported_as_nonexistent() {
        let p = params(1.5, 0.05);
        let guess = leading_order_guess(WaveKind::Uptw, 1.5, 0.05, &p, None).unwrap();
        let cfg = BvpConfig { n: 1000, ..BvpConfig::default() };
        let r = solve_evp(WaveKind::Fptw, 1.5, 0.05, &p, SpeedSpec::SolveFor(0.5), &cfg, &guess);
        match r {
            Err(Error::Nonexistence(_)) => {}
            Ok(w) => assert!(!check_profile(&w, &p).ok()),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
