//! Method-of-lines simulation of the reduced and full systems, front
//! tracking and the comparison bounds for the initial value problem.
//!
//! Diffusion is implicit (one tridiagonal solve per component and step with
//! homogeneous Neumann ends). The mutant and immune reactions are explicit;
//! the fast barrier/bacteria reactions of the full system are linear in
//! `(rho, B)` and are taken implicitly.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{ls_slope, Tridiagonal};

/// Containment slack for the invariant region.
pub const CONTAINMENT_TOL: f64 = 1e-8;
/// Minimum distance a front should keep from the domain ends.
pub const BOUNDARY_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub dx: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 3 || !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidParameter(format!("bad grid [{x_min}, {x_max}] with {n} points")));
        }
        Ok(Grid1D { x_min, x_max, n, dx: (x_max - x_min) / (n - 1) as f64 })
    }

    /// Grid with spacing as close as possible to `dx`.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {dx}")));
        }
        let n = ((x_max - x_min) / dx).round() as usize + 1;
        Self::new(x_min, x_max, n)
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x_min + self.dx * k as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.x(k)).collect()
    }
}

/// Spatial fields `(M, I)` or `(M, I, rho, B)` at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub grid: Grid1D,
    pub t: f64,
    pub fields: Vec<Vec<f64>>,
}

impl FieldState {
    /// Front-like data `(M0 H(-x), I0 H(-x))`, with the jump spread over one cell.
    pub fn heaviside(grid: Grid1D, m0: f64, i0: f64) -> Result<Self> {
        for (name, v) in [("M0", m0), ("I0", i0)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
            }
        }
        let ramp: Vec<f64> = grid.points().iter().map(|&x| (0.5 - x / grid.dx).clamp(0.0, 1.0)).collect();
        Ok(FieldState {
            grid,
            t: 0.0,
            fields: vec![ramp.iter().map(|r| m0 * r).collect(), ramp.iter().map(|r| i0 * r).collect()],
        })
    }

    /// Four-component data with `rho = B` on the slow manifold, or at the
    /// given constants behind the front.
    pub fn heaviside_full(grid: Grid1D, m0: f64, i0: f64, p: &ModelParams, rho_b: Option<(f64, f64)>) -> Result<Self> {
        let mut s = Self::heaviside(grid, m0, i0)?;
        let (m, i) = (s.fields[0].clone(), s.fields[1].clone());
        let mut rho = Vec::with_capacity(grid.n);
        let mut bac = Vec::with_capacity(grid.n);
        for k in 0..grid.n {
            match rho_b {
                Some((r0, b0)) => {
                    let w = if m0 > 0.0 { m[k] / m0 } else if i0 > 0.0 { i[k] / i0 } else { 0.0 };
                    rho.push(r0 * w);
                    bac.push(b0 * w);
                }
                None => {
                    let v = p.slow_manifold_b(m[k], i[k])?;
                    rho.push(v);
                    bac.push(v);
                }
            }
        }
        s.fields.push(rho);
        s.fields.push(bac);
        Ok(s)
    }

    pub fn m(&self) -> &[f64] {
        &self.fields[0]
    }

    pub fn i(&self) -> &[f64] {
        &self.fields[1]
    }

    /// Whether every value lies in `[0, 1]` (and, for two fields, in `R(delta)`).
    pub fn contained(&self, p: &ModelParams, tol: f64) -> bool {
        let boxed = self.fields.iter().all(|f| f.iter().all(|&v| v >= -tol && v <= 1.0 + tol));
        if self.fields.len() == 2 {
            boxed && (0..self.grid.n).all(|k| p.in_region(self.fields[0][k], self.fields[1][k], tol))
        } else {
            boxed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Imex,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub scheme: Scheme,
    /// Interval between stored snapshots.
    pub output_interval: f64,
}

impl SimOptions {
    pub fn imex(dt: f64, output_interval: f64) -> Self {
        SimOptions { dt, scheme: Scheme::Imex, output_interval }
    }

    /// Largest stable step that divides `output_interval` evenly.
    pub fn aligned(p: &ModelParams, grid: &Grid1D, scheme: Scheme, output_interval: f64) -> Self {
        let limit = stable_dt(p, grid, scheme);
        let steps = (output_interval / limit).ceil().max(1.0);
        SimOptions { dt: output_interval / steps, scheme, output_interval }
    }

    fn steps_per_output(&self) -> usize {
        ((self.output_interval / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub snapshots: Vec<FieldState>,
    /// Number of grid values moved back into the invariant region.
    pub projections: usize,
    pub warnings: Vec<String>,
}

impl Simulation {
    pub fn last(&self) -> &FieldState {
        self.snapshots.last().expect("at least the initial snapshot")
    }
}

/// Largest time step allowed for `scheme`.
pub fn stable_dt(p: &ModelParams, grid: &Grid1D, scheme: Scheme) -> f64 {
    let reaction = p.delta / (10.0 * reaction_slope(p));
    match scheme {
        Scheme::Imex => reaction,
        Scheme::Explicit => reaction.min(grid.dx * grid.dx / (2.0 * p.d.max(1.0))),
    }
}

/// Bound on `|df/dI|` and `|df/dM|` times `delta` over `R(delta)`, scaled to
/// the `delta^-1` time scale (at least one).
fn reaction_slope(p: &ModelParams) -> f64 {
    // f_I at I = 0 and at e_F bound the immune Jacobian on the attracting region
    let a = p.a();
    let b = p.b();
    let s = p.sigma();
    let at_origin = (a * b * (s - 1.0).abs()) / p.beta2;
    let at_full = a * b * s / (p.alpha2 * b * s);
    at_origin.max(at_full).max(1.0)
}

fn check_dt(p: &ModelParams, grid: &Grid1D, opts: &SimOptions) -> Result<()> {
    let limit = stable_dt(p, grid, opts.scheme);
    if !(opts.dt > 0.0) || opts.dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt: opts.dt, limit });
    }
    if !(opts.output_interval > 0.0) {
        return Err(Error::InvalidParameter("output interval must be positive".into()));
    }
    Ok(())
}

/// `(1 - dt c Laplacian + dt k)` with Neumann ends.
fn implicit_operator(n: usize, r: f64, extra: &[f64]) -> Result<Tridiagonal> {
    let mut lower = vec![-r; n];
    let mut upper = vec![-r; n];
    let mut diag: Vec<f64> = extra.iter().map(|k| 1.0 + 2.0 * r + k).collect();
    upper[0] = -2.0 * r;
    lower[n - 1] = -2.0 * r;
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    if diag.len() != n {
        diag.resize(n, 1.0 + 2.0 * r);
    }
    Tridiagonal::new(&lower, &diag, &upper)
}

fn laplacian(u: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    let inv = 1.0 / (dx * dx);
    out[0] = 2.0 * (u[1] - u[0]) * inv;
    out[n - 1] = 2.0 * (u[n - 2] - u[n - 1]) * inv;
    for k in 1..n - 1 {
        out[k] = (u[k + 1] - 2.0 * u[k] + u[k - 1]) * inv;
    }
}

fn check_finite(fields: &[Vec<f64>], names: &[&'static str], t: f64) -> Result<()> {
    for (f, name) in fields.iter().zip(names) {
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { field: name, t });
        }
    }
    Ok(())
}

fn number_of_steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!("t_end must be non-negative, got {t_end}")));
    }
    Ok((t_end / dt).round() as usize)
}

/// Simulate the reduced two-component system from `init`.
pub fn simulate_lds(init: &FieldState, p: &ModelParams, t_end: f64, opts: &SimOptions) -> Result<Simulation> {
    if init.fields.len() != 2 {
        return Err(Error::InvalidParameter("the reduced system needs exactly two fields".into()));
    }
    p.validate()?;
    let grid = init.grid;
    check_dt(p, &grid, opts)?;
    if !init.contained(p, CONTAINMENT_TOL) {
        return Err(Error::Domain("initial data outside R(delta)".into()));
    }
    let n = grid.n;
    let dt = opts.dt;
    let steps = number_of_steps(t_end, dt)?;
    let mut m = init.fields[0].clone();
    let mut i = init.fields[1].clone();
    let ops = match opts.scheme {
        Scheme::Imex => {
            let r = dt / (grid.dx * grid.dx);
            Some((implicit_operator(n, r, &vec![0.0; n])?, implicit_operator(n, r * p.d, &vec![0.0; n])?))
        }
        Scheme::Explicit => None,
    };
    let mut lap_m = vec![0.0; n];
    let mut lap_i = vec![0.0; n];
    let mut snapshots = vec![FieldState { grid, t: init.t, fields: vec![m.clone(), i.clone()] }];
    let every = opts.steps_per_output();
    let mut projections = 0;
    for step in 1..=steps {
        let t = init.t + dt * step as f64;
        if ops.is_none() {
            laplacian(&m, grid.dx, &mut lap_m);
            laplacian(&i, grid.dx, &mut lap_i);
        }
        for k in 0..n {
            let (mk, ik) = (m[k], i[k]);
            let rm = ik * mk * (1.0 - mk);
            let ri = p.immune_rate(mk, ik) / p.delta;
            if ops.is_some() {
                m[k] = mk + dt * rm;
                i[k] = ik + dt * ri;
            } else {
                m[k] = mk + dt * (lap_m[k] + rm);
                i[k] = ik + dt * (p.d * lap_i[k] + ri);
            }
        }
        if let Some((om, oi)) = &ops {
            om.solve(&mut m);
            oi.solve(&mut i);
        }
        for k in 0..n {
            if !p.in_region(m[k], i[k], CONTAINMENT_TOL) {
                let (pm, pi, moved) = p.project_to_region(m[k], i[k]);
                if moved {
                    projections += 1;
                }
                m[k] = pm;
                i[k] = pi;
            }
        }
        check_finite(&[m.clone(), i.clone()], &["M", "I"], t)?;
        if step % every == 0 || step == steps {
            snapshots.push(FieldState { grid, t, fields: vec![m.clone(), i.clone()] });
        }
    }
    let mut sim = Simulation { snapshots, projections, warnings: Vec::new() };
    if projections > 0 {
        sim.warnings.push(format!("{projections} grid values projected back into R(delta)"));
    }
    boundary_warnings(&mut sim);
    Ok(sim)
}

/// Simulate the full four-component system from `init`.
pub fn simulate_rds(init: &FieldState, p: &ModelParams, t_end: f64, opts: &SimOptions) -> Result<Simulation> {
    if init.fields.len() != 4 {
        return Err(Error::InvalidParameter("the full system needs exactly four fields".into()));
    }
    p.validate_full_model()?;
    let grid = init.grid;
    if opts.scheme != Scheme::Imex {
        return Err(Error::InvalidParameter("the full system is only integrated with the IMEX scheme".into()));
    }
    check_dt(p, &grid, opts)?;
    if !init.contained(p, CONTAINMENT_TOL) {
        return Err(Error::Domain("initial data outside [0, 1]^4".into()));
    }
    let n = grid.n;
    let dt = opts.dt;
    let steps = number_of_steps(t_end, dt)?;
    let r = dt / (grid.dx * grid.dx);
    let zero = vec![0.0; n];
    let op_m = implicit_operator(n, r, &zero)?;
    let op_i = implicit_operator(n, r * p.d, &zero)?;
    let kb = dt / p.epsilon;
    let op_b = implicit_operator(n, r * p.d_b, &vec![kb; n])?;
    let [mut m, mut i, mut rho, mut bac]: [Vec<f64>; 4] =
        [init.fields[0].clone(), init.fields[1].clone(), init.fields[2].clone(), init.fields[3].clone()];
    let mut snapshots = vec![FieldState { grid, t: init.t, fields: vec![m.clone(), i.clone(), rho.clone(), bac.clone()] }];
    let every = opts.steps_per_output();
    let mut projections = 0;
    let mut k_rho = vec![0.0; n];
    for step in 1..=steps {
        let t = init.t + dt * step as f64;
        for k in 0..n {
            let (mk, ik, bk) = (m[k], i[k], bac[k]);
            m[k] = mk + dt * ik * mk * (1.0 - mk);
            i[k] = ik + dt * (bk - (bk + p.beta1) * ik) / p.delta;
            k_rho[k] = kb * (p.alpha2 * ik + p.beta2 * (1.0 - mk));
            rho[k] += kb * p.alpha2 * ik;
        }
        op_m.solve(&mut m);
        op_i.solve(&mut i);
        implicit_operator(n, r * p.d_rho, &k_rho)?.solve(&mut rho);
        for k in 0..n {
            bac[k] += kb * rho[k];
        }
        op_b.solve(&mut bac);
        for f in [&mut m, &mut i, &mut rho, &mut bac] {
            for v in f.iter_mut() {
                if *v < -CONTAINMENT_TOL || *v > 1.0 + CONTAINMENT_TOL {
                    projections += 1;
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        check_finite(&[m.clone(), i.clone(), rho.clone(), bac.clone()], &["M", "I", "rho", "B"], t)?;
        if step % every == 0 || step == steps {
            snapshots.push(FieldState { grid, t, fields: vec![m.clone(), i.clone(), rho.clone(), bac.clone()] });
        }
    }
    let mut sim = Simulation { snapshots, projections, warnings: Vec::new() };
    if projections > 0 {
        sim.warnings.push(format!("{projections} grid values clipped back into [0, 1]"));
    }
    boundary_warnings(&mut sim);
    Ok(sim)
}

fn boundary_warnings(sim: &mut Simulation) {
    let last = sim.last().clone();
    let g = last.grid;
    for (f, name) in last.fields.iter().zip(["M", "I", "rho", "B"]) {
        let far = f[g.n - 1];
        let reach = (0..g.n).rev().find(|&k| (f[k] - far).abs() > 1e-3).map(|k| g.x(k));
        if let Some(x) = reach {
            if g.x_max - x < BOUNDARY_MARGIN {
                sim.warnings.push(format!("{name} front within {BOUNDARY_MARGIN} of the right boundary at t = {}", last.t));
            }
        }
    }
}

/// Positions of a level crossing over time and the fitted speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub level: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub fitted_speed: Option<f64>,
    /// Trailing fraction of the trace used for the fit.
    pub fit_window: f64,
}

/// Rightmost crossing of `level` by `values` (linear interpolation).
pub fn rightmost_crossing(grid: &Grid1D, values: &[f64], level: f64) -> Option<f64> {
    for k in (1..values.len()).rev() {
        let (a, b) = (values[k - 1] - level, values[k] - level);
        if a == 0.0 {
            return Some(grid.x(k - 1));
        }
        if a * b < 0.0 {
            let s = a / (a - b);
            return Some(grid.x(k - 1) + s * grid.dx);
        }
    }
    None
}

/// Track the rightmost crossing of `level` by field `field` and fit the speed
/// over the trailing `fit_window` fraction of the trace.
pub fn track_front(snapshots: &[FieldState], field: usize, level: f64, fit_window: f64) -> Result<FrontTrace> {
    if !(fit_window > 0.0 && fit_window <= 1.0) {
        return Err(Error::InvalidParameter(format!("fit window must lie in (0, 1], got {fit_window}")));
    }
    let mut times = Vec::new();
    let mut positions = Vec::new();
    for s in snapshots {
        let f = s.fields.get(field).ok_or_else(|| Error::InvalidParameter(format!("no field {field}")))?;
        if let Some(x) = rightmost_crossing(&s.grid, f, level) {
            times.push(s.t);
            positions.push(x);
        }
    }
    let start = ((1.0 - fit_window) * times.len() as f64).floor() as usize;
    let fitted_speed = if times.len() - start >= 2 { ls_slope(&times[start..], &positions[start..]) } else { None };
    Ok(FrontTrace { level, times, positions, fitted_speed, fit_window })
}

/// Maximum violation of each bound over the checked snapshots (non-positive means satisfied).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Which set of bounds was evaluated.
    pub regime: BoundRegime,
    /// `c(M0, sigma)`, sub-threshold regime only.
    pub decay_constant: Option<f64>,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn max_violation(&self) -> f64 {
        self.checks.iter().map(|c| c.max_violation).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundRegime {
    /// `sigma in [delta, 1 - delta^(1/4))`, `M0 < (1 - sigma) - delta^(1/4)`.
    SubThreshold,
    /// `M0 > 1 - sigma` for `sigma <= 1`, or any `M0` for `sigma > 1`.
    Propagating,
}

/// Which set of bounds applies to `(sigma, delta, M0)`.
pub fn bound_regime(p: &ModelParams, m0: f64) -> Result<BoundRegime> {
    let sigma = p.sigma();
    let q = p.delta.powf(0.25);
    if sigma >= p.delta && sigma < 1.0 - q && m0 > 0.0 && m0 < (1.0 - sigma) - q {
        Ok(BoundRegime::SubThreshold)
    } else if (sigma <= 1.0 && m0 > 1.0 - sigma && m0 <= 1.0) || (sigma > 1.0 && m0 > 0.0 && m0 <= 1.0) {
        Ok(BoundRegime::Propagating)
    } else {
        Err(Error::RegimeMismatch(format!(
            "(sigma, delta, M0) = ({sigma}, {}, {m0}) lies in neither bound regime",
            p.delta
        )))
    }
}

/// Evaluate the comparison bounds of the initial value problem on every
/// snapshot with `t > 0`. In the propagating regime the upper bound on `M`
/// uses a scalar Fisher simulation on the same grid and the lower bound is
/// the heat solution `0.5 M0 erfc(x / 2 sqrt(t))`.
pub fn check_appendix_bounds(snapshots: &[FieldState], p: &ModelParams, m0: f64, i0: f64) -> Result<BoundReport> {
    let regime = bound_regime(p, m0)?;
    let sigma = p.sigma();
    let viol = |name: &str, v: f64, acc: &mut Vec<BoundCheck>| match acc.iter_mut().find(|c| c.name == name) {
        Some(c) => c.max_violation = c.max_violation.max(v),
        None => acc.push(BoundCheck { name: name.to_string(), max_violation: v }),
    };
    let mut checks = Vec::new();
    let snaps: Vec<&FieldState> = snapshots.iter().filter(|s| s.t > 0.0).collect();
    match regime {
        BoundRegime::SubThreshold => {
            let c = p.decay_constant(m0);
            for s in &snaps {
                let t = s.t;
                let decay = (-c * t / p.delta).exp();
                let grow = (i0 * p.delta / c * (1.0 - decay)).exp();
                for k in 0..s.grid.n {
                    let x = s.grid.x(k);
                    let (m, i) = (s.fields[0][k], s.fields[1][k]);
                    let em = 0.5 * erfc(x / (2.0 * t.sqrt()));
                    let ei = 0.5 * erfc(x / (2.0 * (p.d * t).sqrt()));
                    viol("I upper", i - i0 * decay * ei, &mut checks);
                    viol("M lower", m0 * em - m, &mut checks);
                    viol("M upper", m - m0 * grow * em, &mut checks);
                    viol("I positive", -i, &mut checks);
                }
            }
            Ok(BoundReport { regime, decay_constant: Some(c), checks })
        }
        BoundRegime::Propagating => {
            let fisher = fisher_reference(snapshots)?;
            let top = p.b() * sigma;
            let rate = p.a() / (p.alpha2 * p.delta);
            for s in &snaps {
                let t = s.t;
                let u = fisher
                    .iter()
                    .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
                    .map(|(_, u)| u)
                    .expect("reference has snapshots");
                for k in 0..s.grid.n {
                    let x = s.grid.x(k);
                    let (m, i) = (s.fields[0][k], s.fields[1][k]);
                    viol("M lower", 0.5 * m0 * erfc(x / (2.0 * t.sqrt())) - m, &mut checks);
                    viol("M upper", m - u[k], &mut checks);
                    let bound = top + (0.5 * i0 * erfc(x / (2.0 * t.sqrt())) - top) * (-rate * t).exp();
                    viol("I upper", i - bound, &mut checks);
                    viol("I positive", -i, &mut checks);
                }
            }
            Ok(BoundReport { regime, decay_constant: None, checks })
        }
    }
}

/// Fisher solution `u_t = u_xx + u (1 - u)` from `H(-x)` at the snapshot times.
fn fisher_reference(snapshots: &[FieldState]) -> Result<Vec<(f64, Vec<f64>)>> {
    let first = snapshots.first().ok_or_else(|| Error::InvalidParameter("no snapshots".into()))?;
    let grid = first.grid;
    let dt = (0.2 * grid.dx * grid.dx).min(1e-3);
    let op = implicit_operator(grid.n, dt / (grid.dx * grid.dx), &vec![0.0; grid.n])?;
    let mut u: Vec<f64> = grid.points().iter().map(|&x| (0.5 - x / grid.dx).clamp(0.0, 1.0)).collect();
    let mut t = first.t;
    let mut out = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        while t + 0.5 * dt < s.t {
            let h = dt.min(s.t - t);
            for v in u.iter_mut() {
                *v += h * *v * (1.0 - *v);
            }
            if h == dt {
                op.solve(&mut u);
            } else {
                implicit_operator(grid.n, h / (grid.dx * grid.dx), &vec![0.0; grid.n])?.solve(&mut u);
            }
            t += h;
        }
        out.push((s.t, u.clone()));
    }
    Ok(out)
}

/// Sup-norm distance of `M` from `0.5 M0 erfc(x / 2 sqrt(t))`, relative to `M0`.
pub fn diffusion_mismatch(state: &FieldState, m0: f64) -> f64 {
    let t = state.t;
    (0..state.grid.n)
        .map(|k| (state.fields[0][k] - 0.5 * m0 * erfc(state.grid.x(k) / (2.0 * t.sqrt()))).abs() / m0)
        .fold(0.0, f64::max)
}

/// Largest deviation of `(rho, B)` from the slow manifold value `B_i(M, I)`,
/// skipping points within `corner` of `(M, I) = (1, 0)`.
pub fn manifold_deviation(state: &FieldState, p: &ModelParams, corner: f64) -> Result<f64> {
    if state.fields.len() != 4 {
        return Err(Error::InvalidParameter("manifold deviation needs the four-component state".into()));
    }
    let mut worst: f64 = 0.0;
    for k in 0..state.grid.n {
        let (m, i) = (state.fields[0][k], state.fields[1][k]);
        if (1.0 - m).hypot(i) < corner {
            continue;
        }
        let bi = p.slow_manifold_b(m.clamp(0.0, 1.0), i.clamp(0.0, 1.0))?;
        worst = worst.max((state.fields[2][k] - bi).abs()).max((state.fields[3][k] - bi).abs());
    }
    Ok(worst)
}

/// Sup-norm difference of `(M, I)` between two states on the same grid.
pub fn sup_difference(a: &FieldState, b: &FieldState) -> f64 {
    (0..2)
        .flat_map(|f| a.fields[f].iter().zip(&b.fields[f]).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1D {
        Grid1D::with_spacing(-20.0, 20.0, 0.1).unwrap()
    }

    #[test]
    fn crossing_interpolates_linearly() {
        let g = Grid1D::new(0.0, 4.0, 5).unwrap();
        let v = [1.0, 1.0, 0.6, 0.2, 0.0];
        assert!((rightmost_crossing(&g, &v, 0.5).unwrap() - 2.25).abs() < 1e-14);
        assert!(rightmost_crossing(&g, &v, 2.0).is_none());
    }

    #[test]
    fn translating_profile_speed_is_recovered() {
        let g = Grid1D::with_spacing(-10.0, 60.0, 0.05).unwrap();
        let v = 0.75;
        let snaps: Vec<FieldState> = (0..41)
            .map(|k| {
                let t = k as f64;
                let f: Vec<f64> = g.points().iter().map(|&x| 1.0 / (1.0 + (x - v * t).exp())).collect();
                FieldState { grid: g, t, fields: vec![f.clone(), f] }
            })
            .collect();
        let tr = track_front(&snaps, 0, 0.5, 0.5).unwrap();
        assert!((tr.fitted_speed.unwrap() - v).abs() < 1e-6);
        let still: Vec<FieldState> = snaps.iter().map(|s| FieldState { t: s.t, ..snaps[0].clone() }).collect();
        assert!(track_front(&still, 0, 0.5, 0.5).unwrap().fitted_speed.unwrap().abs() < 1e-12);
    }

    #[test]
    fn step_limits_are_enforced() {
        let p = ModelParams::unit_rates(0.75, 0.05).unwrap();
        let init = FieldState::heaviside(grid(), 0.5, 0.5).unwrap();
        let err = simulate_lds(&init, &p, 1.0, &SimOptions::imex(1.0, 0.5)).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
        let explicit = SimOptions { dt: 0.004, scheme: Scheme::Explicit, output_interval: 0.5 };
        assert!(matches!(simulate_lds(&init, &p, 1.0, &explicit), Err(Error::Cfl { .. })));
    }

    #[test]
    fn explicit_and_imex_agree() {
        let p = ModelParams::unit_rates(0.75, 0.05).unwrap();
        let g = grid();
        let init = FieldState::heaviside(g, 0.5, 0.5).unwrap();
        let dt = stable_dt(&p, &g, Scheme::Explicit);
        let a = simulate_lds(&init, &p, 2.0, &SimOptions { dt, scheme: Scheme::Explicit, output_interval: 1.0 }).unwrap();
        let b = simulate_lds(&init, &p, 2.0, &SimOptions::imex(dt, 1.0)).unwrap();
        assert!(sup_difference(a.last(), b.last()) < 5e-3);
        assert_eq!(a.projections, 0);
    }

    #[test]
    fn comparison_ordering_is_preserved() {
        let p = ModelParams::unit_rates(1.25, 0.05).unwrap();
        let g = grid();
        for (lo, hi) in [((0.2, 0.1), (0.4, 0.2)), ((0.5, 0.3), (0.5, 0.6)), ((0.1, 0.5), (0.9, 0.5))] {
            let opts = SimOptions::imex(stable_dt(&p, &g, Scheme::Imex), 1.0);
            let a = simulate_lds(&FieldState::heaviside(g, lo.0, lo.1).unwrap(), &p, 3.0, &opts).unwrap();
            let b = simulate_lds(&FieldState::heaviside(g, hi.0, hi.1).unwrap(), &p, 3.0, &opts).unwrap();
            for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
                assert!(sa.fields[0].iter().zip(&sb.fields[0]).all(|(x, y)| x <= &(y + 1e-9)));
            }
        }
    }

    #[test]
    fn regime_selection() {
        let p = ModelParams::unit_rates(0.5, 1e-4).unwrap();
        assert_eq!(bound_regime(&p, 0.1).unwrap(), BoundRegime::SubThreshold);
        assert_eq!(bound_regime(&p, 0.6).unwrap(), BoundRegime::Propagating);
        assert!(matches!(bound_regime(&p, 0.45), Err(Error::RegimeMismatch(_))));
        assert!((ModelParams::new(1.0, 2.0, 1.0, 0.05, 1.0).unwrap().decay_constant(0.1) - 0.2).abs() < 1e-15);
    }
}
