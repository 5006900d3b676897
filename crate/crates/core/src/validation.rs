//! Acceptance suite: eleven numbered criteria with pinned tolerances.
//!
//! Every criterion computes with [`ValidationOptions::base`] and compares
//! against reference values for unit rates (`alpha2 = beta2 = 1`). Changing
//! the base parameters therefore acts as a negative control.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, Branch, ScalarKind, V0};
use crate::error::{Error, Result};
use crate::evolution::{
    diffusion_mismatch, rightmost_crossing, simulate_lds, simulate_rds, sup_difference, track_front, FieldState, Grid1D,
    Scheme, SimOptions,
};
use crate::model::ModelParams;
use crate::scalarwaves::{self, ExactKind, ShootOutcome, WaveKind};
use crate::systemwaves::{check_profile, min_speed_search, solve_fptw, BvpConfig};

pub const CRITERIA: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Skip the long simulation parts.
    pub skip_slow: bool,
    /// Rates used for every computation. `sigma` and `delta` are set per case.
    pub base: ModelParams,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { skip_slow: false, base: ModelParams::unit_rates(1.0, 0.05).expect("unit rates are valid") }
    }
}

impl ValidationOptions {
    fn params(&self, sigma: f64, delta: f64) -> Result<ModelParams> {
        self.base.with_sigma(sigma)?.with_delta(delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub reference: f64,
    /// Human-readable acceptance rule.
    pub rule: String,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: usize,
    pub title: String,
    pub status: Status,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl CriterionResult {
    /// One-line summary: `[PASS] 1 title (check, check, ...)`.
    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                let mark = match c.status {
                    Status::Pass => "ok",
                    Status::Fail => "FAILED",
                    Status::Skipped => "skipped",
                };
                format!("{} = {} vs {} [{}] {}", c.name, num(c.measured), num(c.reference), c.rule, mark)
            })
            .collect();
        let err = self.error.as_ref().map(|e| format!(" error: {e}")).unwrap_or_default();
        format!("[{tag}] criterion {:>2}: {} ({}){} in {:.1}s", self.id, self.title, parts.join("; "), err, self.seconds)
    }
}

fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.6}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub options: ValidationOptions,
    pub criteria: Vec<CriterionResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> usize {
        self.criteria.iter().filter(|c| c.status == Status::Pass).count()
    }

    pub fn failed(&self) -> usize {
        self.criteria.iter().filter(|c| c.status == Status::Fail).count()
    }
}

struct Checks(Vec<Check>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn push(&mut self, name: &str, measured: f64, reference: f64, rule: String, ok: bool) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.0.push(Check { name: name.to_string(), measured, reference, rule, status });
    }

    fn abs(&mut self, name: &str, measured: f64, reference: f64, tol: f64) {
        self.push(name, measured, reference, format!("|diff| <= {tol:.1e}"), (measured - reference).abs() <= tol);
    }

    fn rel(&mut self, name: &str, measured: f64, reference: f64, tol: f64) {
        let ok = ((measured - reference) / reference).abs() <= tol;
        self.push(name, measured, reference, format!("rel <= {}%", tol * 100.0), ok);
    }

    fn below(&mut self, name: &str, measured: f64, bound: f64) {
        self.push(name, measured, bound, format!("< {bound:e}"), measured < bound);
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.push(name, f64::from(u8::from(ok)), 1.0, "holds".into(), ok);
    }

    fn skip(&mut self, name: &str, reference: f64) {
        self.0.push(Check { name: name.to_string(), measured: f64::NAN, reference, rule: "slow".into(), status: Status::Skipped });
    }
}

const TITLES: [&str; CRITERIA] = [
    "exact speed and waveform at sigma = 1",
    "upper-transition minimum speeds",
    "exact upper-transition waveform at sigma = 1.25",
    "lower-transition minimum speed and speed separation",
    "cut-off Fisher asymptotics",
    "transition-layer universal constant",
    "finite-delta full-transition speed",
    "initial value problem threshold",
    "two-front structure at sigma = 4",
    "slow-manifold reduction",
    "property suites",
];

/// Run one criterion (1-based).
pub fn run_criterion(id: usize, opts: &ValidationOptions) -> CriterionResult {
    let start = Instant::now();
    let mut checks = Checks::new();
    let outcome = match id {
        1 => criterion_1(opts, &mut checks),
        2 => criterion_2(opts, &mut checks),
        3 => criterion_3(opts, &mut checks),
        4 => criterion_4(opts, &mut checks),
        5 => criterion_5(opts, &mut checks),
        6 => criterion_6(opts, &mut checks),
        7 => criterion_7(opts, &mut checks),
        8 => criterion_8(opts, &mut checks),
        9 => criterion_9(opts, &mut checks),
        10 => criterion_10(opts, &mut checks),
        11 => criterion_11(opts, &mut checks),
        _ => Err(Error::InvalidParameter(format!("no criterion {id}"))),
    };
    let checks = checks.0;
    let status = if outcome.is_err() || checks.iter().any(|c| c.status == Status::Fail) {
        Status::Fail
    } else if !checks.is_empty() && checks.iter().all(|c| c.status == Status::Skipped) {
        Status::Skipped
    } else {
        Status::Pass
    };
    CriterionResult {
        id,
        title: TITLES.get(id.wrapping_sub(1)).unwrap_or(&"unknown").to_string(),
        status,
        checks,
        error: outcome.err().map(|e| e.to_string()),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Run every criterion, in parallel.
pub fn run_all(opts: &ValidationOptions) -> ValidationReport {
    let criteria = (1..=CRITERIA).into_par_iter().map(|id| run_criterion(id, opts)).collect();
    ValidationReport { options: *opts, criteria }
}

fn bvp() -> BvpConfig {
    BvpConfig::default()
}

fn criterion_1(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let p = opts.params(1.0, 0.01)?;
    let shoot = scalarwaves::min_speed_family(ScalarKind::Mvp2, 1.0, &p, 1e-8)?;
    c.abs("shooting v_m", shoot.speed, 0.5, 1e-3);
    let search = min_speed_search(WaveKind::Fptw, 1.0, 0.01, &p, &bvp())?;
    c.abs("BVP v_m (delta 0.01)", search.v_m, 0.5, 1e-3);
    // the minimum-speed path is the separatrix, so shoot just above it
    let err = match scalarwaves::shoot_phase_path(ScalarKind::Mvp2, shoot.speed + 1e-8, 1.0, &p)? {
        ShootOutcome::Connection(path) => {
            let reference = ModelParams::unit_rates(1.0, 0.01)?;
            let mut err: f64 = 0.0;
            for (&z, &x) in path.s.iter().zip(&path.chi) {
                err = err.max((x - scalarwaves::exact_waveform(ExactKind::CubicFisherMin, 1.0, z, &reference)?).abs());
            }
            err
        }
        _ => f64::INFINITY,
    };
    c.below("profile sup error", err, 1e-4);
    Ok(())
}

fn criterion_2(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let references = [(1.25, std::f64::consts::FRAC_1_SQRT_2), (1.4, 0.82158383625774922), (2.0, 1.1547005383792515), (4.0, 1.5491933384829668)];
    let found: Vec<Result<f64>> = references
        .par_iter()
        .map(|&(sigma, _)| Ok(min_speed_search(WaveKind::Uptw, sigma, 0.05, &opts.params(sigma, 0.05)?, &bvp())?.v_m))
        .collect();
    for ((sigma, reference), v) in references.iter().zip(found) {
        c.rel(&format!("v_m sigma {sigma}"), v?, *reference, 0.02);
    }
    let lo = min_speed_search(WaveKind::Uptw, 4.0, 0.05, &opts.params(4.0, 0.05)?, &bvp())?.v_m;
    let hi = min_speed_search(WaveKind::Uptw, 4.0, 0.5, &opts.params(4.0, 0.5)?, &bvp())?.v_m;
    c.below("delta change at sigma 4", (hi - lo).abs() / lo, 0.01);
    Ok(())
}

fn criterion_3(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let sigma = 1.25;
    let p = opts.params(sigma, 0.05)?;
    let reference = ModelParams::unit_rates(sigma, 0.05)?;
    let vm = scalarwaves::min_speed_family(ScalarKind::Mvp4, sigma, &p, 1e-10)?.native_speed;
    c.rel("rescaled V_m", vm, 2.1213203435596424, 1e-4);
    let err = match scalarwaves::shoot_phase_path(ScalarKind::Mvp4, vm * (1.0 + 1e-9), sigma, &p)? {
        ShootOutcome::Connection(path) => {
            let mut err: f64 = 0.0;
            for (&y, &x) in path.s.iter().zip(&path.chi) {
                err = err.max((x - scalarwaves::exact_waveform(ExactKind::UptwMin, sigma, y, &reference)?).abs());
            }
            err
        }
        _ => f64::INFINITY,
    };
    c.below("profile sup error", err, 1e-3);
    Ok(())
}

fn criterion_4(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let p4 = opts.params(4.0, 0.05)?.with_diffusivity(4.0)?;
    let lptw4 = min_speed_search(WaveKind::Lptw, 4.0, 0.05, &p4, &bvp())?.v_m;
    c.rel("LPTW v_m (4, 0.05, D 4)", lptw4, 15.491933384829668, 0.01);
    let p125 = opts.params(1.25, 0.5)?;
    let lptw125 = min_speed_search(WaveKind::Lptw, 1.25, 0.5, &p125, &bvp())?.v_m;
    c.rel("LPTW v_m (1.25, 0.5)", lptw125, 1.2649110640673518, 0.01);
    let uptw4 = min_speed_search(WaveKind::Uptw, 4.0, 0.05, &p4, &bvp())?.v_m;
    c.rel("LPTW / UPTW at sigma 4", lptw4 / uptw4, 10.0, 0.03);
    Ok(())
}

fn criterion_5(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let reference = ModelParams::unit_rates(0.5, 0.01)?;
    let mut ratios = Vec::new();
    for sigma in [0.2, 0.1, 0.05] {
        let v = scalarwaves::solve_mvp1_speed(sigma, &opts.params(sigma, 0.01)?, 1e-12)?.speed;
        ratios.push(v / asymptotics::vstar_asym(sigma, &reference, Branch::SmallSigma)?);
    }
    c.push("ratio at sigma 0.1", ratios[1], 1.0, "in [0.7, 1.3]".into(), (0.7..=1.3).contains(&ratios[1]));
    let monotone = (ratios[0] - 1.0).abs() > (ratios[1] - 1.0).abs() && (ratios[1] - 1.0).abs() > (ratios[2] - 1.0).abs();
    c.push("ratio at sigma 0.05", ratios[2], 1.0, "|ratio - 1| decreasing over 0.2, 0.1, 0.05".into(), monotone);
    let v = scalarwaves::solve_mvp1_speed(0.95, &opts.params(0.95, 0.01)?, 1e-12)?.speed;
    c.rel("near-one branch at sigma 0.95", asymptotics::vstar_asym(0.95, &reference, Branch::NearOne)?, v, 0.05);
    Ok(())
}

fn criterion_6(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    for sigma in [0.5, 0.75] {
        let t = scalarwaves::solve_tbp(sigma, &opts.params(sigma, 0.01)?, 1e-8)?;
        c.abs(&format!("c_hat sigma {sigma}"), t.c_hat, 0.7749, 0.01);
    }
    Ok(())
}

fn criterion_7(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let reference = scalarwaves::solve_mvp1_speed(0.75, &ModelParams::unit_rates(0.75, 0.05)?, 1e-12)?.speed;
    let coarse = solve_fptw(0.75, 0.05, &opts.params(0.75, 0.05)?, &bvp())?.speed;
    let fine = solve_fptw(0.75, 0.01, &opts.params(0.75, 0.01)?, &bvp())?.speed;
    c.rel("v at delta 0.05", coarse, reference, 0.10);
    c.push(
        "|v - v*| at delta 0.01",
        (fine - reference).abs(),
        (coarse - reference).abs(),
        "< value at delta 0.05".into(),
        (fine - reference).abs() < (coarse - reference).abs(),
    );
    Ok(())
}

fn criterion_8(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let (m0, i0) = (0.1, 0.5);
    let delta = 0.01;
    let p = opts.params(0.75, delta)?;
    let g = Grid1D::with_spacing(-20.0, 20.0, 0.05)?;
    let o = SimOptions::aligned(&p, &g, Scheme::Imex, 20.0 * delta);
    let sim = simulate_lds(&FieldState::heaviside(g, m0, i0)?, &p, 5.0, &o)?;
    let at = |t: f64| sim.snapshots.iter().find(|s| (s.t - t).abs() < 1e-9);
    let early = at(20.0 * delta).ok_or_else(|| Error::Domain("missing snapshot at 20 delta".into()))?;
    c.below("sup I at t = 20 delta", early.i().iter().copied().fold(0.0, f64::max), 1e-6);
    let late = at(5.0).ok_or_else(|| Error::Domain("missing snapshot at t = 5".into()))?;
    c.below("M vs heat solution at t = 5", diffusion_mismatch(late, m0), 0.02);
    if opts.skip_slow {
        c.skip("front speed at t = 200", 0.31956);
        return Ok(());
    }
    let reference = scalarwaves::solve_mvp1_speed(0.75, &ModelParams::unit_rates(0.75, 0.05)?, 1e-12)?.speed;
    let p = opts.params(0.75, 0.05)?;
    let g = Grid1D::with_spacing(-20.0, 100.0, 0.1)?;
    let sim = simulate_lds(&FieldState::heaviside(g, 0.5, i0)?, &p, 200.0, &SimOptions::aligned(&p, &g, Scheme::Imex, 1.0))?;
    let speed = track_front(&sim.snapshots, 0, 0.5, 0.5)?.fitted_speed.unwrap_or(f64::NAN);
    c.rel("front speed at t = 200", speed, reference, 0.05);
    Ok(())
}

fn criterion_9(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let t_end = 40.0;
    let p = opts.params(4.0, 0.05)?.with_diffusivity(4.0)?;
    let g = Grid1D::with_spacing(-20.0, 20.0 + 16.0 * t_end, 0.1)?;
    let sim = simulate_lds(&FieldState::heaviside(g, 0.5, 0.5)?, &p, t_end, &SimOptions::aligned(&p, &g, Scheme::Imex, 0.5))?;
    let fast = track_front(&sim.snapshots, 1, 0.3, 0.5)?.fitted_speed.unwrap_or(f64::NAN);
    let slow = track_front(&sim.snapshots, 0, 0.5, 0.5)?.fitted_speed.unwrap_or(f64::NAN);
    c.rel("fast I front", fast, 15.491933384829668, 0.10);
    c.rel("slow front", slow, 1.5491933384829668, 0.10);
    let last = sim.last();
    let xs = rightmost_crossing(&g, last.m(), 0.5).ok_or_else(|| Error::Domain("no slow front".into()))?;
    let xf = rightmost_crossing(&g, last.i(), 0.3).ok_or_else(|| Error::Domain("no fast front".into()))?;
    let sample = |x: f64| last.i()[((x - g.x_min) / g.dx).round() as usize];
    c.rel("upper plateau", sample(xs - 10.0), 0.8, 0.02);
    c.rel("lower plateau", sample(0.5 * (xs + xf)), 0.6, 0.02);
    Ok(())
}

fn criterion_10(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let eps = 1e-3;
    let p = opts.params(0.75, 0.05)?.with_epsilon(eps)?;
    let g = Grid1D::with_spacing(-20.0, 30.0, 0.05)?;
    let o = SimOptions::aligned(&p, &g, Scheme::Imex, 1.0);
    let reduced = simulate_lds(&FieldState::heaviside(g, 0.5, 0.5)?, &p, 10.0, &o)?;
    let full = simulate_rds(&FieldState::heaviside_full(g, 0.5, 0.5, &p, None)?, &p, 10.0, &o)?;
    let diff = reduced
        .snapshots
        .iter()
        .zip(&full.snapshots)
        .filter(|(a, _)| a.t >= 1.0 - 1e-9)
        .map(|(a, b)| sup_difference(a, b))
        .fold(0.0, f64::max);
    c.below("sup |(M, I) reduced - full| on [1, 10]", diff, 10.0 * eps);
    Ok(())
}

fn criterion_11(opts: &ValidationOptions, c: &mut Checks) -> Result<()> {
    let cfg = bvp();
    let mut profiles = vec![solve_fptw(0.75, 0.05, &opts.params(0.75, 0.05)?, &cfg)?];
    for (kind, sigma, delta) in [(WaveKind::Uptw, 2.0, 0.05), (WaveKind::Lptw, 1.25, 0.5), (WaveKind::Fptw, 1.0, 0.05)] {
        profiles.push(min_speed_search(kind, sigma, delta, &opts.params(sigma, delta)?, &cfg)?.profile);
    }
    let all_ok = profiles.iter().all(|w| check_profile(w, &opts.params(w.sigma, w.delta).expect("valid")).ok());
    c.flag("profiles monotone and bounded", all_ok);

    let mut contained = true;
    let mut projections = 0;
    for (sigma, m0) in [(0.75, 0.1), (0.75, 0.5), (1.25, 0.5), (4.0, 0.0)] {
        let p = opts.params(sigma, 0.05)?;
        let g = Grid1D::with_spacing(-20.0, 40.0, 0.1)?;
        let sim = simulate_lds(&FieldState::heaviside(g, m0, 0.5)?, &p, 2.0, &SimOptions::aligned(&p, &g, Scheme::Imex, 0.1))?;
        contained &= sim.snapshots.iter().all(|s| s.contained(&p, 1e-8));
        projections += sim.projections;
    }
    c.flag("snapshots inside R(delta)", contained && projections == 0);

    let mut identity: f64 = 0.0;
    for sigma in [0.1, 0.5, 1.0, 2.0, 7.0] {
        let p = opts.params(sigma, 0.05)?;
        identity = identity.max((p.a() * p.b() - p.beta1 * p.beta2).abs());
    }
    c.abs("a b - beta1 beta2", identity, 0.0, 1e-14);

    let reference = ModelParams::unit_rates(1.5, 0.05)?;
    let b = asymptotics::b_of(&reference, 1.5);
    c.abs("speed branches at sigma 3/2", (2.0 * b).sqrt(), 2.0 * (b * 0.5).sqrt(), 4.0 * f64::EPSILON);
    c.abs("Y0(1)", asymptotics::appendix_c_leading(1.0)?, -V0, 1e-15);
    c.rel("rescaled small-sigma speed at 0.02", scalarwaves::small_sigma_rescaled_speed(0.02, 1e-10)?, V0, 0.03);
    Ok(())
}
