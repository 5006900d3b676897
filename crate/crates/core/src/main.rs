#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use ibdwaves::asymptotics::{self, Branch, ScalarKind};
use ibdwaves::evolution::{
    bound_regime, check_appendix_bounds, simulate_lds, simulate_rds, track_front, FieldState, Grid1D, Scheme, SimOptions,
};
use ibdwaves::integrate::solve_temporal_ds;
use ibdwaves::output::{Cell, CsvTable, OutputDir, SvgPlot};
use ibdwaves::scalarwaves::{self, WaveKind, WaveProfile};
use ibdwaves::systemwaves::{leading_order_guess, min_speed_search, solve_fptw, BvpConfig};
use ibdwaves::validation::{run_all, ValidationOptions};
use ibdwaves::ModelParams;

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "ibdwaves", version, about = "Travelling waves in a reduced inflammation model")]
#[command(args_override_self = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    #[arg(long, global = true, default_value_t = 1.0)]
    alpha2: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    beta1: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    beta2: f64,
    /// One value, or a comma-separated list where a command sweeps delta.
    #[arg(long, global = true, value_delimiter = ',', default_value = "0.05")]
    delta: Vec<f64>,
    #[arg(long = "D", global = true, default_value_t = 1.0)]
    d: f64,
    /// Defaults to delta / 50.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// File of `key = value` lines; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single thread and a zero wall time in the manifest, so reruns are byte-identical.
    #[arg(long, global = true)]
    seedless_deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagation speed against sigma.
    SpeedCurve {
        /// `start:stop:step` or a comma-separated list.
        #[arg(long)]
        sigma: String,
        #[arg(long, value_delimiter = ',', default_value = "shoot,asym")]
        methods: Vec<Method>,
    },
    /// Travelling-wave profiles from the boundary value solver and the leading-order approximation.
    Profile {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        sigma: f64,
    },
    /// Method-of-lines simulation from front-like initial data.
    Simulate {
        #[arg(long, value_enum, default_value = "lds")]
        model: Model,
        #[arg(long)]
        sigma: f64,
        #[arg(long = "m0")]
        m0: f64,
        #[arg(long = "i0", default_value_t = 0.5)]
        i0: f64,
        #[arg(long, default_value_t = 20.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.1)]
        dx: f64,
        #[arg(long, default_value_t = -20.0)]
        x_min: f64,
        /// Chosen from the fastest expected front when omitted.
        #[arg(long)]
        x_max: Option<f64>,
        /// Defaults to t_end / 200.
        #[arg(long)]
        output_interval: Option<f64>,
        /// Write every n-th stored snapshot to disk.
        #[arg(long, default_value_t = 20)]
        write_every: usize,
        /// Barrier and bacteria levels behind the front, `rho,B`; slow-manifold values when omitted.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        rho_b: Option<Vec<f64>>,
    },
    /// Transition-layer problem and its universal constant.
    Tbp {
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Trajectories of the spatially uniform system.
    PhasePortrait {
        #[arg(long)]
        sigma: f64,
        /// Starting points per axis.
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 20.0)]
        t_end: f64,
    },
    /// Run the acceptance suite.
    Validate {
        #[arg(long)]
        skip_slow: bool,
        /// Perturb beta2 to check that the suite detects wrong rates.
        #[arg(long)]
        tamper: bool,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Shoot,
    Asym,
    Bvp,
    Lptw,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Fptw,
    Uptw,
    Lptw,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Model {
    Lds,
    Rds,
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match parse_with_config(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Parse the command line, splicing in `--key value` pairs from a config file
/// ahead of the user's own flags so that the latter win.
fn parse_with_config(args: &[String]) -> Result<Cli, clap::Error> {
    let config = args.iter().enumerate().find_map(|(k, a)| {
        a.strip_prefix("--config=").map(str::to_string).or_else(|| (a == "--config").then(|| args.get(k + 1).cloned()).flatten())
    });
    let Some(path) = config else { return Cli::try_parse_from(args) };
    let cmd = Cli::command();
    let Some((pos, sub)) = args.iter().enumerate().skip(1).find_map(|(k, a)| cmd.find_subcommand(a).map(|s| (k, s))) else {
        return Cli::try_parse_from(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Cli::command().error(clap::error::ErrorKind::Io, format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text).map_err(|e| Cli::command().error(clap::error::ErrorKind::InvalidValue, e))?;
    let known: Vec<String> = cmd
        .get_arguments()
        .chain(sub.get_arguments())
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let mut spliced = vec![args[0].clone(), args[pos].clone()];
    for (key, value) in entries {
        if key == "config" || !known.contains(&key) {
            continue;
        }
        match value.as_str() {
            "true" => spliced.push(format!("--{key}")),
            "false" => {}
            _ => {
                spliced.push(format!("--{key}"));
                spliced.push(value);
            }
        }
    }
    spliced.extend(args[1..pos].iter().cloned());
    spliced.extend(args[pos + 1..].iter().cloned());
    Cli::try_parse_from(spliced)
}

fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected `key = value`", n + 1))?;
        out.push((k.trim().trim_start_matches("--").replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

struct Ctx {
    global: Global,
    start: Instant,
}

impl Ctx {
    fn delta(&self) -> f64 {
        self.global.delta[0]
    }

    fn params(&self, delta: f64) -> anyhow::Result<ModelParams> {
        let g = &self.global;
        let mut p = ModelParams::new(g.alpha2, g.beta1, g.beta2, delta, g.d).map_err(|e| usage(e.to_string()))?;
        if let Some(eps) = g.epsilon {
            p = p.with_epsilon(eps).map_err(|e| usage(e.to_string()))?;
        }
        Ok(p)
    }

    fn params_at(&self, sigma: f64, delta: f64) -> anyhow::Result<ModelParams> {
        self.params(delta)?.with_sigma(sigma).map_err(|e| usage(e.to_string()))
    }

    fn finish(&self, out: OutputDir, command: &str, parameters: serde_json::Value) -> anyhow::Result<()> {
        let wall = if self.global.seedless_deterministic { 0.0 } else { self.start.elapsed().as_secs_f64() };
        let g = &self.global;
        let mut params = json!({
            "alpha2": g.alpha2, "beta1": g.beta1, "beta2": g.beta2, "delta": g.delta, "D": g.d, "epsilon": g.epsilon,
        });
        if let (Some(obj), serde_json::Value::Object(extra)) = (params.as_object_mut(), parameters) {
            obj.extend(extra);
        }
        let root = out.root().to_path_buf();
        let manifest = out.finish(command, params, wall)?;
        say!("wrote {} files to {}", manifest.outputs.len() + 1, root.display());
        Ok(())
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = if cli.global.seedless_deterministic { Some(1) } else { cli.global.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    if cli.global.delta.is_empty() {
        return Err(usage("--delta needs at least one value"));
    }
    let ctx = Ctx { global: cli.global, start: Instant::now() };
    match cli.command {
        Command::SpeedCurve { sigma, methods } => speed_curve(&ctx, &sigma, &methods),
        Command::Profile { kind, sigma } => profile(&ctx, kind, sigma),
        Command::Simulate { model, sigma, m0, i0, t_end, dx, x_min, x_max, output_interval, write_every, rho_b } => {
            let spec = SimSpec { model, sigma, m0, i0, t_end, dx, x_min, x_max, output_interval, write_every, rho_b };
            simulate(&ctx, &spec)
        }
        Command::Tbp { sigma, tol } => tbp(&ctx, sigma, tol),
        Command::PhasePortrait { sigma, n, t_end } => phase_portrait(&ctx, sigma, n, t_end),
        Command::Validate { skip_slow, tamper } => validate(&ctx, skip_slow, tamper),
    }
}

fn parse_sigma_range(text: &str) -> anyhow::Result<Vec<f64>> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| usage(format!("bad number `{s}` in sigma range")));
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(usage("sigma range must be start:stop:step"));
        }
        let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) {
            return Err(usage("sigma step must be positive"));
        }
        let n = ((b - a) / h + 1e-9).floor();
        if !(n >= 0.0) {
            Vec::new()
        } else {
            (0..=n as usize).map(|k| a + h * k as f64).collect()
        }
    } else {
        text.split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<anyhow::Result<_>>()?
    };
    if values.is_empty() {
        return Err(usage("empty sigma range"));
    }
    if values.iter().any(|&s| !(s > 0.0)) {
        return Err(usage("sigma values must be positive"));
    }
    Ok(values)
}

fn speed_curve(ctx: &Ctx, sigma: &str, methods: &[Method]) -> anyhow::Result<()> {
    let sigmas = parse_sigma_range(sigma)?;
    if methods.is_empty() {
        return Err(usage("no methods given"));
    }
    let deltas = ctx.global.delta.clone();
    let mut jobs: Vec<(f64, Method, Option<f64>)> = Vec::new();
    for &s in &sigmas {
        for &m in methods {
            match m {
                Method::Shoot | Method::Asym => jobs.push((s, m, None)),
                Method::Bvp | Method::Lptw => jobs.extend(deltas.iter().map(|&d| (s, m, Some(d)))),
            }
        }
    }
    let results: Vec<anyhow::Result<Vec<(String, f64)>>> =
        jobs.par_iter().map(|&(s, m, d)| speed_point(ctx, s, m, d.unwrap_or(ctx.delta()))).collect();
    let mut table = CsvTable::new(&["sigma", "v", "method", "delta"]);
    let mut failures = Vec::new();
    for ((s, m, d), r) in jobs.iter().zip(results) {
        let dcell: Cell = d.map(Into::into).unwrap_or_else(|| "".into());
        match r {
            Ok(rows) => {
                for (label, v) in rows {
                    table.push(vec![(*s).into(), v.into(), label.into(), dcell.clone()]);
                }
            }
            Err(e) => {
                table.push(vec![(*s).into(), f64::NAN.into(), format!("{m:?}").to_lowercase().into(), dcell]);
                failures.push(json!({"sigma": s, "method": format!("{m:?}").to_lowercase(), "delta": d, "error": e.to_string()}));
            }
        }
    }
    let mut out = OutputDir::create(&ctx.global.out)?;
    let csv = out.write_csv("speed_curve.csv", &table)?;
    let plot = SvgPlot::from_csv(&csv, "sigma", "v", &["method", "delta"], "propagation speed")?;
    out.write("speed_curve.svg", &plot.render())?;
    if !failures.is_empty() {
        eprintln!("{} points failed; see failures.json", failures.len());
    }
    out.write_json("failures.json", &failures)?;
    ctx.finish(out, "speed-curve", json!({"sigma": sigmas, "methods": format!("{methods:?}"), "beta1": "re-derived from sigma at each point"}))
}

fn speed_point(ctx: &Ctx, sigma: f64, method: Method, delta: f64) -> anyhow::Result<Vec<(String, f64)>> {
    let p = ctx.params_at(sigma, delta)?;
    let cfg = BvpConfig::default();
    let one = |label: &str, v: f64| Ok(vec![(label.to_string(), v)]);
    match method {
        Method::Shoot => {
            if sigma < 1.0 {
                one("shoot", scalarwaves::solve_mvp1_speed(sigma, &p, 1e-10)?.speed)
            } else if sigma == 1.0 {
                one("shoot", scalarwaves::min_speed_family(ScalarKind::Mvp2, 1.0, &p, 1e-8)?.speed)
            } else {
                one("shoot", scalarwaves::min_speed_family(ScalarKind::Mvp4, sigma, &p, 1e-8)?.speed)
            }
        }
        Method::Asym => {
            if sigma < 1.0 {
                let rows = vec![
                    ("asym-small-sigma".to_string(), asymptotics::vstar_asym(sigma, &p, Branch::SmallSigma)?),
                    ("asym-near-one".to_string(), asymptotics::vstar_asym(sigma, &p, Branch::NearOne)?),
                ];
                Ok(rows.into_iter().filter(|(_, v)| *v > 0.0).collect())
            } else if sigma == 1.0 {
                one("exact", asymptotics::vstar_sigma_one(&p))
            } else {
                one("exact-uptw", asymptotics::uptw_min_speed(sigma, &p)?)
            }
        }
        Method::Bvp => {
            if sigma < 1.0 {
                one("bvp", solve_fptw(sigma, delta, &p, &cfg)?.speed)
            } else if sigma == 1.0 {
                one("bvp", min_speed_search(WaveKind::Fptw, sigma, delta, &p, &cfg)?.v_m)
            } else {
                one("bvp", min_speed_search(WaveKind::Uptw, sigma, delta, &p, &cfg)?.v_m)
            }
        }
        Method::Lptw => {
            if sigma <= 1.0 {
                return Ok(Vec::new());
            }
            Ok(vec![
                ("bvp-lptw".into(), min_speed_search(WaveKind::Lptw, sigma, delta, &p, &cfg)?.v_m),
                ("exact-lptw".into(), asymptotics::lptw_min_speed(sigma, delta, &p)?),
            ])
        }
    }
}

fn profile_table(w: &WaveProfile) -> CsvTable {
    let mut t = CsvTable::new(&["z", "M_T", "I_T"]);
    for k in 0..w.len() {
        t.push_nums(&[w.z[k], w.m[k], w.i[k]]);
    }
    t
}

fn profile(ctx: &Ctx, kind: Kind, sigma: f64) -> anyhow::Result<()> {
    let wave = match kind {
        Kind::Fptw => WaveKind::Fptw,
        Kind::Uptw => WaveKind::Uptw,
        Kind::Lptw => WaveKind::Lptw,
    };
    match kind {
        Kind::Fptw if sigma > 1.0 => return Err(usage("full-transition waves need sigma <= 1")),
        Kind::Uptw | Kind::Lptw if sigma <= 1.0 => return Err(usage("transition waves need sigma > 1")),
        _ => {}
    }
    let cfg = BvpConfig::default();
    let mut out = OutputDir::create(&ctx.global.out)?;
    let mut plot_m: Option<SvgPlot> = None;
    let mut plot_i: Option<SvgPlot> = None;
    let mut speeds = Vec::new();
    for &delta in &ctx.global.delta {
        let p = ctx.params_at(sigma, delta)?;
        let numeric = if wave == WaveKind::Fptw && sigma < 1.0 {
            solve_fptw(sigma, delta, &p, &cfg)?
        } else {
            min_speed_search(wave, sigma, delta, &p, &cfg)?.profile
        };
        let asym = leading_order_guess(wave, sigma, delta, &p, Some(numeric.speed))?;
        speeds.push(json!({"delta": delta, "speed": numeric.speed, "residual": numeric.residual}));
        for (method, w) in [("bvp", &numeric), ("asym", &asym)] {
            let name = format!("profile_{method}_delta{delta}.csv");
            let csv = out.write_csv(&name, &profile_table(w))?;
            for (col, plot) in [("M_T", &mut plot_m), ("I_T", &mut plot_i)] {
                let mut p = SvgPlot::from_csv(&csv, "z", col, &[], &format!("{col} profiles, sigma = {sigma}"))?;
                for s in &mut p.series {
                    s.label = format!("{method} delta={delta}");
                }
                match plot {
                    Some(existing) => existing.series.append(&mut p.series),
                    None => *plot = Some(p),
                }
            }
        }
        if wave == WaveKind::Fptw && sigma < 1.0 {
            let v_star = scalarwaves::solve_mvp1_speed(sigma, &p, 1e-10)?.speed;
            let zoom = transition_zoom(&numeric, sigma, delta, &p, v_star)?;
            let csv = out.write_csv(&format!("transition_delta{delta}.csv"), &zoom)?;
            let plot = SvgPlot::from_csv_columns(&csv, "M_T", &["I_T", "H0", "composite"], "transition region")?;
            out.write(&format!("transition_delta{delta}.svg"), &plot.render())?;
        }
    }
    if let Some(p) = plot_m {
        out.write("profile_M.svg", &p.render())?;
    }
    if let Some(p) = plot_i {
        out.write("profile_I.svg", &p.render())?;
    }
    out.write_json("speeds.json", &speeds)?;
    let rates = ctx.params_at(sigma, ctx.delta())?;
    ctx.finish(out, "profile", json!({"kind": format!("{kind:?}").to_lowercase(), "sigma": sigma, "effective_rates": rates}))
}

/// `I_T` against `M_T` near the cut-off, with the leading-order and composite approximations.
fn transition_zoom(w: &WaveProfile, sigma: f64, delta: f64, p: &ModelParams, v_star: f64) -> anyhow::Result<CsvTable> {
    let mut t = CsvTable::new(&["M_T", "I_T", "H0", "composite"]);
    let centre = 1.0 - sigma;
    let half = 0.1f64.min(0.5 * centre).min(0.5 * sigma);
    let mut rows: Vec<(f64, f64)> = (0..w.len()).filter(|&k| (w.m[k] - centre).abs() <= half).map(|k| (w.m[k], w.i[k])).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let delta_bar = p.d * delta;
    for (m, i) in rows {
        let composite = scalarwaves::composite_h(m, sigma, delta_bar, p, v_star).unwrap_or(f64::NAN);
        t.push_nums(&[m, i, p.h0(m), composite]);
    }
    Ok(t)
}

struct SimSpec {
    model: Model,
    sigma: f64,
    m0: f64,
    i0: f64,
    t_end: f64,
    dx: f64,
    x_min: f64,
    x_max: Option<f64>,
    output_interval: Option<f64>,
    write_every: usize,
    rho_b: Option<Vec<f64>>,
}

fn simulate(ctx: &Ctx, s: &SimSpec) -> anyhow::Result<()> {
    let delta = ctx.delta();
    let p = ctx.params_at(s.sigma, delta)?;
    if !(s.t_end > 0.0) {
        return Err(usage("--t-end must be positive"));
    }
    if s.write_every == 0 {
        return Err(usage("--write-every must be at least 1"));
    }
    let families = asymptotics::family_min_speeds(s.sigma, delta, &p)?;
    let fastest = [families.fptw, families.uptw, families.lptw].iter().flatten().map(|f| f.speed).fold(0.0, f64::max);
    let x_max = s.x_max.unwrap_or_else(|| (20.0 + 1.2 * fastest.max(0.5) * s.t_end + 10.0).ceil());
    let grid = Grid1D::with_spacing(s.x_min, x_max, s.dx).map_err(|e| usage(e.to_string()))?;
    let interval = s.output_interval.unwrap_or(s.t_end / 200.0);
    let opts = SimOptions::aligned(&p, &grid, Scheme::Imex, interval);
    let sim = match s.model {
        Model::Lds => simulate_lds(&FieldState::heaviside(grid, s.m0, s.i0).map_err(|e| usage(e.to_string()))?, &p, s.t_end, &opts)?,
        Model::Rds => {
            let rb = s.rho_b.as_ref().map(|v| (v[0], v[1]));
            let init = FieldState::heaviside_full(grid, s.m0, s.i0, &p, rb).map_err(|e| usage(e.to_string()))?;
            simulate_rds(&init, &p, s.t_end, &opts)?
        }
    };
    let mut out = OutputDir::create(&ctx.global.out)?;
    let header: &[&str] = if s.model == Model::Lds { &["x", "M", "I"] } else { &["x", "M", "I", "rho", "B"] };
    let last_index = sim.snapshots.len() - 1;
    for (k, snap) in sim.snapshots.iter().enumerate() {
        if k % s.write_every != 0 && k != last_index {
            continue;
        }
        let mut t = CsvTable::new(header);
        for j in 0..grid.n {
            let mut row = vec![grid.x(j)];
            row.extend(snap.fields.iter().map(|f| f[j]));
            t.push_nums(&row);
        }
        out.write_csv(&format!("snapshots/snapshot_{k:05}.csv"), &t)?;
    }
    let last = sim.last();
    let csv = out.write_csv("snapshots/final.csv", &{
        let mut t = CsvTable::new(&["x", "M", "I"]);
        for j in 0..grid.n {
            t.push_nums(&[grid.x(j), last.fields[0][j], last.fields[1][j]]);
        }
        t
    })?;
    let plot = SvgPlot::from_csv_columns(&csv, "x", &["M", "I"], &format!("t = {}", last.t))?;
    out.write("final.svg", &plot.render())?;

    let b = p.b();
    let i_level = 0.5 * if s.sigma > 1.0 { b * (s.sigma - 1.0) } else { b * s.sigma };
    let mut fronts = Vec::new();
    for (field, name, level) in [(0usize, "M", 0.5), (1, "I", i_level)] {
        let trace = track_front(&sim.snapshots, field, level, 0.5)?;
        let mut t = CsvTable::new(&["t", "x_front"]);
        for (ti, xi) in trace.times.iter().zip(&trace.positions) {
            t.push_nums(&[*ti, *xi]);
        }
        let csv = out.write_csv(&format!("trace_{name}.csv"), &t)?;
        if !trace.times.is_empty() {
            let plot = SvgPlot::from_csv(&csv, "t", "x_front", &[], &format!("{name} front at level {level}"))?;
            out.write(&format!("trace_{name}.svg"), &plot.render())?;
        }
        fronts.push(json!({"field": name, "level": level, "fitted_speed": trace.fitted_speed, "points": trace.times.len()}));
    }

    let threshold = (1.0 - s.sigma).max(0.0);
    let propagation = if s.m0 == 0.0 && s.sigma > 1.0 {
        "M0 = 0: M stays identically zero and only the lower-transition immune front propagates".to_string()
    } else if s.sigma <= 1.0 && s.m0 <= threshold {
        format!("no propagation: below threshold max(1-sigma,0) = {threshold}")
    } else {
        format!("propagation: M0 = {} exceeds threshold max(1-sigma,0) = {threshold}", s.m0)
    };
    let bounds = match bound_regime(&p, s.m0) {
        Ok(_) => match check_appendix_bounds(&sim.snapshots, &p, s.m0, s.i0) {
            Ok(r) => json!(r),
            Err(e) => json!({"error": e.to_string()}),
        },
        Err(e) => json!({"not_applicable": e.to_string()}),
    };
    let report = json!({
        "model": format!("{:?}", s.model).to_lowercase(),
        "propagation": propagation,
        "fronts": fronts,
        "family_min_speeds": families,
        "bounds": bounds,
        "projections": sim.projections,
        "warnings": sim.warnings,
        "dt": opts.dt,
        "grid": grid,
    });
    for w in &sim.warnings {
        eprintln!("warning: {w}");
    }
    say!("{propagation}");
    out.write_json("report.json", &report)?;
    ctx.finish(
        out,
        "simulate",
        json!({"sigma": s.sigma, "M0": s.m0, "I0": s.i0, "t_end": s.t_end, "dx": s.dx, "x_min": s.x_min, "x_max": x_max, "effective_rates": p}),
    )
}

fn tbp(ctx: &Ctx, sigma: f64, tol: f64) -> anyhow::Result<()> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(usage("the transition problem needs sigma in (0, 1)"));
    }
    let p = ctx.params_at(sigma, ctx.delta())?;
    let sol = scalarwaves::solve_tbp(sigma, &p, tol)?;
    let mut t = CsvTable::new(&["m", "H", "dH"]);
    for k in 0..sol.m.len() {
        t.push_nums(&[sol.m[k], sol.h[k], sol.dh[k]]);
    }
    let mut out = OutputDir::create(&ctx.global.out)?;
    let csv = out.write_csv("tbp.csv", &t)?;
    out.write("tbp.svg", &SvgPlot::from_csv(&csv, "m", "H", &[], "transition problem")?.render())?;
    let constants = json!({
        "sigma": sol.sigma, "b": sol.b, "c": sol.c, "c_minus": sol.c_minus, "c_plus": sol.c_plus,
        "c_hat": sol.c_hat, "c_hat_plus": sol.c_hat_plus, "c_hat_minus_fit": sol.c_hat_minus_fit, "m_max": sol.m_max,
    });
    say!("c_hat = {}", sol.c_hat);
    out.write_json("tbp.json", &constants)?;
    ctx.finish(out, "tbp", json!({"sigma": sigma, "tol": tol, "effective_rates": p}))
}

fn phase_portrait(ctx: &Ctx, sigma: f64, n: usize, t_end: f64) -> anyhow::Result<()> {
    if n < 2 {
        return Err(usage("--n must be at least 2"));
    }
    let p = ctx.params_at(sigma, ctx.delta())?;
    let starts: Vec<(f64, f64)> = (0..n)
        .flat_map(|a| (0..n).map(move |c| (0.02 + 0.96 * a as f64 / (n - 1) as f64, 0.02 + 0.96 * c as f64 / (n - 1) as f64)))
        .filter(|&(m, i)| p.in_region(m, i, 0.0))
        .collect();
    let sols: Vec<_> = starts.par_iter().map(|&(m, i)| solve_temporal_ds(m, i, &p, t_end)).collect();
    let mut t = CsvTable::new(&["trajectory", "t", "m", "i"]);
    let mut failures = BTreeMap::new();
    for (k, (sol, start)) in sols.into_iter().zip(&starts).enumerate() {
        match sol {
            Ok(sol) => {
                for (ti, y) in sol.times.iter().zip(&sol.states) {
                    t.push(vec![format!("{k}").into(), (*ti).into(), y[0].into(), y[1].into()]);
                }
            }
            Err(e) => {
                failures.insert(format!("{start:?}"), e.to_string());
            }
        }
    }
    let mut out = OutputDir::create(&ctx.global.out)?;
    let csv = out.write_csv("phase_portrait.csv", &t)?;
    let mut plot = SvgPlot::from_csv(&csv, "m", "i", &["trajectory"], &format!("temporal dynamics, sigma = {sigma}"))?;
    for s in &mut plot.series {
        s.label.clear();
    }
    out.write("phase_portrait.svg", &plot.render())?;
    out.write_json("failures.json", &failures)?;
    ctx.finish(out, "phase-portrait", json!({"sigma": sigma, "n": n, "t_end": t_end, "effective_rates": p}))
}

fn validate(ctx: &Ctx, skip_slow: bool, tamper: bool) -> anyhow::Result<()> {
    let mut opts = ValidationOptions { skip_slow, ..Default::default() };
    if tamper {
        opts.base.beta2 *= 1.5;
    }
    let report = run_all(&opts);
    for c in &report.criteria {
        say!("{}", c.line());
    }
    let mut out = OutputDir::create(&ctx.global.out)?;
    out.write_json("validation.json", &report)?;
    let failed = report.failed();
    ctx.finish(out, "validate", json!({"skip_slow": skip_slow, "tamper": tamper}))?;
    if failed > 0 {
        bail!("{failed} of {} criteria failed", report.criteria.len());
    }
    Ok(())
}
