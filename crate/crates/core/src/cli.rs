//! Subcommand orchestration and artifact output for the `tissue` binary.
//!
//! Every CSV starts with a `# config_hash=… version=…` line followed by one
//! header row; every JSON report carries the same hash and the module
//! versions. Nothing time- or host-dependent is written, so equal configs
//! give identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig};
use crate::decay::{decay_metrics, lyapunov_series, measure_constants};
use crate::error::Error;
use crate::forcing::{BoundaryData, InitKind, InitialJump, MacroProfile};
use crate::membrane::jump_norm;
use crate::micro::{simulate_observed, steps_for, MicroSystem};
use crate::nonlinearity::{fit_growth_constants, regularize, Nonlinearity};
use crate::periodic::{
    find_periodic, find_periodic_regularized, verify_energy_estimates, Method, PeriodicOrbit,
};
use crate::two_scale::{
    assemble_cell_operator, bulk_l2_error, find_periodic_two_scale, find_periodic_two_scale_regularized,
    orbit_energy_bound, periodic_weak_form_residuals, simulate_two_scale_observed, two_scale_decay_metrics,
    weak_form_residuals, EnergyBoundAccumulator, MacroMesh, TwoScaleSystem,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const MODULES: [&str; 7] = [
    "cell_geometry",
    "nonlinearity",
    "micro_solver",
    "periodic_solver",
    "decay_analysis",
    "two_scale_solver",
    "cli_io",
];

const ORBIT_FILE: &str = "orbit.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Periodic,
    Decay,
    Homogenize,
    Verify,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Periodic => "periodic",
            Command::Decay => "decay",
            Command::Homogenize => "homogenize",
            Command::Verify => "verify",
            Command::Compare => "compare",
        }
    }
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub method: Option<Method>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
}

/// A failed run: exit code plus message.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Parse(_) => EXIT_PARSE,
            ConfigError::Io { .. } | ConfigError::Invalid(_) => EXIT_INVALID,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::LinearSolve { .. }
            | Error::Newton { .. }
            | Error::PeriodicNotConverged { .. }
            | Error::SingularOperator(_) => EXIT_SOLVER,
            _ => EXIT_INVALID,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_SOLVER, format!("cannot write {}: {e}", path.display()))
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Writes artifacts into one directory, stamping each with the config hash.
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
}

fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        "nan".into()
    } else if x == 0.0 || (x == x.trunc() && x.abs() < 1e15) || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl Artifacts {
    fn create(dir: &Path, cfg: &RunConfig) -> Outcome<Self> {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        let a = Artifacts {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
        };
        a.write("config.toml", &cfg.echo())?;
        Ok(a)
    }

    fn write(&self, name: &str, text: &str) -> Outcome<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_failure(&path, e))
    }

    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Outcome<()> {
        let mut s = format!("# config_hash={} version={VERSION}\n", self.hash);
        s.push_str(&header.join(","));
        s.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|&x| fmt_num(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        self.write(name, &s)
    }

    fn json(&self, name: &str, command: Command, report: Value) -> Outcome<()> {
        let modules: serde_json::Map<String, Value> =
            MODULES.iter().map(|m| (m.to_string(), Value::from(VERSION))).collect();
        let doc = json!({
            "config_hash": self.hash,
            "version": VERSION,
            "modules": modules,
            "command": command.name(),
            "report": report,
        });
        let text = serde_json::to_string_pretty(&doc).expect("report serializes");
        self.write(name, &(text + "\n"))
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

/// Loads the config, runs the command and returns the process exit code.
pub fn run_from_path(command: Command, path: &Path, overrides: &Overrides) -> i32 {
    let cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            let f = Failure::from(e);
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    match run(command, &cfg, overrides) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Runs one subcommand with a validated configuration.
pub fn run(command: Command, cfg: &RunConfig, overrides: &Overrides) -> Outcome<()> {
    let mut cfg = cfg.clone();
    if let Some(m) = overrides.method {
        cfg.periodic.method = match m {
            Method::Picard => "picard".into(),
            Method::DeltaSequence => "delta".into(),
        };
    }
    if let Some(t) = overrides.tol {
        cfg.periodic.tol = t;
    }
    if let Some(n) = overrides.max_iters {
        cfg.periodic.max_iters = n;
    }
    cfg.validate()?;
    let dir = overrides.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let art = Artifacts::create(&dir, &cfg)?;
    log::info!("{} → {} (config {})", command.name(), dir.display(), &art.hash[..12]);
    match command {
        Command::Simulate => simulate(&cfg, &art),
        Command::Periodic => periodic(&cfg, &art),
        Command::Decay => decay(&cfg, &art),
        Command::Homogenize => homogenize(&cfg, &art),
        Command::Verify => verify(&cfg, &art),
        Command::Compare => compare(&cfg, &art, overrides.threads.unwrap_or(1).max(1)),
    }
}

fn micro_system(cfg: &RunConfig) -> Outcome<MicroSystem> {
    Ok(MicroSystem::new(
        &cfg.domain()?,
        &cfg.conductivity()?,
        &cfg.boundary_data()?,
        cfg.alpha,
    )?)
}

fn simulate(cfg: &RunConfig, art: &Artifacts) -> Outcome<()> {
    let sys = micro_system(cfg)?;
    let f = cfg.nonlinearity()?;
    let params = cfg.solver_params()?;
    let w0 = cfg.initial_jump()?.micro_values(sys.domain());
    let steps = steps_for(cfg.time.horizon, params.dt, "time.horizon")?;
    let stride = cfg.time.stride;
    let bulk = sys.bulk();
    let row = |st: &crate::micro::MicroState, dis: f64, iters: usize| {
        let psi_b = sys.boundary_values(st.t);
        vec![
            st.t,
            bulk.l2_norm(&st.u),
            bulk.grad_norm(&st.u, &st.w, &psi_b),
            bulk.jump_norm(&st.w),
            dis,
            iters as f64,
        ]
    };
    let first = sys.state(0.0, &w0)?;
    let mut rows = vec![row(&first, 0.0, 0)];
    let mut max_trace = first.flux_residual;
    let traj = simulate_observed(&sys, &f, &w0, 0.0, steps, &params, stride, |n, st, rec| {
        max_trace = max_trace.max(st.flux_residual);
        if n % stride == 0 || n == steps {
            rows.push(row(st, rec.dissipation_residual, rec.newton_iters));
        }
    })?;
    art.csv(
        "simulate.csv",
        &["t", "L2_bulk", "L2_grad", "L2_jump", "dissipation_residual", "newton_iters"],
        &rows,
    )?;
    let recs = &traj.records;
    let report = json!({
        "geometry": to_value(&sys.domain().summary(&cfg.conductivity()?)),
        "nonlinearity": f.kind().name(),
        "certificate": to_value(f.certificate()),
        "steps": steps,
        "final_time": traj.time(steps),
        "max_dissipation_residual": recs.iter().map(|r| r.dissipation_residual).fold(0.0, f64::max),
        "max_newton_iters": recs.iter().map(|r| r.newton_iters).max().unwrap_or(0),
        "shifted_steps": recs.iter().filter(|r| r.shifted).count(),
        "max_trace_mismatch": max_trace,
    });
    art.json("simulate.json", Command::Simulate, report)
}

/// Orbit of the configured method and the `f` it solves.
fn solve_orbit(cfg: &RunConfig, sys: &MicroSystem, f: &Nonlinearity) -> Outcome<(PeriodicOrbit, Nonlinearity, Value)> {
    let params = cfg.solver_params()?;
    let pp = cfg.periodic_params()?;
    let zero = vec![0.0; sys.num_facets()];
    match cfg.method()? {
        Method::Picard => {
            let o = find_periodic(sys, f, &params, &pp, &zero)?;
            Ok((o, f.clone(), Value::Null))
        }
        Method::DeltaSequence => {
            let sweep = find_periodic_regularized(sys, f, &params, &pp, &cfg.periodic.deltas, &zero)?;
            let strictly = sweep.differences.windows(2).all(|p| p[1] < p[0]);
            let delta = *sweep.deltas.last().expect("validated non-empty");
            let info = json!({
                "deltas": sweep.deltas,
                "differences": sweep.differences,
                "differences_strictly_decreasing": strictly,
            });
            let orbit = sweep.orbits.last().expect("one orbit per delta").clone();
            Ok((orbit, regularize(f, delta)?, info))
        }
    }
}

fn periodic(cfg: &RunConfig, art: &Artifacts) -> Outcome<()> {
    let sys = micro_system(cfg)?;
    let f = cfg.nonlinearity()?;
    let (orbit, _, sweep) = solve_orbit(cfg, &sys, &f)?;
    let (l1, l2) = fit_growth_constants(&f, cfg.f.sample_range)?;
    let energy = verify_energy_estimates(&sys, &orbit, l1, l2)?;
    log::info!(
        "energy estimates: margins {:e} and {:e}",
        energy.gradient_bound.margin,
        energy.time_derivative_bound.margin
    );
    let bulk = sys.bulk();
    let mut rows = Vec::new();
    for n in (0..=orbit.steps()).filter(|n| n % cfg.time.stride == 0 || *n == orbit.steps()) {
        let t = n as f64 * orbit.dt;
        let w = &orbit.jumps[n];
        let u = sys.bulk_potential(t, w)?;
        rows.push(vec![t, jump_norm(&sys, w), bulk.energy(&u, w, &sys.boundary_values(t))]);
    }
    art.csv("periodic.csv", &["t", "jump_norm", "bulk_energy"], &rows)?;
    let report = json!({
        "method": to_value(&orbit.method),
        "delta": orbit.delta,
        "defect": orbit.defect,
        "iterations": orbit.iterations,
        "defects": orbit.defects,
        "energy_check": to_value(&energy),
        "delta_sequence": sweep,
    });
    art.json("periodic.json", Command::Periodic, report)?;
    let stored = json!({
        "orbit_key": cfg.orbit_key(),
        "dt": orbit.dt,
        "steps": orbit.steps(),
        "method": to_value(&orbit.method),
        "delta": orbit.delta,
        "defect": orbit.defect,
        "iterations": orbit.iterations,
        "initial_jump": orbit.initial(),
    });
    art.json(ORBIT_FILE, Command::Periodic, stored)
}

/// Reads the orbit written by `periodic` and regenerates its period.
fn load_orbit(cfg: &RunConfig, art: &Artifacts, sys: &MicroSystem, f: &Nonlinearity) -> Outcome<(PeriodicOrbit, Nonlinearity)> {
    let path = art.dir.join(ORBIT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|_| {
        Failure::new(
            EXIT_INVALID,
            format!("missing dependency: {} not found; run `periodic` first", path.display()),
        )
    })?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::new(EXIT_INVALID, format!("corrupt {}: {e}", path.display())))?;
    let rep = &doc["report"];
    if rep["orbit_key"].as_str() != Some(cfg.orbit_key().as_str()) {
        return Err(Failure::new(
            EXIT_INVALID,
            format!("missing dependency: {} was computed for a different configuration", path.display()),
        ));
    }
    let w0: Vec<f64> = rep["initial_jump"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    if w0.len() != sys.num_facets() {
        return Err(Failure::new(EXIT_INVALID, "stored orbit does not match the geometry"));
    }
    let g = match rep["delta"].as_f64() {
        Some(d) => regularize(f, d)?,
        None => f.clone(),
    };
    let params = cfg.solver_params()?;
    let n = params.steps_per_period()?;
    let mut jumps = Vec::with_capacity(n + 1);
    jumps.push(w0.clone());
    let mut w = w0;
    for k in 1..=n {
        w = sys.step_jump(&w, k as f64 * params.dt, &g, &params)?.w;
        jumps.push(w.clone());
    }
    let defect = jump_norm(sys, &jumps[0].iter().zip(&jumps[n]).map(|(a, b)| a - b).collect::<Vec<_>>());
    let method = if rep["delta"].is_null() {
        Method::Picard
    } else {
        Method::DeltaSequence
    };
    let orbit = PeriodicOrbit {
        dt: params.dt,
        jumps,
        defect,
        iterations: rep["iterations"].as_u64().unwrap_or(0) as usize,
        defects: vec![defect],
        method,
        delta: rep["delta"].as_f64(),
    };
    Ok((orbit, g))
}

fn decay(cfg: &RunConfig, art: &Artifacts) -> Outcome<()> {
    let sys = micro_system(cfg)?;
    let f = cfg.nonlinearity()?;
    let (orbit, g) = load_orbit(cfg, art, &sys, &f)?;
    let params = cfg.solver_params()?;
    let steps = cfg.decay.periods * params.steps_per_period()?;
    let w0 = cfg.initial_jump()?.micro_values(sys.domain());
    let traj = simulate_observed(&sys, &g, &w0, 0.0, steps, &params, cfg.decay.stride, |_, _, _| {})?;
    let constants = if sys.num_facets() <= 600 {
        Some(measure_constants(&sys)?)
    } else {
        None
    };
    let rep = decay_metrics(&sys, &g, &traj, &orbit, constants)?;
    let rows: Vec<Vec<f64>> = (0..rep.times.len())
        .map(|i| {
            vec![
                rep.times[i],
                rep.norm_l2[i],
                rep.norm_grad[i],
                rep.norm_jump[i],
                rep.lyapunov.values[i],
            ]
        })
        .collect();
    art.csv("decay.csv", &["t", "norm_L2", "norm_grad", "norm_jump", "E"], &rows)?;
    let report = json!({
        "rate": rep.rate.rate,
        "r_squared": rep.rate.r_squared,
        "classification": to_value(&rep.rate.classification),
        "lyapunov_monotone": rep.lyapunov.monotone,
        "lyapunov_max_increase": rep.lyapunov.max_increase,
        "worst_reduction": rep.worst_reduction(),
        "orbit_defect": orbit.defect,
        "delta": orbit.delta,
        "secant_min": rep.secant_min.iter().cloned().fold(f64::INFINITY, f64::min),
        "secant_max": rep.secant_max.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "constants": to_value(&rep.constants),
        "elliptic_check": rep.elliptic_check,
        "poincare_check": rep.poincare_check,
    });
    art.json("decay.json", Command::Decay, report)
}

fn two_scale_system(cfg: &RunConfig) -> Outcome<TwoScaleSystem> {
    let cell = cfg.cell()?;
    let op = assemble_cell_operator(&cell, &cfg.conductivity()?)?;
    let mesh = MacroMesh::new(cfg.macro_grid.dimension, cfg.macro_grid.resolution)?;
    Ok(TwoScaleSystem::new(&mesh, &op, &cfg.boundary_data()?, cfg.alpha)?)
}

fn homogenize(cfg: &RunConfig, art: &Artifacts) -> Outcome<()> {
    let sys = two_scale_system(cfg)?;
    let f = cfg.nonlinearity()?;
    let params = cfg.solver_params()?;
    let pp = cfg.periodic_params()?;
    let zero = vec![0.0; sys.num_jumps()];
    let (orbit, g) = match cfg.method()? {
        Method::Picard => (find_periodic_two_scale(&sys, &f, &params, &pp, &zero)?, f.clone()),
        Method::DeltaSequence => {
            let sweep = find_periodic_two_scale_regularized(&sys, &f, &params, &pp, &cfg.periodic.deltas, &zero)?;
            let d = *sweep.deltas.last().expect("validated non-empty");
            (sweep.orbits.last().expect("one orbit per delta").clone(), regularize(&f, d)?)
        }
    };
    let (l1, l2) = fit_growth_constants(&f, cfg.f.sample_range)?;
    let w0 = sys.initial_jump(&cfg.initial_jump()?);
    let n_period = params.steps_per_period()?;
    let steps = cfg.decay.periods * n_period;

    let mut bound = EnergyBoundAccumulator::new(&sys, &w0, params.dt, l1, l2)?;
    let mut worst_macro = 0.0f64;
    let mut worst_flux = 0.0f64;
    let mut worst_mean = 0.0f64;
    let traj = simulate_two_scale_observed(&sys, &g, &w0, 0.0, steps, &params, cfg.decay.stride, |n, st, _| {
        if n <= n_period {
            bound.push(&sys, st);
        }
        worst_macro = worst_macro.max(st.macro_residual);
        worst_flux = worst_flux.max(st.flux_residual);
        worst_mean = worst_mean.max(st.mean_residual);
    })?;
    let rep = two_scale_decay_metrics(&sys, &g, &traj, &orbit)?;
    let transient_bound = bound.finish(&sys, false);
    let orbit_bound = orbit_energy_bound(&sys, &orbit, l1, l2)?;
    let periodic_weak = periodic_weak_form_residuals(&sys, &g, &orbit)?;
    let short = (n_period / 10).max(2);
    let head = simulate_two_scale_observed(&sys, &g, &w0, 0.0, short, &params, 1, |_, _, _| {})?;
    let weak = weak_form_residuals(&sys, &g, &w0, &head)?;
    let max_rate = (1..orbit.jumps.len())
        .map(|n| {
            let d: Vec<f64> = orbit.jumps[n].iter().zip(&orbit.jumps[n - 1]).map(|(a, b)| (a - b) / orbit.dt).collect();
            jump_norm(&sys, &d)
        })
        .fold(0.0, f64::max);

    let rows: Vec<Vec<f64>> = (0..rep.times.len())
        .map(|i| {
            vec![
                rep.times[i],
                rep.norm_h1[i],
                rep.norm_corrector[i],
                rep.norm_grad_y[i],
                rep.norm_jump[i],
                rep.lyapunov.values[i],
            ]
        })
        .collect();
    art.csv(
        "homogenize.csv",
        &["t", "norm_H1", "norm_corrector", "norm_grad_y", "norm_jump", "E"],
        &rows,
    )?;
    let report = json!({
        "macro_resolution": sys.mesh().resolution(),
        "macro_elements": sys.mesh().num_elements(),
        "effective_conductivity": sys.cell().effective_conductivity(),
        "orbit": {
            "method": to_value(&orbit.method),
            "delta": orbit.delta,
            "defect": orbit.defect,
            "iterations": orbit.iterations,
            "max_time_derivative": max_rate,
        },
        "rate": rep.rate.rate,
        "r_squared": rep.rate.r_squared,
        "classification": to_value(&rep.rate.classification),
        "lyapunov_monotone": rep.lyapunov.monotone,
        "worst_reduction": rep.worst_reduction(),
        "max_mean_corrector": rep.max_mean.max(worst_mean),
        "max_macro_residual": worst_macro,
        "max_flux_residual": worst_flux,
        "energy_bound_first_period": to_value(&transient_bound),
        "energy_bound_orbit": to_value(&orbit_bound),
        "weak_form": to_value(&weak),
        "periodic_weak_form": to_value(&periodic_weak),
    });
    art.json("homogenize.json", Command::Homogenize, report)
}

/// Micro-vs-two-scale bulk error at `compare.time` for one `ε`.
fn compare_one(cfg: &RunConfig, eps: f64, ts: &TwoScaleSystem, macro_w: &[f64]) -> Outcome<f64> {
    let dom = cfg.domain_at(eps)?;
    let sys = MicroSystem::new(&dom, &cfg.conductivity()?, &cfg.boundary_data()?, cfg.alpha)?;
    let f = cfg.nonlinearity()?;
    let params = cfg.solver_params()?;
    let steps = steps_for(cfg.compare.time, params.dt, "compare.time")?;
    let w0 = cfg.initial_jump()?.micro_values(&dom);
    let w = crate::micro::advance(&sys, &f, &w0, 0.0, steps, &params)?;
    Ok(bulk_l2_error(&sys, &w, ts, macro_w, cfg.compare.time)?)
}

fn compare(cfg: &RunConfig, art: &Artifacts, threads: usize) -> Outcome<()> {
    let ts = two_scale_system(cfg)?;
    let f = cfg.nonlinearity()?;
    let params = cfg.solver_params()?;
    let steps = steps_for(cfg.compare.time, params.dt, "compare.time")?;
    let s1 = cfg.initial_jump()?;
    if s1.kind == InitKind::Random {
        log::warn!("random initial jumps have no two-scale limit; compare errors need not decrease");
    }
    let mut w = ts.initial_jump(&s1);
    for n in 1..=steps {
        w = ts.step_jump(&w, n as f64 * params.dt, &f, &params)?.w;
    }
    let eps = &cfg.compare.epsilons;
    let mut results: Vec<Option<Outcome<f64>>> = vec![None; eps.len()];
    let workers = threads.min(eps.len()).max(1);
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..workers).map(|k| (k..eps.len()).step_by(workers).collect()).collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|idx| {
                let (ts, w) = (&ts, &w);
                scope.spawn(move || idx.into_iter().map(|i| (i, compare_one(cfg, eps[i], ts, w))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("compare worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let errors: Vec<f64> = results
        .into_iter()
        .map(|r| r.expect("every epsilon computed"))
        .collect::<Outcome<Vec<f64>>>()?;
    let mut pairs: Vec<(f64, f64)> = eps.iter().copied().zip(errors.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let monotone = pairs.windows(2).all(|p| p[1].1 < p[0].1);
    let rows: Vec<Vec<f64>> = pairs.iter().map(|&(e, x)| vec![e, x]).collect();
    art.csv("compare.csv", &["epsilon", "l2_error"], &rows)?;
    let report = json!({
        "time": cfg.compare.time,
        "epsilons": pairs.iter().map(|p| p.0).collect::<Vec<_>>(),
        "l2_errors": pairs.iter().map(|p| p.1).collect::<Vec<_>>(),
        "monotone_decreasing": monotone,
    });
    art.json("compare.json", Command::Compare, report)
}

/// One entry of the invariant suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub note: String,
}

fn check(name: &str, value: f64, tolerance: f64, note: &str) -> Check {
    Check {
        name: name.into(),
        pass: value <= tolerance,
        value,
        tolerance,
        note: note.into(),
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Runs the invariant suite on short horizons of the configured problem.
pub fn invariant_suite(cfg: &RunConfig) -> Outcome<Vec<Check>> {
    let dom = cfg.domain()?;
    let sigma = cfg.conductivity()?;
    let psi = cfg.boundary_data()?;
    let f = cfg.nonlinearity()?;
    let params = cfg.solver_params()?;
    let sys = MicroSystem::new(&dom, &sigma, &psi, cfg.alpha)?;
    let s = cfg.initial_jump()?;
    let w0 = s.micro_values(&dom);
    let short = 20;
    let mut out = Vec::new();

    let gap = (dom.membrane_measure() - dom.membrane_measure_analytic()).abs();
    out.push(check("membrane_measure", gap, 1e-12, "grid membrane measure equals the analytic value"));
    let cert = f.certificate();
    out.push(check(
        "nonlinearity_certificate",
        if cert.monotone && cert.f0_zero { 0.0 } else { 1.0 },
        0.0,
        "f is increasing with f(0) = 0 on the sampled range",
    ));

    let schur = sys.schur().to_nalgebra();
    let asym = (&schur - schur.transpose()).abs().max();
    out.push(check("schur_symmetric", asym, 1e-12, "membrane operator is symmetric"));
    let scale = schur.diagonal().max().max(1e-300);
    let min_eig = schur.symmetric_eigen().eigenvalues.min();
    out.push(check("schur_psd", (-min_eig / scale).max(0.0), 1e-10, "membrane operator is positive semidefinite"));

    let zero_sys = MicroSystem::new(&dom, &sigma, &BoundaryData::zero(), cfg.alpha)?;
    let mut zmax = 0.0f64;
    simulate_observed(&zero_sys, &f, &vec![0.0; dom.num_facets()], 0.0, short, &params, short, |_, st, _| {
        zmax = zmax.max(max_abs(&st.u)).max(max_abs(&st.w));
    })?;
    out.push(check("zero_data_zero_solution", zmax, 1e-13, "Ψ ≡ 0 and S ≡ 0 stay zero"));

    let c = 1.5;
    let const_sys = MicroSystem::new(&dom, &sigma, &BoundaryData::constant(c), cfg.alpha)?;
    let mut cmax = 0.0f64;
    simulate_observed(&const_sys, &f, &vec![0.0; dom.num_facets()], 0.0, short, &params, short, |_, st, _| {
        let du = st.u.iter().fold(0.0f64, |m, x| m.max((x - c).abs()));
        cmax = cmax.max(du).max(max_abs(&st.w));
    })?;
    out.push(check("constant_data_constant_state", cmax, 1e-12, "Ψ ≡ c gives u ≡ c and zero jump"));

    let mut diss = 0.0f64;
    let mut trace = 0.0f64;
    let traj = simulate_observed(&sys, &f, &w0, 0.0, short, &params, 1, |_, st, rec| {
        diss = diss.max(rec.dissipation_residual);
        trace = trace.max(st.flux_residual);
    })?;
    out.push(check("energy_balance", diss, 1e-8, "per-step discrete energy identity"));
    out.push(check("flux_continuity", trace, 1e-8, "one-sided fluxes agree at every facet"));

    let other = InitialJump::new(InitKind::Random, 1.0, MacroProfile::Flat, cfg.seed.wrapping_add(1)).micro_values(&dom);
    let traj_b = simulate_observed(&sys, &f, &other, 0.0, short, &params, 1, |_, _, _| {})?;
    let lyap = lyapunov_series(&sys, &traj, &traj_b)?;
    out.push(check(
        "lyapunov_monotone",
        lyap.max_increase.max(0.0),
        1e-10,
        "difference energy of two runs is nonincreasing",
    ));

    if f.is_odd() {
        let neg_sys = MicroSystem::new(&dom, &sigma, &psi.negated(), cfg.alpha)?;
        let neg0: Vec<f64> = w0.iter().map(|x| -x).collect();
        let neg = simulate_observed(&neg_sys, &f, &neg0, 0.0, short, &params, short, |_, _, _| {})?;
        let gap = traj
            .final_jump()
            .iter()
            .zip(neg.final_jump())
            .fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
        out.push(check("odd_symmetry", gap, 1e-10, "(−Ψ, −S) gives the negated solution"));
    }

    let ts = two_scale_system(cfg)?;
    let s1 = ts.initial_jump(&s);
    let mut mean = 0.0f64;
    let mut macro_res = 0.0f64;
    let mut flux = 0.0f64;
    let head = simulate_two_scale_observed(&ts, &f, &s1, 0.0, short, &params, 1, |_, st, _| {
        mean = mean.max(st.mean_residual);
        macro_res = macro_res.max(st.macro_residual);
        flux = flux.max(st.flux_residual);
    })?;
    out.push(check("two_scale_zero_mean", mean, 1e-12, "correctors have zero cell mean"));
    out.push(check("two_scale_macro_residual", macro_res, 1e-8, "macro equation residual"));
    out.push(check("two_scale_flux_continuity", flux, 1e-8, "cell flux continuity across the membrane"));
    let weak = weak_form_residuals(&ts, &f, &s1, &head)?;
    out.push(check(
        "two_scale_weak_form",
        weak.max_residual(),
        1e-8,
        "discrete weak form against macro, cell and jump test functions",
    ));
    let zero_ts = TwoScaleSystem::new(ts.mesh(), ts.cell(), &BoundaryData::zero(), cfg.alpha)?;
    let mut zts = 0.0f64;
    simulate_two_scale_observed(&zero_ts, &f, &vec![0.0; ts.num_jumps()], 0.0, short, &params, short, |_, st, _| {
        zts = zts
            .max(max_abs(&st.u))
            .max(max_abs(&st.w))
            .max(st.correctors.iter().map(|c| max_abs(c)).fold(0.0, f64::max));
    })?;
    out.push(check("two_scale_zero_solution", zts, 1e-13, "Ψ ≡ 0 and S₁ ≡ 0 stay zero"));
    Ok(out)
}

fn verify(cfg: &RunConfig, art: &Artifacts) -> Outcome<()> {
    let checks = invariant_suite(cfg)?;
    let all = checks.iter().all(|c| c.pass);
    let mut summary = String::new();
    for c in &checks {
        let _ = writeln!(
            summary,
            "{} {:<32} {:>12.3e} (tol {:.0e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    log::info!("invariant suite:\n{summary}");
    art.json(
        "verify.json",
        Command::Verify,
        json!({ "all_pass": all, "checks": to_value(&checks) }),
    )?;
    if all {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(Failure::new(EXIT_INVARIANT, format!("invariant checks failed: {}", failed.join(", "))))
    }
}
