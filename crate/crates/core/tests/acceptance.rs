//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::time::Instant;

use common::{rel_err, MicroOracle};
use tissue::config::RunConfig;
use tissue::decay::{decay_metrics, Classification};
use tissue::forcing::{BoundaryData, InitKind, InitialJump, MacroProfile};
use tissue::membrane::{jump_norm, lyapunov};
use tissue::micro::{simulate, simulate_observed, MicroSystem, SolverParams};
use tissue::nonlinearity::{fit_growth_constants, Kind, Nonlinearity};
use tissue::periodic::{
    find_periodic, find_periodic_regularized, orbit_distance, poincare_map, verify_energy_estimates, PeriodicOrbit,
    PeriodicParams,
};
use tissue::two_scale::{
    assemble_cell_operator, bulk_l2_error, find_periodic_two_scale, simulate_two_scale_observed,
    two_scale_decay_metrics, MacroMesh, TwoScaleSystem,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Default problem: ε = 1/4, m = 8, Δt = 10⁻³, affine `Ψ` with `sin 2πt`.
fn defaults() -> RunConfig {
    RunConfig::default()
}

fn micro_system(cfg: &RunConfig) -> MicroSystem {
    MicroSystem::new(&cfg.domain().unwrap(), &cfg.conductivity().unwrap(), &cfg.boundary_data().unwrap(), cfg.alpha)
        .unwrap()
}

fn random_jump(sys: &MicroSystem, seed: u64) -> Vec<f64> {
    InitialJump::new(InitKind::Random, 1.0, MacroProfile::Flat, seed).micro_values(sys.domain())
}

fn f_of(kind: Kind) -> Nonlinearity {
    Nonlinearity::builtin(kind, 1.0).unwrap()
}

fn orbit(sys: &MicroSystem, f: &Nonlinearity, p: &SolverParams) -> PeriodicOrbit {
    find_periodic(sys, f, p, &PeriodicParams::default(), &vec![0.0; sys.num_facets()]).unwrap()
}

/// Paired runs over ten periods for three nonlinearities.
fn lyapunov_monotonicity() -> Outcome {
    let cfg = defaults();
    let sys = micro_system(&cfg);
    let p = cfg.solver_params().unwrap();
    let steps = 10 * p.steps_per_period().unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut lines = Vec::new();
    for kind in [Kind::Linear, Kind::Noncoercive, Kind::Cubic] {
        let f = f_of(kind);
        let (mut a, mut b) = (random_jump(&sys, 1), random_jump(&sys, 2));
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        let mut e = lyapunov(&sys, &diff(&a, &b));
        let e0 = e;
        let mut inc = f64::NEG_INFINITY;
        for n in 1..=steps {
            let t = n as f64 * p.dt;
            a = sys.step_jump(&a, t, &f, &p).unwrap().w;
            b = sys.step_jump(&b, t, &f, &p).unwrap().w;
            let next = lyapunov(&sys, &diff(&a, &b));
            inc = inc.max(next - e);
            e = next;
        }
        worst = worst.max(inc);
        lines.push(format!("{}: max ΔE = {inc:.2e}, E(10)/E(0) = {:.2e}", kind.name(), e / e0));
    }
    outcome(worst <= 1e-10, lines.join("; "))
}

/// Decay to the orbit: noncoercive norms and the linear rate.
fn decay_to_orbit(linear_orbit: &PeriodicOrbit) -> Outcome {
    let cfg = defaults();
    let sys = micro_system(&cfg);
    let p = cfg.solver_params().unwrap();
    let n = p.steps_per_period().unwrap();
    let w0 = random_jump(&sys, 7);

    let f = f_of(Kind::Noncoercive);
    let orb = orbit(&sys, &f, &p);
    let traj = simulate_observed(&sys, &f, &w0, 0.0, 50 * n, &p, 100, |_, _, _| {}).unwrap();
    let rep = decay_metrics(&sys, &f, &traj, &orb, None).unwrap();
    let reduction = rep.worst_reduction();
    let noncoercive_ok = reduction < 1e-3 && rep.lyapunov.monotone;

    let lin = f_of(Kind::Linear);
    let traj = simulate_observed(&sys, &lin, &w0, 0.0, 5 * n, &p, 10, |_, _, _| {}).unwrap();
    let rep = decay_metrics(&sys, &lin, &traj, linear_orbit, None).unwrap();
    let oracle = MicroOracle::new(
        sys.domain(),
        &cfg.conductivity().unwrap(),
        &BoundaryData::zero(),
        cfg.alpha,
        1.0,
        p.dt,
    );
    // The fit is on the squared norm, so it decays at twice the modal rate.
    let expected = 2.0 * oracle.slowest_rate();
    let rate = rep.rate.rate.unwrap_or(f64::NAN);
    let rel = ((rate - expected) / expected).abs();
    let linear_ok = rep.rate.r_squared >= 0.99 && rel <= 0.05 && rep.rate.classification == Classification::Exponential;
    outcome(
        noncoercive_ok && linear_ok && sys.num_facets() <= 500,
        format!(
            "s+sin s: worst final/initial over 50 periods = {reduction:.2e}; linear: rate {rate:.4} vs oracle {expected:.4} \
             (rel. diff {rel:.2e}), R² = {:.5}",
            rep.rate.r_squared
        ),
    )
}

/// Regularized orbits approach the direct one.
fn delta_regularization(picard: &PeriodicOrbit) -> Outcome {
    let cfg = defaults();
    let sys = micro_system(&cfg);
    let p = cfg.solver_params().unwrap();
    let f = f_of(Kind::Noncoercive);
    let sweep = find_periodic_regularized(
        &sys,
        &f,
        &p,
        &PeriodicParams::default(),
        &[0.1, 0.01, 0.001],
        &vec![0.0; sys.num_facets()],
    )
    .unwrap();
    let d = &sweep.differences;
    let decreasing = d.windows(2).all(|x| x[1] < x[0]);
    let dist = orbit_distance(&sys, sweep.orbits.last().unwrap(), picard).unwrap();
    outcome(
        decreasing && dist <= 1e-4,
        format!("consecutive differences {d:?}; distance to Picard orbit {dist:.3e}"),
    )
}

/// Both a-priori estimates on three orbits.
fn energy_estimates(orbits: &[(Kind, &PeriodicOrbit)]) -> Outcome {
    let cfg = defaults();
    let sys = micro_system(&cfg);
    let mut ok = true;
    let mut lines = Vec::new();
    for (kind, orb) in orbits {
        let f = f_of(*kind);
        let (l1, l2) = fit_growth_constants(&f, cfg.f.sample_range).unwrap();
        let r = verify_energy_estimates(&sys, orb, l1, l2).unwrap();
        ok &= r.gradient_bound.pass && r.time_derivative_bound.pass;
        ok &= r.gradient_bound.margin >= 0.0 && r.time_derivative_bound.margin >= 0.0;
        lines.push(format!(
            "{}: margins {:.3e} / {:.3e}",
            kind.name(),
            r.gradient_bound.margin,
            r.time_derivative_bound.margin
        ));
    }
    outcome(ok, lines.join("; "))
}

/// Steps, period map, fixed point and Lyapunov values against the dense oracle.
fn oracle_equivalence(linear_orbit: &PeriodicOrbit) -> Outcome {
    let cfg = defaults();
    let sys = micro_system(&cfg);
    let p = cfg.solver_params().unwrap();
    let n = p.steps_per_period().unwrap();
    let unknowns = sys.domain().num_bulk() + sys.num_facets();
    let dom = sys.domain();
    let oracle = MicroOracle::new(dom, &cfg.conductivity().unwrap(), &cfg.boundary_data().unwrap(), cfg.alpha, 1.0, p.dt);
    let f = f_of(Kind::Linear);

    let (mut a, mut b) = (random_jump(&sys, 3), random_jump(&sys, 4));
    let (mut oa, mut ob) = (a.clone(), b.clone());
    let mut step_err = 0.0f64;
    let mut lyap_err = 0.0f64;
    for k in 1..=n {
        let t = k as f64 * p.dt;
        a = sys.step_jump(&a, t, &f, &p).unwrap().w;
        b = sys.step_jump(&b, t, &f, &p).unwrap().w;
        let (ua, na) = oracle.step(&oa, t);
        oa = na;
        ob = oracle.step(&ob, t).1;
        step_err = step_err.max(rel_err(&a, &oa));
        step_err = step_err.max(rel_err(&sys.bulk_potential(t, &a).unwrap(), &ua));
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let e = oracle.lyapunov(&oa, &ob);
        lyap_err = lyap_err.max((lyapunov(&sys, &diff) - e).abs() / e);
    }
    let w0 = random_jump(&sys, 5);
    let map_err = rel_err(&poincare_map(&sys, &f, &p, &w0).unwrap(), &oracle.advance(&w0, n));
    let fixed = oracle.periodic_fixed_point(n);
    let tight = find_periodic(
        &sys,
        &f,
        &p,
        &PeriodicParams {
            tol: 1e-12,
            ..Default::default()
        },
        linear_orbit.initial(),
    )
    .unwrap();
    let fixed_err = rel_err(tight.initial(), &fixed);
    let worst = step_err.max(lyap_err).max(map_err).max(fixed_err);
    outcome(
        worst <= 1e-8 && unknowns <= 2000,
        format!(
            "{unknowns} unknowns; relative errors: steps {step_err:.1e}, period map {map_err:.1e}, \
             fixed point {fixed_err:.1e}, Lyapunov {lyap_err:.1e}"
        ),
    )
}

fn two_scale_system(cfg: &RunConfig, psi: &BoundaryData) -> TwoScaleSystem {
    let op = assemble_cell_operator(&cfg.cell().unwrap(), &cfg.conductivity().unwrap()).unwrap();
    TwoScaleSystem::new(&MacroMesh::new(2, 4).unwrap(), &op, psi, cfg.alpha).unwrap()
}

/// Four two-scale norms decay over 50 periods with zero-mean correctors.
fn two_scale_decay() -> Outcome {
    let cfg = defaults();
    let sys = two_scale_system(&cfg, &cfg.boundary_data().unwrap());
    let p = cfg.solver_params().unwrap();
    let n = p.steps_per_period().unwrap();
    let f = f_of(Kind::Noncoercive);
    let orb = find_periodic_two_scale(&sys, &f, &p, &PeriodicParams::default(), &vec![0.0; sys.num_jumps()]).unwrap();
    let mut mean = orb
        .jumps
        .iter()
        .enumerate()
        .map(|(k, w)| sys.state(k as f64 * p.dt, w).unwrap().mean_residual)
        .fold(0.0, f64::max);
    let w0 = sys.initial_jump(&InitialJump::new(InitKind::Random, 1.0, MacroProfile::Bump, 3));
    let traj = simulate_two_scale_observed(&sys, &f, &w0, 0.0, 50 * n, &p, 100, |_, st, _| {
        mean = mean.max(st.mean_residual);
    })
    .unwrap();
    let rep = two_scale_decay_metrics(&sys, &f, &traj, &orb).unwrap();
    let series = [&rep.norm_h1, &rep.norm_corrector, &rep.norm_grad_y, &rep.norm_jump];
    let ratios: Vec<f64> = series.iter().map(|s| s.last().unwrap() / s[0]).collect();
    let excited = series.iter().all(|s| s[0] > 1e-6);
    let ok = excited && ratios.iter().all(|&r| r < 1e-3) && mean <= 1e-12;
    outcome(
        ok,
        format!(
            "{} elements × {} cells; final/initial H1 {:.1e}, corrector {:.1e}, ∇_y {:.1e}, jump {:.1e}; max |mean u¹| {mean:.1e}",
            sys.mesh().num_elements(),
            sys.cell().num_cells(),
            ratios[0],
            ratios[1],
            ratios[2],
            ratios[3]
        ),
    )
}

/// Micro vs two-scale bulk error at t = 1 for shrinking ε.
fn homogenization_consistency() -> Outcome {
    let mut cfg = defaults();
    cfg.f.kind = "linear".into();
    let f = cfg.nonlinearity().unwrap();
    let psi = cfg.boundary_data().unwrap();
    let p = cfg.solver_params().unwrap();
    let steps = p.steps_per_period().unwrap();
    let s1 = cfg.initial_jump().unwrap();
    let ts = two_scale_system(&cfg, &psi);
    let mut wm = ts.initial_jump(&s1);
    for k in 1..=steps {
        wm = ts.step_jump(&wm, k as f64 * p.dt, &f, &p).unwrap().w;
    }
    let mut errors = Vec::new();
    for eps in [0.5, 0.25, 0.125] {
        let dom = cfg.domain_at(eps).unwrap();
        let sys = MicroSystem::new(&dom, &cfg.conductivity().unwrap(), &psi, cfg.alpha).unwrap();
        let w = tissue::micro::advance(&sys, &f, &s1.micro_values(&dom), 0.0, steps, &p).unwrap();
        errors.push(bulk_l2_error(&sys, &w, &ts, &wm, 1.0).unwrap());
    }
    let monotone = errors.windows(2).all(|e| e[1] < e[0]);
    outcome(monotone, format!("L² errors at t = 1 for ε = 1/2, 1/4, 1/8: {errors:?}"))
}

/// Zero data gives zero; constant data gives a constant orbit.
fn trivial_exactness() -> Outcome {
    let cfg = defaults();
    let p = cfg.solver_params().unwrap();
    let f = f_of(Kind::Noncoercive);
    let dom = cfg.domain().unwrap();
    let sigma = cfg.conductivity().unwrap();
    let pp = PeriodicParams::default();
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let zero = MicroSystem::new(&dom, &sigma, &BoundaryData::zero(), cfg.alpha).unwrap();
    let nf = zero.num_facets();
    let mut z = 0.0f64;
    simulate_observed(&zero, &f, &vec![0.0; nf], 0.0, 200, &p, 200, |_, st, _| {
        z = z.max(max_abs(&st.u)).max(max_abs(&st.w));
    })
    .unwrap();
    let orb = find_periodic(&zero, &f, &p, &pp, &vec![0.0; nf]).unwrap();
    z = z.max(orb.jumps.iter().map(|w| max_abs(w)).fold(0.0, f64::max));
    let ts0 = two_scale_system(&cfg, &BoundaryData::zero());
    simulate_two_scale_observed(&ts0, &f, &vec![0.0; ts0.num_jumps()], 0.0, 200, &p, 200, |_, st, _| {
        let c = st.correctors.iter().map(|c| max_abs(c)).fold(0.0, f64::max);
        z = z.max(max_abs(&st.u)).max(max_abs(&st.w)).max(c);
    })
    .unwrap();
    let orb = find_periodic_two_scale(&ts0, &f, &p, &pp, &vec![0.0; ts0.num_jumps()]).unwrap();
    z = z.max(orb.jumps.iter().map(|w| max_abs(w)).fold(0.0, f64::max));

    let c = 1.7;
    let cst = MicroSystem::new(&dom, &sigma, &BoundaryData::constant(c), cfg.alpha).unwrap();
    let orb = find_periodic(&cst, &f, &p, &pp, &vec![0.0; cst.num_facets()]).unwrap();
    let mut cw = 0.0f64;
    let mut cu = 0.0f64;
    for (k, w) in orb.jumps.iter().enumerate() {
        cw = cw.max(max_abs(w));
        let u = cst.bulk_potential(k as f64 * p.dt, w).unwrap();
        cu = cu.max(u.iter().fold(0.0f64, |m, x| m.max((x - c).abs())));
    }
    let ts = two_scale_system(&cfg, &BoundaryData::constant(c));
    let orb = find_periodic_two_scale(&ts, &f, &p, &pp, &vec![0.0; ts.num_jumps()]).unwrap();
    for (k, w) in orb.jumps.iter().enumerate() {
        let st = ts.state(k as f64 * p.dt, w).unwrap();
        cw = cw.max(max_abs(w));
        cu = cu.max(st.u.iter().fold(0.0f64, |m, x| m.max((x - c).abs())));
    }
    // A perturbed start still lands on the same orbit.
    let from_random = find_periodic(&cst, &f, &p, &pp, &random_jump(&cst, 8)).unwrap();
    let reach = from_random.jumps.iter().map(|w| max_abs(w)).fold(0.0, f64::max);
    let ok = z <= 1e-13 && cw <= 1e-13 && cu <= 1e-13 && reach <= 10.0 * pp.tol;
    outcome(
        ok,
        format!(
            "zero data: max |·| = {z:.1e}; Ψ ≡ {c}: max |w| = {cw:.1e}, max |u − c| = {cu:.1e}, \
             perturbed start max |w| = {reach:.1e}"
        ),
    )
}

/// Negation symmetry for odd `f` and common-factor scaling for linear `f`.
fn symmetry_and_scaling() -> Outcome {
    let cfg = defaults();
    let p = cfg.solver_params().unwrap();
    let dom = cfg.domain().unwrap();
    let sigma = cfg.conductivity().unwrap();
    let psi = cfg.boundary_data().unwrap();
    let plus = MicroSystem::new(&dom, &sigma, &psi, cfg.alpha).unwrap();
    let minus = MicroSystem::new(&dom, &sigma, &psi.negated(), cfg.alpha).unwrap();
    let w0 = random_jump(&plus, 9);
    let neg0: Vec<f64> = w0.iter().map(|x| -x).collect();
    let mut odd = 0.0f64;
    for kind in [Kind::Linear, Kind::Coercive, Kind::Noncoercive, Kind::Cubic] {
        let f = f_of(kind);
        assert!(f.is_odd());
        let a = simulate(&plus, &f, &w0, 0.25, &p, 25).unwrap();
        let b = simulate(&minus, &f, &neg0, 0.25, &p, 25).unwrap();
        for ((k, wa), (_, wb)) in a.samples.iter().zip(&b.samples) {
            let t = a.time(*k);
            let ua = plus.bulk_potential(t, wa).unwrap();
            let ub = minus.bulk_potential(t, wb).unwrap();
            for (x, y) in wa.iter().zip(wb).chain(ua.iter().zip(&ub)) {
                odd = odd.max((x + y).abs());
            }
        }
    }
    let mut scale = 0.0f64;
    let base_f = Nonlinearity::linear(1.0).unwrap();
    let ta = simulate(&plus, &base_f, &w0, 0.25, &p, 25).unwrap();
    for c in [0.1, 3.0, 20.0] {
        let s = MicroSystem::new(&dom, &sigma.scaled(c), &psi, c * cfg.alpha).unwrap();
        let tb = simulate(&s, &Nonlinearity::linear(c).unwrap(), &w0, 0.25, &p, 25).unwrap();
        for ((k, wa), (_, wb)) in ta.samples.iter().zip(&tb.samples) {
            let t = ta.time(*k);
            let ua = plus.bulk_potential(t, wa).unwrap();
            let ub = s.bulk_potential(t, wb).unwrap();
            for (x, y) in wa.iter().zip(wb).chain(ua.iter().zip(&ub)) {
                scale = scale.max((x - y).abs());
            }
        }
    }
    outcome(
        odd <= 1e-10 && scale <= 1e-10,
        format!("negation max deviation {odd:.1e}; scaling max deviation {scale:.1e}"),
    )
}

#[test]
fn acceptance_criteria() {
    let cfg = defaults();
    let sys = micro_system(&cfg);
    let p = cfg.solver_params().unwrap();
    let start = Instant::now();
    let linear_orbit = orbit(&sys, &f_of(Kind::Linear), &p);
    let noncoercive_orbit = orbit(&sys, &f_of(Kind::Noncoercive), &p);
    let cubic_orbit = orbit(&sys, &f_of(Kind::Cubic), &p);
    let setup = start.elapsed().as_secs_f64();
    println!(
        "shared orbits: {:.1} s (iterations linear {}, s+sin s {}, s³+s {})",
        setup, linear_orbit.iterations, noncoercive_orbit.iterations, cubic_orbit.iterations
    );
    let orbit_norm = jump_norm(&sys, noncoercive_orbit.initial());

    type Run<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, f64, Run)> = vec![
        ("Lyapunov monotonicity", 120.0, Box::new(lyapunov_monotonicity)),
        ("decay to the periodic orbit", 300.0, Box::new(|| decay_to_orbit(&linear_orbit))),
        ("δ-regularization", 300.0, Box::new(|| delta_regularization(&noncoercive_orbit))),
        (
            "energy estimates",
            f64::INFINITY,
            Box::new(|| {
                energy_estimates(&[
                    (Kind::Linear, &linear_orbit),
                    (Kind::Noncoercive, &noncoercive_orbit),
                    (Kind::Cubic, &cubic_orbit),
                ])
            }),
        ),
        ("dense oracle equivalence", 60.0, Box::new(|| oracle_equivalence(&linear_orbit))),
        ("two-scale decay", 600.0, Box::new(two_scale_decay)),
        ("homogenization consistency", 600.0, Box::new(homogenization_consistency)),
        ("trivial exactness", f64::INFINITY, Box::new(trivial_exactness)),
        ("symmetry and scaling", f64::INFINITY, Box::new(symmetry_and_scaling)),
    ];
    let mut failed = Vec::new();
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run));
        let secs = t0.elapsed().as_secs_f64();
        let (pass, detail) = match res {
            Ok(o) => (o.pass && secs <= *budget, o.detail),
            Err(_) => (false, "panicked".to_string()),
        };
        let limit = if budget.is_finite() {
            format!(", limit {budget:.0} s")
        } else {
            String::new()
        };
        println!(
            "{} [{}] {name}: {detail} ({secs:.1} s{limit})",
            if pass { "PASS" } else { "FAIL" },
            i + 1
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    println!("periodic jump norm (s+sin s): {orbit_norm:.4e}");
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
