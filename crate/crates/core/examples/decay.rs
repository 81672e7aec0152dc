//! Exponential approach to the periodic orbit and the fitted rate.

use tissue::config::RunConfig;
use tissue::decay::{decay_metrics, measure_constants};
use tissue::micro::{simulate_observed, MicroSystem};
use tissue::periodic::find_periodic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_toml_str("[geometry]\nepsilon = 0.5\n[f]\nkind = \"linear\"\n[init]\nkind = \"random\"\n")?;
    let sys = MicroSystem::new(&cfg.domain()?, &cfg.conductivity()?, &cfg.boundary_data()?, cfg.alpha)?;
    let f = cfg.nonlinearity()?;
    let p = cfg.solver_params()?;
    let orbit = find_periodic(&sys, &f, &p, &cfg.periodic_params()?, &vec![0.0; sys.num_facets()])?;

    let w0 = cfg.initial_jump()?.micro_values(sys.domain());
    let n = p.steps_per_period()?;
    let traj = simulate_observed(&sys, &f, &w0, 0.0, 5 * n, &p, n / 4, |_, _, _| {})?;
    let rep = decay_metrics(&sys, &f, &traj, &orbit, Some(measure_constants(&sys)?))?;
    for (i, t) in rep.times.iter().enumerate() {
        println!(
            "t = {t:.2}  ‖u − u#‖ = {:.3e}  ‖∇(u − u#)‖ = {:.3e}  ‖w − w#‖ = {:.3e}  E = {:.3e}",
            rep.norm_l2[i], rep.norm_grad[i], rep.norm_jump[i], rep.lyapunov.values[i]
        );
    }
    println!(
        "{:?}: rate {:.4} (R² = {:.5}), Lyapunov monotone: {}",
        rep.rate.classification, rep.rate.rate.unwrap_or(f64::NAN), rep.rate.r_squared, rep.lyapunov.monotone
    );
    println!("elliptic bound held: {:?}, Poincaré bound held: {:?}", rep.elliptic_check, rep.poincare_check);
    Ok(())
}
