//! Micro simulation: bulk norms and the per-step energy balance.

use tissue::config::RunConfig;
use tissue::micro::{simulate_observed, MicroSystem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_toml_str("[init]\nkind = \"random\"\n[time]\nhorizon = 1.0\n")?;
    let sys = MicroSystem::new(&cfg.domain()?, &cfg.conductivity()?, &cfg.boundary_data()?, cfg.alpha)?;
    let f = cfg.nonlinearity()?;
    let p = cfg.solver_params()?;
    let w0 = cfg.initial_jump()?.micro_values(sys.domain());

    let mut worst_balance = 0.0f64;
    let mut newton = 0;
    let traj = simulate_observed(&sys, &f, &w0, 0.0, 1000, &p, 100, |_, _, rec| {
        worst_balance = worst_balance.max(rec.dissipation_residual.abs());
        newton += rec.newton_iters;
    })?;
    for st in traj.states(&sys)? {
        let b = sys.boundary_values(st.t);
        println!(
            "t = {:.2}  ‖u‖ = {:.5}  ‖∇u‖ = {:.5}  ‖w‖ = {:.5}",
            st.t,
            sys.bulk().l2_norm(&st.u),
            sys.bulk().grad_norm(&st.u, &st.w, &b),
            sys.bulk().jump_norm(&st.w)
        );
    }
    println!("energy balance defect ≤ {worst_balance:.2e}; {newton} Newton iterations in total");
    Ok(())
}
