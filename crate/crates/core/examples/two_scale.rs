//! Two-scale limit: cell operator, periodic orbit and decay of the four norms.

use tissue::config::RunConfig;
use tissue::forcing::{InitKind, InitialJump, MacroProfile};
use tissue::nonlinearity::fit_growth_constants;
use tissue::two_scale::{
    assemble_cell_operator, find_periodic_two_scale, orbit_energy_bound, simulate_two_scale_observed,
    two_scale_decay_metrics, MacroMesh, TwoScaleSystem,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let op = assemble_cell_operator(&cfg.cell()?, &cfg.conductivity()?)?;
    println!("effective conductivity without membrane: {:?}", op.effective_conductivity());

    let sys = TwoScaleSystem::new(&MacroMesh::new(2, 4)?, &op, &cfg.boundary_data()?, cfg.alpha)?;
    let f = cfg.nonlinearity()?;
    let p = cfg.solver_params()?;
    let orbit = find_periodic_two_scale(&sys, &f, &p, &cfg.periodic_params()?, &vec![0.0; sys.num_jumps()])?;
    let (l1, l2) = fit_growth_constants(&f, cfg.f.sample_range)?;
    let bound = orbit_energy_bound(&sys, &orbit, l1, l2)?;
    println!("orbit after {} periods; energy bound {:.4e} ≤ {:.4e}", orbit.iterations, bound.lhs, bound.gamma);

    let w0 = sys.initial_jump(&InitialJump::new(InitKind::Random, 1.0, MacroProfile::Bump, 1));
    let n = p.steps_per_period()?;
    let mut mean = 0.0f64;
    let traj = simulate_two_scale_observed(&sys, &f, &w0, 0.0, 10 * n, &p, n, |_, st, _| mean = mean.max(st.mean_residual))?;
    let rep = two_scale_decay_metrics(&sys, &f, &traj, &orbit)?;
    for (i, t) in rep.times.iter().enumerate() {
        println!(
            "t = {t:>4.1}  H¹ {:.3e}  u¹ {:.3e}  ∇_y u¹ {:.3e}  [u¹] {:.3e}",
            rep.norm_h1[i], rep.norm_corrector[i], rep.norm_grad_y[i], rep.norm_jump[i]
        );
    }
    println!("worst final/initial {:.2e}; max |mean_Y u¹| {mean:.1e}", rep.worst_reduction());
    Ok(())
}
