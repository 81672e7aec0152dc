//! Periodic orbit by damped Picard iteration, the δ-regularized sequence
//! and the discrete a-priori estimates.

use tissue::config::RunConfig;
use tissue::micro::MicroSystem;
use tissue::nonlinearity::fit_growth_constants;
use tissue::periodic::{find_periodic, find_periodic_regularized, orbit_distance, verify_energy_estimates};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let sys = MicroSystem::new(&cfg.domain()?, &cfg.conductivity()?, &cfg.boundary_data()?, cfg.alpha)?;
    let f = cfg.nonlinearity()?;
    let p = cfg.solver_params()?;
    let pp = cfg.periodic_params()?;
    let zero = vec![0.0; sys.num_facets()];

    let orbit = find_periodic(&sys, &f, &p, &pp, &zero)?;
    println!("{}: Picard converged in {} periods, defect {:.2e}", f.describe(), orbit.iterations, orbit.defect);

    let sweep = find_periodic_regularized(&sys, &f, &p, &pp, &[0.1, 0.01, 0.001], &zero)?;
    for (d, o) in sweep.deltas.iter().zip(&sweep.orbits) {
        println!("δ = {d:<6} distance to unregularized orbit {:.3e}", orbit_distance(&sys, o, &orbit)?);
    }
    println!("consecutive differences: {:?}", sweep.differences);

    let (l1, l2) = fit_growth_constants(&f, cfg.f.sample_range)?;
    let r = verify_energy_estimates(&sys, &orbit, l1, l2)?;
    println!(
        "gradient estimate: {:.4e} ≤ {:.4e}; time-derivative estimate: {:.4e} ≤ {:.4e}",
        r.gradient_bound.lhs, r.gradient_bound.rhs, r.time_derivative_bound.lhs, r.time_derivative_bound.rhs
    );
    Ok(())
}
