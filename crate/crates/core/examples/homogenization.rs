//! Bulk error between the ε-problem and the two-scale limit as ε shrinks.

use tissue::config::RunConfig;
use tissue::micro::{advance, MicroSystem};
use tissue::two_scale::{assemble_cell_operator, bulk_l2_error, MacroMesh, TwoScaleSystem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_toml_str("[f]\nkind = \"linear\"\n")?;
    let f = cfg.nonlinearity()?;
    let psi = cfg.boundary_data()?;
    let sigma = cfg.conductivity()?;
    let p = cfg.solver_params()?;
    let steps = p.steps_per_period()?;
    let s1 = cfg.initial_jump()?;

    let op = assemble_cell_operator(&cfg.cell()?, &sigma)?;
    let ts = TwoScaleSystem::new(&MacroMesh::new(cfg.macro_grid.dimension, cfg.macro_grid.resolution)?, &op, &psi, cfg.alpha)?;
    let mut wm = ts.initial_jump(&s1);
    for k in 1..=steps {
        wm = ts.step_jump(&wm, k as f64 * p.dt, &f, &p)?.w;
    }

    for eps in [0.5, 0.25, 0.125] {
        let dom = cfg.domain_at(eps)?;
        let micro = MicroSystem::new(&dom, &sigma, &psi, cfg.alpha)?;
        let w = advance(&micro, &f, &s1.micro_values(&dom), 0.0, steps, &p)?;
        println!("ε = {eps:<5}  ‖u_ε − u‖ at t = 1: {:.4e}", bulk_l2_error(&micro, &w, &ts, &wm, 1.0)?);
    }
    Ok(())
}
