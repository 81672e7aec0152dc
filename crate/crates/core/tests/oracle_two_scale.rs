mod common;

use common::{rel_err, TwoScaleOracle};
use tissue::forcing::{BoundaryData, InitKind, InitialJump, MacroProfile, SpatialProfile, TemporalProfile};
use tissue::geometry::{CellGeometry, Conductivity, EpsilonDomain};
use tissue::micro::{MicroSystem, SolverParams};
use tissue::nonlinearity::{Kind, Nonlinearity};
use tissue::two_scale::{assemble_cell_operator, MacroMesh, TwoScaleSystem};

fn run_against_oracle(dim: usize, resolution: usize, m: usize, spatial: SpatialProfile) {
    let cell = CellGeometry::new(dim, 0.25, m).unwrap();
    let sigma = Conductivity::new(3.0, 1.0).unwrap();
    let psi = BoundaryData::new(1.0, spatial, TemporalProfile::OffsetSine { c0: 0.5, c1: 1.0 }).unwrap();
    let mesh = MacroMesh::new(dim, resolution).unwrap();
    let (alpha, kappa, dt) = (0.8, 1.5, 0.02);
    let sys = TwoScaleSystem::new(&mesh, &assemble_cell_operator(&cell, &sigma).unwrap(), &psi, alpha).unwrap();
    let oracle = TwoScaleOracle::new(&mesh, &cell, &sigma, &psi, alpha, kappa, dt);
    let f = Nonlinearity::linear(kappa).unwrap();
    let p = SolverParams::new(dt).unwrap();
    let mut w = sys.initial_jump(&InitialJump::new(InitKind::Random, 1.0, MacroProfile::Bump, 5));
    let mut wo = w.clone();
    for n in 1..=25 {
        let t = n as f64 * dt;
        w = sys.step_jump(&w, t, &f, &p).unwrap().w;
        let lvl = oracle.step(&wo, t);
        wo = lvl.w.clone();
        let tag = format!("dim {dim}, M = {resolution}, step {n}");
        assert!(rel_err(&w, &lvl.w) < 1e-9, "{tag}: jumps {}", rel_err(&w, &lvl.w));
        let st = sys.state(t, &w).unwrap();
        assert!(rel_err(&st.u, &lvl.u) < 1e-9, "{tag}: macro {}", rel_err(&st.u, &lvl.u));
        let c: Vec<f64> = st.correctors.concat();
        let co: Vec<f64> = lvl.correctors.concat();
        assert!(rel_err(&c, &co) < 1e-9, "{tag}: correctors {}", rel_err(&c, &co));
    }
}

#[test]
fn single_square_matches_monolithic_oracle() {
    run_against_oracle(2, 1, 8, SpatialProfile::default_affine());
}

#[test]
fn two_by_two_mesh_matches_monolithic_oracle() {
    run_against_oracle(2, 2, 4, SpatialProfile::default_sines());
}

#[test]
fn one_dimensional_mesh_matches_monolithic_oracle() {
    run_against_oracle(1, 4, 8, SpatialProfile::default_sines());
}

/// With `Ψ` constant in space and a jump that is the same on every facet,
/// bulk currents vanish in both models and each facet relaxes by
/// `α ẇ + f(w) = 0`; the micro problem at `ε = 1` and the two-scale cell
/// dynamics must then coincide.
#[test]
fn uniform_jump_reduces_to_micro_cell_dynamics() {
    for dim in [1, 2] {
        let cell = CellGeometry::new(dim, 0.25, 8).unwrap();
        let sigma = Conductivity::new(2.0, 1.0).unwrap();
        let psi = BoundaryData::new(0.7, SpatialProfile::Constant, TemporalProfile::Sine).unwrap();
        let f = Nonlinearity::builtin(Kind::Noncoercive, 1.0).unwrap();
        let p = SolverParams::new(0.01).unwrap();
        let micro = MicroSystem::new(&EpsilonDomain::new(&cell, 1.0, 1024.0).unwrap(), &sigma, &psi, 1.0).unwrap();
        let ts = TwoScaleSystem::new(
            &MacroMesh::new(dim, 1).unwrap(),
            &assemble_cell_operator(&cell, &sigma).unwrap(),
            &psi,
            1.0,
        )
        .unwrap();
        let mut wm = vec![0.8; micro.num_facets()];
        let mut wt = vec![0.8; ts.num_jumps()];
        for n in 1..=100 {
            let t = n as f64 * p.dt;
            wm = micro.step_jump(&wm, t, &f, &p).unwrap().w;
            wt = ts.step_jump(&wt, t, &f, &p).unwrap().w;
            for x in wm.iter().chain(&wt) {
                assert!((x - wm[0]).abs() < 1e-9, "dim {dim} step {n}: {x} vs {}", wm[0]);
            }
            let mean = ts.state(t, &wt).unwrap().mean_residual;
            assert!(mean <= 1e-12);
        }
        assert!(wm[0] < 0.8 * 0.5);
    }
}
