//! Weak-form certification of computed two-scale solutions.
//!
//! A discrete solution is tested against separable pairs `θ(t) (φ, Φ)`:
//! macro hat functions at interior vertices, cell indicators and unit
//! jumps on single facets, each on a single element. With `θ` vanishing at
//! both ends of the run (or 1-periodic for orbits) summation by parts turns
//! the backward-Euler scheme into
//!
//! ```text
//! Σ_n Δt [a(X^{n+1}, Φ^{n+1}) + ⟨f(w^{n+1}), [Φ^{n+1}]⟩]
//!   − α Σ_n ⟨w^n, [Φ^{n+1}] − [Φ^n]⟩ − α ⟨S₁, [Φ^1]⟩ = 0,
//! ```
//!
//! where the last term is absent for orbits.

use std::f64::consts::PI;

use serde::Serialize;

use super::{TwoScaleOrbit, TwoScaleState, TwoScaleSystem};
use crate::error::{Error, Result};
use crate::micro::Trajectory;
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakFormReport {
    pub tests: usize,
    pub macro_max: f64,
    pub cell_max: f64,
    pub membrane_max: f64,
}

impl WeakFormReport {
    pub fn max_residual(&self) -> f64 {
        self.macro_max.max(self.cell_max).max(self.membrane_max)
    }
}

struct Accumulator {
    profiles: usize,
    macro_res: Vec<Vec<f64>>,
    cell_res: Vec<Vec<f64>>,
    membrane_res: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new(sys: &TwoScaleSystem, profiles: usize) -> Self {
        let ne = sys.mesh.num_elements();
        Accumulator {
            profiles,
            macro_res: vec![vec![0.0; sys.mesh.num_interior()]; profiles],
            cell_res: vec![vec![0.0; ne * sys.cell.num_cells()]; profiles],
            membrane_res: vec![vec![0.0; sys.num_jumps()]; profiles],
        }
    }

    /// Space terms of one time level, weighted by `Δt θ_p`.
    fn add_level(&mut self, sys: &TwoScaleSystem, f: &Nonlinearity, st: &TwoScaleState, coeff: &[f64]) {
        let mesh = &sys.mesh;
        let cell = &sys.cell;
        let nc = cell.num_cells();
        let nf = cell.num_facets();
        let wt = &sys.weights;
        for e in 0..mesh.num_elements() {
            let area = mesh.measure(e);
            let we = &st.w[e * nf..(e + 1) * nf];
            let g = st.gradients[e];
            let c = &st.correctors[e];
            let cr = cell.equation_residual(g, c, we);
            let q = cell.currents(g, c, we);
            for p in 0..self.profiles {
                let a = coeff[p];
                for (&v, gr) in mesh.element(e).iter().zip(mesh.basis_gradients(e)) {
                    if let Some(i) = mesh.interior_index(v) {
                        self.macro_res[p][i] += a * area * (gr[0] * st.flux[e][0] + gr[1] * st.flux[e][1]);
                    }
                }
                for j in 0..nc {
                    self.cell_res[p][e * nc + j] += a * area * cr[j];
                }
                for k in 0..nf {
                    let idx = e * nf + k;
                    self.membrane_res[p][idx] += a * (-area * q[k] + wt[idx] * f.eval(st.w[idx]));
                }
            }
        }
    }

    /// `−α ⟨w, [Φ]⟩` contributions with per-profile factors.
    fn add_storage(&mut self, sys: &TwoScaleSystem, w: &[f64], coeff: &[f64]) {
        for p in 0..self.profiles {
            for (k, r) in self.membrane_res[p].iter_mut().enumerate() {
                *r -= sys.alpha * sys.weights[k] * w[k] * coeff[p];
            }
        }
    }

    fn report(&self) -> WeakFormReport {
        let mx = |v: &Vec<Vec<f64>>| v.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let tests = self.profiles * (self.macro_res[0].len() + self.cell_res[0].len() + self.membrane_res[0].len());
        WeakFormReport {
            tests,
            macro_max: mx(&self.macro_res),
            cell_max: mx(&self.cell_res),
            membrane_max: mx(&self.membrane_res),
        }
    }
}

fn full_samples(traj: &Trajectory) -> Result<()> {
    let ok = traj.stride == 1
        && traj.samples.len() == traj.records.len() + 1
        && traj.samples.iter().enumerate().all(|(i, (n, _))| *n == i);
    if ok {
        Ok(())
    } else {
        Err(Error::param("trajectory", "weak-form certification needs every time step"))
    }
}

/// Certifies a transient run started from `s1` against test functions
/// `sin(kπt/T)`, `k = 1, 2`, which vanish at `t = 0` and `t = T`.
pub fn weak_form_residuals(sys: &TwoScaleSystem, f: &Nonlinearity, s1: &[f64], traj: &Trajectory) -> Result<WeakFormReport> {
    full_samples(traj)?;
    sys.check_len(s1)?;
    let n_steps = traj.records.len();
    if n_steps < 2 {
        return Err(Error::param("trajectory", "need at least two steps"));
    }
    let dt = traj.dt;
    let span = n_steps as f64 * dt;
    let theta = |n: usize| -> [f64; 2] {
        let t = n as f64 * dt;
        [(PI * t / span).sin(), (2.0 * PI * t / span).sin()]
    };
    let mut acc = Accumulator::new(sys, 2);
    for n in 1..=n_steps {
        let w = &traj.samples[n].1;
        let st = sys.state(traj.time(n), w)?;
        let th = theta(n);
        acc.add_level(sys, f, &st, &[dt * th[0], dt * th[1]]);
        if n < n_steps {
            let nx = theta(n + 1);
            acc.add_storage(sys, w, &[nx[0] - th[0], nx[1] - th[1]]);
        }
    }
    acc.add_storage(sys, s1, &theta(1));
    Ok(acc.report())
}

/// Certifies an orbit against the 1-periodic profiles `1`, `cos 2πt`,
/// `sin 2πt`. The residual includes the orbit defect.
pub fn periodic_weak_form_residuals(sys: &TwoScaleSystem, f: &Nonlinearity, orbit: &TwoScaleOrbit) -> Result<WeakFormReport> {
    let n_steps = orbit.steps();
    if n_steps < 2 {
        return Err(Error::param("orbit", "need at least two steps"));
    }
    sys.check_len(orbit.initial())?;
    let dt = orbit.dt;
    let theta = |n: usize| -> [f64; 3] {
        let t = n as f64 * dt;
        [1.0, (2.0 * PI * t).cos(), (2.0 * PI * t).sin()]
    };
    let mut acc = Accumulator::new(sys, 3);
    for n in 1..=n_steps {
        let st = sys.state(n as f64 * dt, &orbit.jumps[n])?;
        let th = theta(n);
        acc.add_level(sys, f, &st, &[dt * th[0], dt * th[1], dt * th[2]]);
    }
    for n in 0..n_steps {
        let (a, b) = (theta(n), theta(n + 1));
        acc.add_storage(sys, &orbit.jumps[n], &[b[0] - a[0], b[1] - a[1], b[2] - a[2]]);
    }
    Ok(acc.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{BoundaryData, InitKind, InitialJump, MacroProfile, SpatialProfile, TemporalProfile};
    use crate::geometry::{build_cell_geometry, Conductivity};
    use crate::micro::SolverParams;
    use crate::nonlinearity::Kind;
    use crate::periodic::PeriodicParams;
    use crate::two_scale::{
        assemble_cell_operator, find_periodic_two_scale, simulate_two_scale_observed, MacroMesh, TwoScaleSystem,
    };

    fn system() -> TwoScaleSystem {
        let cell = build_cell_geometry(0.25, 4).unwrap();
        let op = assemble_cell_operator(&cell, &Conductivity::new(2.0, 1.0).unwrap()).unwrap();
        let psi = BoundaryData::new(0.5, SpatialProfile::default_affine(), TemporalProfile::Sine).unwrap();
        TwoScaleSystem::new(&MacroMesh::new(2, 3).unwrap(), &op, &psi, 1.0).unwrap()
    }

    #[test]
    fn transient_run_satisfies_weak_form() {
        let sys = system();
        let f = Nonlinearity::builtin(Kind::Noncoercive, 1.0).unwrap();
        let p = SolverParams::new(0.01).unwrap();
        let s1 = sys.initial_jump(&InitialJump::new(InitKind::Random, 0.5, MacroProfile::Bump, 7));
        let traj = simulate_two_scale_observed(&sys, &f, &s1, 0.0, 40, &p, 1, |_, _, _| {}).unwrap();
        let rep = weak_form_residuals(&sys, &f, &s1, &traj).unwrap();
        assert!(rep.max_residual() <= 1e-8, "{rep:?}");
        // A wrong initial datum must show up in the membrane tests.
        let wrong: Vec<f64> = s1.iter().map(|x| x + 0.1).collect();
        assert!(weak_form_residuals(&sys, &f, &wrong, &traj).unwrap().membrane_max > 1e-6);
    }

    #[test]
    fn orbit_satisfies_periodic_weak_form() {
        let sys = system();
        let f = Nonlinearity::linear(1.0).unwrap();
        let p = SolverParams::new(0.02).unwrap();
        let pp = PeriodicParams {
            tol: 1e-12,
            ..Default::default()
        };
        let orbit = find_periodic_two_scale(&sys, &f, &p, &pp, &vec![0.0; sys.num_jumps()]).unwrap();
        let rep = periodic_weak_form_residuals(&sys, &f, &orbit).unwrap();
        assert!(rep.max_residual() <= 1e-8, "{rep:?}");
        assert!(rep.tests > 0);
    }

    #[test]
    fn sparse_trajectory_rejected() {
        let sys = system();
        let f = Nonlinearity::linear(1.0).unwrap();
        let p = SolverParams::new(0.01).unwrap();
        let w0 = vec![0.0; sys.num_jumps()];
        let traj = simulate_two_scale_observed(&sys, &f, &w0, 0.0, 10, &p, 5, |_, _, _| {}).unwrap();
        assert!(weak_form_residuals(&sys, &f, &w0, &traj).is_err());
    }
}
