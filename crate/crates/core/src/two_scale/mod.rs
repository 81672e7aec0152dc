//! Homogenized two-scale model: a P1 macro potential coupled to one
//! periodic cell problem per macro element.
//!
//! Each element `T` carries a macro gradient `G_T`, a zero-mean corrector
//! `u¹_T` on the cell grid and a jump vector `w_T` on its copy of the cell
//! membrane. The macro equation is the Galerkin form of
//! `−div(K ∇u + P w) = 0`; the membrane obeys
//! `α ∂_t w + f(w) = q` with `q = −Pᵀ G − S_Y w`, the total current through
//! each facet. Eliminating the macro unknowns leaves a stacked membrane
//! problem with weights `|T| h^{N−1}`, which reuses the micro stepper.

pub mod cell;
pub mod mesh;
pub mod weak;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use cell::{assemble_cell_operator, CellOperator};
pub use mesh::MacroMesh;
pub use weak::{periodic_weak_form_residuals, weak_form_residuals, WeakFormReport};

use crate::decay::{fit_rate, Classification, LyapunovSeries, RateFit, Window};
use crate::error::{Error, Result};
use crate::forcing::{BoundaryData, InitialJump, SpatialProfile};
use crate::membrane::{self, jump_norm, lyapunov, secant_range, MembraneOperator};
use crate::micro::{steps_for, MicroSystem, SolverParams, StepRecord, Trajectory};
use crate::nonlinearity::Nonlinearity;
use crate::periodic::{self, PeriodicOrbit, PeriodicParams, RegularizedSweep};

/// Periodic orbit of the stacked jump vector.
pub type TwoScaleOrbit = PeriodicOrbit;

/// Full two-scale state reconstructed from the stacked jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoScaleState {
    pub t: f64,
    /// Macro potential at the mesh vertices.
    pub u: Vec<f64>,
    /// Macro gradient per element.
    pub gradients: Vec<[f64; 2]>,
    /// Zero-mean corrector per element.
    pub correctors: Vec<Vec<f64>>,
    /// Stacked jumps, element by element.
    pub w: Vec<f64>,
    /// `∫_Y σ(∇u + ∇_y u¹) dy` per element.
    pub flux: Vec<[f64; 2]>,
    /// Largest Galerkin residual of the macro equation.
    pub macro_residual: f64,
    /// Largest `|mean_Y u¹|`.
    pub mean_residual: f64,
    /// Largest one-sided flux mismatch across the cell membranes.
    pub flux_residual: f64,
}

#[derive(Debug, Clone)]
pub struct TwoScaleSystem {
    mesh: MacroMesh,
    cell: CellOperator,
    psi: BoundaryData,
    alpha: f64,
    /// Inverse of the macro stiffness on interior vertices.
    km_inv: DMatrix<f64>,
    /// Macro solution for zero jump and unit time factor.
    lift_unit: Vec<f64>,
    /// Spatial part of `Ψ` interpolated at every vertex.
    interp_unit: Vec<f64>,
    source_unit: Vec<f64>,
    weights: Vec<f64>,
    schur_diag: Vec<f64>,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn kmul(k: &[[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]]
}

impl TwoScaleSystem {
    pub fn new(mesh: &MacroMesh, cell: &CellOperator, psi: &BoundaryData, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("{alpha} must be > 0")));
        }
        if mesh.dim() != cell.dim() {
            return Err(Error::GridMismatch(format!(
                "macro mesh is {}-dimensional, cell is {}-dimensional",
                mesh.dim(),
                cell.dim()
            )));
        }
        let dim = mesh.dim();
        let ni = mesh.num_interior();
        let nv = mesh.num_vertices();
        let ne = mesh.num_elements();
        let nf = cell.num_facets();
        let k = cell.effective_conductivity();

        let constant = matches!(psi.spatial, SpatialProfile::Constant);
        let interp_unit: Vec<f64> = (0..nv)
            .map(|v| if constant { psi.amplitude } else { psi.spatial_part(mesh.vertex(v), dim) })
            .collect();

        let mut km = DMatrix::<f64>::zeros(ni, ni);
        let mut rhs = DVector::<f64>::zeros(ni);
        for e in 0..ne {
            let vs = mesh.element(e);
            let gr = mesh.basis_gradients(e);
            let area = mesh.measure(e);
            for (a, &va) in vs.iter().enumerate() {
                let Some(ia) = mesh.interior_index(va) else { continue };
                let kg = kmul(&k, gr[a]);
                for (b, &vb) in vs.iter().enumerate() {
                    let kab = area * dot(kg, gr[b]);
                    match mesh.interior_index(vb) {
                        Some(ib) => km[(ia, ib)] += kab,
                        None => rhs[ia] -= kab * interp_unit[vb],
                    }
                }
            }
        }
        let km_inv = if ni == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let chol = km
                .clone()
                .cholesky()
                .ok_or_else(|| Error::SingularOperator("macro stiffness is not positive definite".into()))?;
            chol.inverse()
        };

        let mut lift_unit = interp_unit.clone();
        if !constant && ni > 0 {
            let x = &km_inv * rhs;
            for v in 0..nv {
                if let Some(i) = mesh.interior_index(v) {
                    lift_unit[v] = x[i];
                }
            }
        }
        let lift_gradients: Vec<[f64; 2]> = (0..ne)
            .map(|e| if constant { [0.0; 2] } else { mesh.gradient(e, &lift_unit) })
            .collect();

        let hf = cell.facet_measure();
        let mut weights = Vec::with_capacity(ne * nf);
        let mut source_unit = Vec::with_capacity(ne * nf);
        for e in 0..ne {
            let area = mesh.measure(e);
            for kf in 0..nf {
                weights.push(area * hf);
                source_unit.push(-area * dot(cell.jump_flux(kf), lift_gradients[e]));
            }
        }

        let mut sys = TwoScaleSystem {
            mesh: mesh.clone(),
            cell: cell.clone(),
            psi: *psi,
            alpha,
            km_inv,
            lift_unit,
            interp_unit,
            source_unit,
            weights,
            schur_diag: Vec::new(),
        };
        sys.schur_diag = sys.compute_schur_diagonal();
        Ok(sys)
    }

    fn compute_schur_diagonal(&self) -> Vec<f64> {
        let ne = self.mesh.num_elements();
        let nf = self.cell.num_facets();
        let ni = self.mesh.num_interior();
        let s = self.cell.schur();
        let mut diag = Vec::with_capacity(ne * nf);
        let mut b = DVector::<f64>::zeros(ni);
        for e in 0..ne {
            let area = self.mesh.measure(e);
            for k in 0..nf {
                b.fill(0.0);
                let p = self.cell.jump_flux(k);
                for (&v, g) in self.mesh.element(e).iter().zip(self.mesh.basis_gradients(e)) {
                    if let Some(i) = self.mesh.interior_index(v) {
                        b[i] += area * dot(*g, p);
                    }
                }
                let coupling = if ni > 0 { (&self.km_inv * &b).dot(&b) } else { 0.0 };
                diag.push(area * s.get(k, k) - coupling);
            }
        }
        diag
    }

    pub fn mesh(&self) -> &MacroMesh {
        &self.mesh
    }

    pub fn cell(&self) -> &CellOperator {
        &self.cell
    }

    pub fn psi(&self) -> &BoundaryData {
        &self.psi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_jumps(&self) -> usize {
        self.weights.len()
    }

    /// Stacked index range of element `e`.
    pub fn element_range(&self, e: usize) -> std::ops::Range<usize> {
        let nf = self.cell.num_facets();
        e * nf..(e + 1) * nf
    }

    /// `S₁` sampled at element centroids and facet midpoints.
    pub fn initial_jump(&self, s1: &InitialJump) -> Vec<f64> {
        let ys = self.cell.facet_midpoints();
        let pts = (0..self.mesh.num_elements()).flat_map(|e| {
            let x = self.mesh.centroid(e);
            ys.iter().map(move |&y| (x, y))
        });
        s1.sample(pts, self.mesh.dim())
    }

    /// Interior correction `−K_M⁻¹ B w` of the macro potential.
    fn macro_correction(&self, w: &[f64]) -> DVector<f64> {
        let ni = self.mesh.num_interior();
        let nf = self.cell.num_facets();
        let mut bw = DVector::<f64>::zeros(ni);
        if ni == 0 {
            return bw;
        }
        for e in 0..self.mesh.num_elements() {
            let area = self.mesh.measure(e);
            let mut pw = [0.0; 2];
            for (k, wk) in w[e * nf..(e + 1) * nf].iter().enumerate() {
                let p = self.cell.jump_flux(k);
                pw[0] += p[0] * wk;
                pw[1] += p[1] * wk;
            }
            for (&v, g) in self.mesh.element(e).iter().zip(self.mesh.basis_gradients(e)) {
                if let Some(i) = self.mesh.interior_index(v) {
                    bw[i] += area * dot(*g, pw);
                }
            }
        }
        -(&self.km_inv * bw)
    }

    /// Macro potential at the vertices for jump `w` at time `t`.
    pub fn macro_potential(&self, t: f64, w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(w)?;
        let s = self.psi.time_factor(t);
        let mut u: Vec<f64> = self.lift_unit.iter().map(|x| s * x).collect();
        self.add_correction(w, &mut u);
        Ok(u)
    }

    /// Macro potential driven by the jump alone (homogeneous data).
    pub fn jump_response(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(w)?;
        let mut u = vec![0.0; self.mesh.num_vertices()];
        self.add_correction(w, &mut u);
        Ok(u)
    }

    fn add_correction(&self, w: &[f64], u: &mut [f64]) {
        let z = self.macro_correction(w);
        for (v, x) in u.iter_mut().enumerate() {
            if let Some(i) = self.mesh.interior_index(v) {
                *x += z[i];
            }
        }
    }

    fn check_len(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.num_jumps() {
            return Err(Error::GridMismatch(format!(
                "jump has {} entries, system has {}",
                w.len(),
                self.num_jumps()
            )));
        }
        Ok(())
    }

    /// Builds the full state from macro vertex values and jumps.
    pub fn assemble_state(&self, t: f64, u: Vec<f64>, w: &[f64]) -> TwoScaleState {
        let ne = self.mesh.num_elements();
        let mut gradients = Vec::with_capacity(ne);
        let mut correctors = Vec::with_capacity(ne);
        let mut flux = Vec::with_capacity(ne);
        let mut mean_residual = 0.0f64;
        let mut flux_residual = 0.0f64;
        for e in 0..ne {
            let we = &w[self.element_range(e)];
            let g = self.mesh.gradient(e, &u);
            let c = self.cell.corrector(g, we);
            mean_residual = mean_residual.max(self.cell.mean(&c).abs());
            flux_residual = flux_residual.max(self.cell.flux_continuity(g, &c, we));
            flux.push(self.cell.flux(g, &c, we));
            gradients.push(g);
            correctors.push(c);
        }
        let mut res = vec![0.0; self.mesh.num_interior()];
        for (e, j) in flux.iter().enumerate() {
            let area = self.mesh.measure(e);
            for (&v, g) in self.mesh.element(e).iter().zip(self.mesh.basis_gradients(e)) {
                if let Some(i) = self.mesh.interior_index(v) {
                    res[i] += area * dot(*g, *j);
                }
            }
        }
        TwoScaleState {
            t,
            u,
            gradients,
            correctors,
            w: w.to_vec(),
            flux,
            macro_residual: res.iter().fold(0.0, |m, x| m.max(x.abs())),
            mean_residual,
            flux_residual,
        }
    }

    pub fn state(&self, t: f64, w: &[f64]) -> Result<TwoScaleState> {
        let u = self.macro_potential(t, w)?;
        Ok(self.assemble_state(t, u, w))
    }

    /// Total facet currents `q = −Pᵀ G − S_Y w` of a state, stacked.
    pub fn currents(&self, state: &TwoScaleState) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.num_jumps());
        for e in 0..self.mesh.num_elements() {
            let we = &state.w[self.element_range(e)];
            q.extend(self.cell.currents(state.gradients[e], &state.correctors[e], we));
        }
        q
    }

    /// `Σ_T |T| ∫_Y σ|∇u + ∇_y u¹|²` of a state.
    pub fn energy(&self, state: &TwoScaleState) -> f64 {
        (0..self.mesh.num_elements())
            .map(|e| {
                let we = &state.w[self.element_range(e)];
                self.mesh.measure(e) * self.cell.energy(state.gradients[e], &state.correctors[e], we)
            })
            .sum()
    }

    /// Energy of the zero-jump, zero-corrector interpolant of `Ψ`.
    pub fn data_energy(&self, t: f64) -> f64 {
        let s = self.psi.time_factor(t);
        let zero_c = vec![0.0; self.cell.num_cells()];
        let zero_w = vec![0.0; self.cell.num_facets()];
        (0..self.mesh.num_elements())
            .map(|e| {
                let g = self.mesh.gradient(e, &self.interp_unit);
                let g = [s * g[0], s * g[1]];
                self.mesh.measure(e) * self.cell.energy(g, &zero_c, &zero_w)
            })
            .sum()
    }

    /// Work of a state against the interpolant of `Ψ`: `Σ |T| ∇Ψ_h · J`.
    fn data_work(&self, state: &TwoScaleState) -> f64 {
        let s = self.psi.time_factor(state.t);
        (0..self.mesh.num_elements())
            .map(|e| {
                let g = self.mesh.gradient(e, &self.interp_unit);
                s * self.mesh.measure(e) * dot(g, state.flux[e])
            })
            .sum()
    }

    /// Defect of `(α/Δt)Σ wt (w₁−w₀) w₁ + Σ wt f(w₁) w₁ + A(X₁) − A(X₁, Ψ_h) = 0`,
    /// evaluated from macro and cell fields.
    pub fn energy_balance_defect(&self, f: &Nonlinearity, dt: f64, w_old: &[f64], next: &TwoScaleState) -> f64 {
        let mut m = 0.0;
        for (k, wt) in self.weights.iter().enumerate() {
            let w1 = next.w[k];
            m += wt * (self.alpha * (w1 - w_old[k]) / dt + f.eval(w1)) * w1;
        }
        let bulk = self.energy(next);
        let work = self.data_work(next);
        let scale = 1.0 + m.abs() + bulk.abs() + work.abs();
        (m + bulk - work).abs() / scale
    }

    /// One backward-Euler step of the stacked membrane problem.
    pub fn step(&self, state: &TwoScaleState, f: &Nonlinearity, params: &SolverParams) -> Result<(TwoScaleState, StepRecord)> {
        let t_new = state.t + params.dt;
        let out = self.step_jump(&state.w, t_new, f, params)?;
        let next = self.state(t_new, &out.w)?;
        let record = StepRecord {
            t: t_new,
            newton_iters: out.iterations,
            newton_residual: *out.residual_history.last().unwrap_or(&0.0),
            shifted: out.shifted,
            dissipation_residual: self.energy_balance_defect(f, params.dt, &state.w, &next),
        };
        Ok((next, record))
    }

    pub fn step_jump(&self, w: &[f64], t_new: f64, f: &Nonlinearity, params: &SolverParams) -> Result<membrane::StepOutcome> {
        membrane::backward_euler_step(self, f, w, t_new, params.dt, &params.newton)
    }
}

impl MembraneOperator for TwoScaleSystem {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn capacitance(&self) -> f64 {
        self.alpha
    }

    fn jump_scale(&self) -> f64 {
        1.0
    }

    fn apply_schur(&self, w: &[f64], out: &mut [f64]) {
        let nf = self.cell.num_facets();
        let s = self.cell.schur();
        let z = self.macro_correction(w);
        for e in 0..self.mesh.num_elements() {
            let area = self.mesh.measure(e);
            let we = &w[e * nf..(e + 1) * nf];
            let oe = &mut out[e * nf..(e + 1) * nf];
            s.matvec(we, oe);
            // Gradient of the macro correction on this element.
            let mut g = [0.0; 2];
            for (&v, gr) in self.mesh.element(e).iter().zip(self.mesh.basis_gradients(e)) {
                if let Some(i) = self.mesh.interior_index(v) {
                    g[0] += z[i] * gr[0];
                    g[1] += z[i] * gr[1];
                }
            }
            for (k, o) in oe.iter_mut().enumerate() {
                *o = area * (*o + dot(self.cell.jump_flux(k), g));
            }
        }
    }

    fn schur_diagonal(&self) -> &[f64] {
        &self.schur_diag
    }

    fn source(&self, t: f64, out: &mut [f64]) {
        let s = self.psi.time_factor(t);
        for (o, x) in out.iter_mut().zip(&self.source_unit) {
            *o = s * x;
        }
    }
}

/// Free-function form of [`TwoScaleSystem::step`].
pub fn two_scale_step(
    sys: &TwoScaleSystem,
    state: &TwoScaleState,
    params: &SolverParams,
    f: &Nonlinearity,
) -> Result<(TwoScaleState, StepRecord)> {
    sys.step(state, f, params)
}

/// Integrates from `t0`; `observer` sees every step's full state.
pub fn simulate_two_scale_observed<F>(
    sys: &TwoScaleSystem,
    f: &Nonlinearity,
    w0: &[f64],
    t0: f64,
    steps: usize,
    params: &SolverParams,
    stride: usize,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(usize, &TwoScaleState, &StepRecord),
{
    params.validate()?;
    let stride = stride.max(1);
    let mut state = sys.state(t0, w0)?;
    let mut traj = Trajectory {
        dt: params.dt,
        stride,
        t0,
        samples: vec![(0, w0.to_vec())],
        records: Vec::with_capacity(steps),
    };
    for n in 1..=steps {
        let t_new = t0 + n as f64 * params.dt;
        state.t = t_new - params.dt;
        let (mut next, mut rec) = sys.step(&state, f, params)?;
        next.t = t_new;
        rec.t = t_new;
        observer(n, &next, &rec);
        if n % stride == 0 || n == steps {
            traj.samples.push((n, next.w.clone()));
        }
        traj.records.push(rec);
        state = next;
    }
    Ok(traj)
}

/// Trajectory over `[0, horizon]` from `[u¹](0) = S₁`.
pub fn simulate_two_scale(
    sys: &TwoScaleSystem,
    f: &Nonlinearity,
    s1: &InitialJump,
    horizon: f64,
    params: &SolverParams,
    stride: usize,
) -> Result<Trajectory> {
    let steps = steps_for(horizon, params.dt, "time.horizon")?;
    let w0 = sys.initial_jump(s1);
    simulate_two_scale_observed(sys, f, &w0, 0.0, steps, params, stride, |_, _, _| {})
}

pub fn find_periodic_two_scale(
    sys: &TwoScaleSystem,
    f: &Nonlinearity,
    params: &SolverParams,
    pp: &PeriodicParams,
    w0: &[f64],
) -> Result<TwoScaleOrbit> {
    let n = params.steps_per_period()?;
    let step = |w: &[f64], t: f64| Ok(sys.step_jump(w, t, f, params)?.w);
    periodic::picard(sys, step, w0, n, params.dt, pp)
}

pub fn find_periodic_two_scale_regularized(
    sys: &TwoScaleSystem,
    f: &Nonlinearity,
    params: &SolverParams,
    pp: &PeriodicParams,
    deltas: &[f64],
    w0: &[f64],
) -> Result<RegularizedSweep> {
    periodic::delta_sweep(sys, f, deltas, w0, |g, start| find_periodic_two_scale(sys, g, params, pp, start))
}

/// Discrete counterpart of the bound
/// `∫∫ σ|∇u + ∇_y u¹|² + λ₁ ∫∫ [u¹]² ≤ γ`, time-integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBound {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lhs: f64,
    pub gamma: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Accumulates the energy bound along a run; feed every step in order.
#[derive(Debug, Clone)]
pub struct EnergyBoundAccumulator {
    lambda1: f64,
    lambda2: f64,
    dt: f64,
    lhs: f64,
    data: f64,
    steps: usize,
    initial: f64,
}

impl EnergyBoundAccumulator {
    pub fn new(sys: &TwoScaleSystem, w0: &[f64], dt: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 > 0.0) || lambda2 < 0.0 {
            return Err(Error::param("lambda", "need λ₁ > 0 and λ₂ ≥ 0"));
        }
        Ok(EnergyBoundAccumulator {
            lambda1,
            lambda2,
            dt,
            lhs: 0.0,
            data: 0.0,
            steps: 0,
            initial: sys.alpha * jump_norm(sys, w0).powi(2),
        })
    }

    pub fn push(&mut self, sys: &TwoScaleSystem, state: &TwoScaleState) {
        self.lhs += self.dt * (sys.energy(state) + self.lambda1 * jump_norm(sys, &state.w).powi(2));
        self.data += self.dt * sys.data_energy(state.t);
        self.steps += 1;
    }

    /// `periodic` drops the initial storage term, which cancels over a period.
    pub fn finish(&self, sys: &TwoScaleSystem, periodic: bool) -> EnergyBound {
        let total_weight: f64 = sys.weights.iter().sum();
        let span = self.steps as f64 * self.dt;
        let storage = if periodic { 0.0 } else { self.initial };
        let gamma = self.data + span * total_weight * self.lambda2 * self.lambda2 / self.lambda1 + storage;
        EnergyBound {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lhs: self.lhs,
            gamma,
            margin: gamma - self.lhs,
            pass: self.lhs <= gamma,
        }
    }
}

/// Energy bound over one period of an orbit.
pub fn orbit_energy_bound(sys: &TwoScaleSystem, orbit: &TwoScaleOrbit, lambda1: f64, lambda2: f64) -> Result<EnergyBound> {
    let mut acc = EnergyBoundAccumulator::new(sys, orbit.initial(), orbit.dt, lambda1, lambda2)?;
    for n in 1..=orbit.steps() {
        let st = sys.state(n as f64 * orbit.dt, &orbit.jumps[n])?;
        acc.push(sys, &st);
    }
    Ok(acc.finish(sys, true))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoScaleDecayReport {
    pub times: Vec<f64>,
    /// `‖u − u^#‖_{H¹(Ω)}`
    pub norm_h1: Vec<f64>,
    /// `‖u¹ − u^{1,#}‖_{L²(Ω×Y)}`
    pub norm_corrector: Vec<f64>,
    /// `‖∇_y(u¹ − u^{1,#})‖_{L²(Ω×Y)}`
    pub norm_grad_y: Vec<f64>,
    /// `‖[u¹] − [u^{1,#}]‖_{L²(Ω×Γ)}`
    pub norm_jump: Vec<f64>,
    pub lyapunov: LyapunovSeries,
    pub secant_min: Vec<f64>,
    pub secant_max: Vec<f64>,
    pub rate: RateFit,
    /// Largest `|mean_Y u¹|` over the sampled trajectory states and differences.
    pub max_mean: f64,
}

impl TwoScaleDecayReport {
    /// Largest `final / initial` ratio over the four norms; see
    /// [`crate::decay::worst_ratio`].
    pub fn worst_reduction(&self) -> f64 {
        crate::decay::worst_ratio(&[&self.norm_h1, &self.norm_corrector, &self.norm_grad_y, &self.norm_jump])
    }
}

/// Norms of the difference between a trajectory and the repeated orbit.
pub fn two_scale_decay_metrics(
    sys: &TwoScaleSystem,
    f: &Nonlinearity,
    traj: &Trajectory,
    orbit: &TwoScaleOrbit,
) -> Result<TwoScaleDecayReport> {
    if (traj.dt - orbit.dt).abs() > 1e-15 || traj.t0 != 0.0 {
        return Err(Error::GridMismatch(format!(
            "trajectory (dt {}, t0 {}) and orbit (dt {}) do not share a time grid",
            traj.dt, traj.t0, orbit.dt
        )));
    }
    if orbit.jumps.first().map(|w| w.len()) != Some(sys.num_jumps()) {
        return Err(Error::GridMismatch("orbit and system differ in jump count".into()));
    }
    let mesh = &sys.mesh;
    let cell = &sys.cell;
    let mut rep = TwoScaleDecayReport {
        times: Vec::new(),
        norm_h1: Vec::new(),
        norm_corrector: Vec::new(),
        norm_grad_y: Vec::new(),
        norm_jump: Vec::new(),
        lyapunov: LyapunovSeries::from_values(vec![], vec![]),
        secant_min: Vec::new(),
        secant_max: Vec::new(),
        rate: RateFit {
            rate: None,
            r_squared: 0.0,
            classification: Classification::Subexponential,
            points: 0,
        },
        max_mean: 0.0,
    };
    let mut energy = Vec::new();
    for (n, w) in &traj.samples {
        sys.check_len(w)?;
        let ws = orbit.at_step(*n);
        let r: Vec<f64> = w.iter().zip(ws).map(|(a, b)| a - b).collect();
        let du = sys.jump_response(&r)?;
        let diff = sys.assemble_state(traj.time(*n), du, &r);
        let full = sys.state(traj.time(*n), w)?;
        rep.max_mean = rep.max_mean.max(diff.mean_residual).max(full.mean_residual);
        let mut c2 = 0.0;
        let mut gy2 = 0.0;
        for e in 0..mesh.num_elements() {
            let area = mesh.measure(e);
            c2 += area * cell.l2_squared(&diff.correctors[e]);
            gy2 += area * cell.grad_y_squared(&diff.correctors[e], &r[sys.element_range(e)]);
        }
        let (lo, hi) = secant_range(f, 1.0, w, ws);
        rep.times.push(traj.time(*n));
        rep.norm_h1.push((mesh.l2_squared(&diff.u) + mesh.grad_squared(&diff.u)).sqrt());
        rep.norm_corrector.push(c2.sqrt());
        rep.norm_grad_y.push(gy2.sqrt());
        rep.norm_jump.push(jump_norm(sys, &r));
        rep.secant_min.push(lo);
        rep.secant_max.push(hi);
        energy.push(lyapunov(sys, &r));
    }
    rep.lyapunov = LyapunovSeries::from_values(rep.times.clone(), energy);
    if rep.times.len() >= 2 {
        rep.rate = fit_rate(&rep.lyapunov.pairs(), Window::TAIL)?;
    }
    Ok(rep)
}

/// Bulk `L²` distance at time `t` between a micro potential and the macro
/// potential interpolated at the micro cell centres.
pub fn bulk_l2_error(micro: &MicroSystem, micro_w: &[f64], sys: &TwoScaleSystem, macro_w: &[f64], t: f64) -> Result<f64> {
    let u = micro.bulk_potential(t, micro_w)?;
    let um = sys.macro_potential(t, macro_w)?;
    let bulk = micro.bulk();
    let s: f64 = bulk
        .centers()
        .iter()
        .zip(&u)
        .map(|(x, v)| (v - sys.mesh.interpolate(&um, *x)).powi(2))
        .sum();
    Ok((bulk.cell_volume() * s).sqrt())
}
