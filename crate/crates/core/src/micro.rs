//! Finite-volume discretization of the ε-problem.
//!
//! Cell-centred unknowns live on the fitted grid of an [`EpsilonDomain`].
//! Each membrane facet carries an inner and an outer trace, reconstructed
//! from the facet flux so that their difference equals the jump exactly.
//! The bulk is quasi-static: for a given jump `w` and boundary data `Ψ`,
//!
//! ```text
//! A u = b_Ψ + Cᵀ w,      q_tot = C u − G w = s_Ψ − S w,
//! ```
//!
//! where `G` holds the facet conductances and `S = G − C A⁻¹ Cᵀ` is the
//! membrane Schur complement used by the backward-Euler update.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forcing::{BoundaryData, SpatialProfile};
use crate::geometry::{Conductivity, EpsilonDomain, Phase};
use crate::linalg::{BandedCholesky, CsrMatrix, DenseMatrix};
use crate::membrane::{self, DissipationTerms, MembraneOperator, NewtonParams};
use crate::nonlinearity::Nonlinearity;

/// Relative residual the bulk solve must reach.
pub const BULK_SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetCoupling {
    pub inner: usize,
    pub outer: usize,
    /// Total conductance `h^{N-1} · 2σ_iσ_o / (h(σ_i+σ_o))`.
    pub conductance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCoupling {
    pub cell: usize,
    /// Half-cell transmissibility to the boundary face.
    pub transmissibility: f64,
    pub midpoint: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct BulkOperator {
    dim: usize,
    h: f64,
    sigma: Conductivity,
    matrix: CsrMatrix,
    chol: BandedCholesky,
    faces: Vec<(usize, usize, f64)>,
    facets: Vec<FacetCoupling>,
    boundary: Vec<BoundaryCoupling>,
    centers: Vec<[f64; 2]>,
}

pub fn assemble_bulk(domain: &EpsilonDomain, sigma: &Conductivity) -> Result<BulkOperator> {
    let dim = domain.dim();
    let h = domain.spacing();
    let area = domain.facet_measure();
    let n = domain.num_bulk();
    let mut trip = Vec::with_capacity(5 * n);
    let mut faces = Vec::with_capacity(domain.interior_faces().len());
    for f in domain.interior_faces() {
        let t = sigma.of(domain.phase(f.minus)) * area / h;
        faces.push((f.minus, f.plus, t));
        trip.extend([
            (f.minus, f.minus, t),
            (f.plus, f.plus, t),
            (f.minus, f.plus, -t),
            (f.plus, f.minus, -t),
        ]);
    }
    let gt = area * sigma.membrane_conductance(h);
    let facets: Vec<FacetCoupling> = domain
        .facets()
        .iter()
        .map(|f| FacetCoupling {
            inner: f.inner,
            outer: f.outer,
            conductance: gt,
        })
        .collect();
    for c in &facets {
        trip.extend([
            (c.inner, c.inner, gt),
            (c.outer, c.outer, gt),
            (c.inner, c.outer, -gt),
            (c.outer, c.inner, -gt),
        ]);
    }
    let boundary: Vec<BoundaryCoupling> = domain
        .boundary_faces()
        .iter()
        .map(|b| {
            debug_assert_eq!(domain.phase(b.cell), Phase::Outer);
            BoundaryCoupling {
                cell: b.cell,
                transmissibility: sigma.outer * area / (0.5 * h),
                midpoint: b.midpoint,
            }
        })
        .collect();
    for b in &boundary {
        trip.push((b.cell, b.cell, b.transmissibility));
    }
    let matrix = CsrMatrix::from_triplets(n, trip);
    let chol = BandedCholesky::factor(&matrix).map_err(|e| {
        Error::SingularOperator(format!("bulk operator has a component without boundary contact ({e})"))
    })?;
    Ok(BulkOperator {
        dim,
        h,
        sigma: *sigma,
        matrix,
        chol,
        faces,
        facets,
        boundary,
        centers: (0..n).map(|g| domain.cell_center(g)).collect(),
    })
}

/// Bulk solution with its reconstructed membrane traces and fluxes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicroState {
    pub t: f64,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    /// Inner and outer traces, interleaved per facet.
    pub traces: Vec<f64>,
    /// Flux density `σ∇u·ν`, average of the two one-sided fluxes.
    pub q: Vec<f64>,
    /// Largest one-sided flux mismatch over all facets.
    pub flux_residual: f64,
}

impl MicroState {
    /// Largest deviation between `w` and the trace difference.
    pub fn trace_consistency(&self) -> f64 {
        self.w
            .iter()
            .enumerate()
            .map(|(k, w)| (self.traces[2 * k + 1] - self.traces[2 * k] - w).abs())
            .fold(0.0, f64::max)
    }
}

impl BulkOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_bulk(&self) -> usize {
        self.matrix.dim()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn facets(&self) -> &[FacetCoupling] {
        &self.facets
    }

    pub fn boundary(&self) -> &[BoundaryCoupling] {
        &self.boundary
    }

    pub fn conductivity(&self) -> Conductivity {
        self.sigma
    }

    pub fn facet_measure(&self) -> f64 {
        self.h.powi(self.dim as i32 - 1)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    /// Boundary values `Ψ(x_b, t)` at every boundary face.
    pub fn boundary_values(&self, psi: &BoundaryData, t: f64) -> Vec<f64> {
        self.boundary.iter().map(|b| psi.eval(b.midpoint, t, self.dim)).collect()
    }

    /// `b_Ψ + Cᵀ w` for prescribed boundary values.
    pub fn rhs(&self, psi_b: &[f64], w: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.num_bulk()];
        for (bc, p) in self.boundary.iter().zip(psi_b) {
            b[bc.cell] += bc.transmissibility * p;
        }
        for (c, wk) in self.facets.iter().zip(w) {
            b[c.inner] -= c.conductance * wk;
            b[c.outer] += c.conductance * wk;
        }
        b
    }

    /// Direct solve with an explicit residual check.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let u = self.chol.solve(b);
        let bn = crate::linalg::norm2(b);
        if bn > 0.0 {
            let mut au = vec![0.0; b.len()];
            self.matrix.matvec(&u, &mut au);
            let r: f64 = au.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / bn;
            if !(r <= BULK_SOLVE_TOL) {
                return Err(Error::LinearSolve { history: vec![r] });
            }
        }
        Ok(u)
    }

    /// Total facet currents `G (u_o − u_i − w)`.
    pub fn facet_currents(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        self.facets
            .iter()
            .zip(w)
            .map(|(c, wk)| c.conductance * (u[c.outer] - u[c.inner] - wk))
            .collect()
    }

    /// Traces, averaged flux density and the largest one-sided mismatch.
    pub fn traces(&self, u: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let h = self.h;
        let area = self.facet_measure();
        let (si, so) = (self.sigma.inner, self.sigma.outer);
        let mut traces = Vec::with_capacity(2 * self.facets.len());
        let mut q = Vec::with_capacity(self.facets.len());
        let mut worst = 0.0f64;
        for (c, wk) in self.facets.iter().zip(w) {
            let qd = c.conductance * (u[c.outer] - u[c.inner] - wk) / area;
            let u1 = u[c.inner] + qd * h / (2.0 * si);
            let u2 = u[c.outer] - qd * h / (2.0 * so);
            let q1 = 2.0 * si * (u1 - u[c.inner]) / h;
            let q2 = 2.0 * so * (u[c.outer] - u2) / h;
            traces.push(u1);
            traces.push(u2);
            q.push(0.5 * (q1 + q2));
            worst = worst.max((q1 - q2).abs());
        }
        (traces, q, worst)
    }

    /// Discrete energy `∫σ|∇u|²` with boundary values `psi_b`.
    pub fn energy(&self, u: &[f64], w: &[f64], psi_b: &[f64]) -> f64 {
        let mut e = 0.0;
        for &(a, b, t) in &self.faces {
            e += t * (u[b] - u[a]).powi(2);
        }
        for (c, wk) in self.facets.iter().zip(w) {
            e += c.conductance * (u[c.outer] - u[c.inner] - wk).powi(2);
        }
        for (bc, p) in self.boundary.iter().zip(psi_b) {
            e += bc.transmissibility * (u[bc.cell] - p).powi(2);
        }
        e
    }

    /// `−Σ T_b (u_c − Ψ_b) Ψ_b`, the work done through `∂Ω`.
    pub fn boundary_work(&self, u: &[f64], psi_b: &[f64]) -> f64 {
        -self
            .boundary
            .iter()
            .zip(psi_b)
            .map(|(bc, p)| bc.transmissibility * (u[bc.cell] - p) * p)
            .sum::<f64>()
    }

    /// `‖u‖_{L²(Ω)}`
    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        (self.cell_volume() * u.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    /// Terms whose squares sum to `‖∇u‖²_{L²}`: one per interior face, two
    /// half-cell gradients per membrane facet and one per boundary face.
    pub fn grad_components(&self, u: &[f64], w: &[f64], psi_b: &[f64]) -> Vec<f64> {
        let scale = self.h.powi(self.dim as i32 - 2).sqrt();
        let half = std::f64::consts::SQRT_2 * scale;
        let (traces, _, _) = self.traces(u, w);
        let mut g = Vec::with_capacity(self.faces.len() + 2 * self.facets.len() + self.boundary.len());
        for &(a, b, _) in &self.faces {
            g.push(scale * (u[b] - u[a]));
        }
        for (k, c) in self.facets.iter().enumerate() {
            g.push(half * (traces[2 * k] - u[c.inner]));
            g.push(half * (u[c.outer] - traces[2 * k + 1]));
        }
        for (bc, p) in self.boundary.iter().zip(psi_b) {
            g.push(half * (u[bc.cell] - p));
        }
        g
    }

    /// `‖∇u‖_{L²}` over both phases, using half-cell gradients next to
    /// membrane facets and `∂Ω`.
    pub fn grad_norm(&self, u: &[f64], w: &[f64], psi_b: &[f64]) -> f64 {
        self.grad_components(u, w, psi_b).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `‖w‖_{L²(Γ^ε)}`
    pub fn jump_norm(&self, w: &[f64]) -> f64 {
        (self.facet_measure() * w.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }
}

/// Solves the bulk problem for a prescribed jump and returns `(u, q)` with
/// `q` the averaged flux density per facet.
pub fn elliptic_solve_given_jump(
    op: &BulkOperator,
    w: &[f64],
    psi: &BoundaryData,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if w.len() != op.num_facets() {
        return Err(Error::GridMismatch(format!(
            "jump has {} entries, domain has {} facets",
            w.len(),
            op.num_facets()
        )));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("w", "jump vector is not finite"));
    }
    let psi_b = op.boundary_values(psi, t);
    let u = op.solve(&op.rhs(&psi_b, w))?;
    let (_, q, _) = op.traces(&u, w);
    Ok((u, q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub dt: f64,
    pub newton: NewtonParams,
}

impl SolverParams {
    pub fn new(dt: f64) -> Result<Self> {
        let p = SolverParams {
            dt,
            newton: NewtonParams::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("time.dt", format!("{} must be > 0", self.dt)));
        }
        let n = &self.newton;
        for (name, v) in [
            ("solver.newton_tol", n.tol),
            ("solver.linear_tol", n.linear_tol),
            ("solver.jacobian_shift", n.jacobian_shift),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be > 0")));
            }
        }
        if n.max_iter == 0 || n.linear_max_iter == 0 {
            return Err(Error::param("solver.newton_max_iter", "must be positive"));
        }
        Ok(())
    }

    /// Steps per unit period; fails unless `1/dt` is an integer.
    pub fn steps_per_period(&self) -> Result<usize> {
        steps_for(1.0, self.dt, "time.dt")
    }
}

pub(crate) fn steps_for(span: f64, dt: f64, name: &str) -> Result<usize> {
    let n = span / dt;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::param(
            name,
            format!("{span} is not an integer multiple of dt = {dt}"),
        ));
    }
    Ok(r as usize)
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub newton_iters: usize,
    pub newton_residual: f64,
    pub shifted: bool,
    /// Defect of the discrete energy balance of the step.
    pub dissipation_residual: f64,
}

/// The assembled ε-problem: bulk operator, membrane Schur complement and
/// the boundary-data response.
#[derive(Debug, Clone)]
pub struct MicroSystem {
    domain: EpsilonDomain,
    bulk: BulkOperator,
    psi: BoundaryData,
    alpha: f64,
    schur: DenseMatrix,
    schur_diag: Vec<f64>,
    weights: Vec<f64>,
    /// `C A⁻¹ b_s` for the spatial profile of `Ψ`.
    source_unit: Vec<f64>,
    /// `A⁻¹ b_s`.
    response_unit: Vec<f64>,
    /// Spatial part of `Ψ` at the boundary faces.
    boundary_unit: Vec<f64>,
    center_unit: Vec<f64>,
}

impl MicroSystem {
    pub fn new(domain: &EpsilonDomain, sigma: &Conductivity, psi: &BoundaryData, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("{alpha} must be > 0")));
        }
        let bulk = assemble_bulk(domain, sigma)?;
        let nf = bulk.num_facets();
        let n = bulk.num_bulk();
        let mut schur = DenseMatrix::zeros(nf, nf);
        let mut col = vec![0.0; n];
        for (k, ck) in bulk.facets.iter().enumerate() {
            col.iter_mut().for_each(|x| *x = 0.0);
            col[ck.inner] = -ck.conductance;
            col[ck.outer] = ck.conductance;
            bulk.chol.solve_in_place(&mut col);
            for (j, cj) in bulk.facets.iter().enumerate() {
                let v = -cj.conductance * (col[cj.outer] - col[cj.inner]);
                schur.set(j, k, v);
            }
            schur.set(k, k, schur.get(k, k) + ck.conductance);
        }
        schur.symmetrize();
        let schur_diag = schur.diagonal();

        let dim = domain.dim();
        let boundary_unit: Vec<f64> = bulk
            .boundary
            .iter()
            .map(|b| psi.spatial_part(b.midpoint, dim))
            .collect();
        let (response_unit, source_unit) = if matches!(psi.spatial, SpatialProfile::Constant) {
            // Constants are discretely harmonic; skip the rounding of a solve.
            (vec![psi.amplitude; n], vec![0.0; nf])
        } else {
            let r = bulk.solve(&bulk.rhs(&boundary_unit, &vec![0.0; nf]))?;
            let s = bulk
                .facets
                .iter()
                .map(|c| c.conductance * (r[c.outer] - r[c.inner]))
                .collect();
            (r, s)
        };
        let center_unit = bulk.centers.iter().map(|&x| psi.spatial_part(x, dim)).collect();
        Ok(MicroSystem {
            domain: domain.clone(),
            weights: vec![bulk.facet_measure(); nf],
            bulk,
            psi: *psi,
            alpha,
            schur,
            schur_diag,
            source_unit,
            response_unit,
            boundary_unit,
            center_unit,
        })
    }

    pub fn domain(&self) -> &EpsilonDomain {
        &self.domain
    }

    pub fn bulk(&self) -> &BulkOperator {
        &self.bulk
    }

    pub fn psi(&self) -> &BoundaryData {
        &self.psi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.domain.epsilon()
    }

    pub fn schur(&self) -> &DenseMatrix {
        &self.schur
    }

    pub fn num_facets(&self) -> usize {
        self.weights.len()
    }

    /// Boundary values at time `t`.
    pub fn boundary_values(&self, t: f64) -> Vec<f64> {
        let s = self.psi.time_factor(t);
        self.boundary_unit.iter().map(|x| x * s).collect()
    }

    /// Spatial part of `Ψ` at the boundary faces and the cell centres.
    pub fn psi_spatial(&self) -> (&[f64], &[f64]) {
        (&self.boundary_unit, &self.center_unit)
    }

    /// `Ψ` sampled at cell centres at time `t` (zero jump extension).
    pub fn psi_cells(&self, t: f64) -> Vec<f64> {
        let s = self.psi.time_factor(t);
        self.center_unit.iter().map(|x| x * s).collect()
    }

    /// Bulk potential for jump `w` at time `t`.
    pub fn bulk_potential(&self, t: f64, w: &[f64]) -> Result<Vec<f64>> {
        let nf = self.num_facets();
        if w.len() != nf {
            return Err(Error::GridMismatch(format!(
                "jump has {} entries, system has {nf} facets",
                w.len()
            )));
        }
        let mut u = self.bulk.solve(&self.bulk.rhs(&vec![0.0; self.boundary_unit.len()], w))?;
        let s = self.psi.time_factor(t);
        for (x, r) in u.iter_mut().zip(&self.response_unit) {
            *x += s * r;
        }
        Ok(u)
    }

    /// Bulk response to a jump alone, with homogeneous boundary data.
    pub fn jump_response(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.bulk.solve(&self.bulk.rhs(&vec![0.0; self.boundary_unit.len()], w))
    }

    pub fn state(&self, t: f64, w: &[f64]) -> Result<MicroState> {
        let u = self.bulk_potential(t, w)?;
        let (traces, q, flux_residual) = self.bulk.traces(&u, w);
        Ok(MicroState {
            t,
            u,
            w: w.to_vec(),
            traces,
            q,
            flux_residual,
        })
    }

    pub fn initial_state(&self, w0: &[f64]) -> Result<MicroState> {
        self.state(0.0, w0)
    }

    /// One backward-Euler step.
    pub fn step(&self, state: &MicroState, f: &Nonlinearity, params: &SolverParams) -> Result<(MicroState, StepRecord)> {
        let t_new = state.t + params.dt;
        let out = membrane::backward_euler_step(self, f, &state.w, t_new, params.dt, &params.newton)?;
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

    /// Jump-only step, skipping the trace reconstruction.
    pub fn step_jump(&self, w: &[f64], t_new: f64, f: &Nonlinearity, params: &SolverParams) -> Result<membrane::StepOutcome> {
        membrane::backward_euler_step(self, f, w, t_new, params.dt, &params.newton)
    }

    /// Defect of
    /// `(c/Δt) Σ wt (w₁ − w₀) w₁ + Σ wt f(w₁/ε) w₁ + ∫σ|∇u₁|² − W_Ψ = 0`,
    /// evaluated from the bulk field.
    pub fn energy_balance_defect(&self, f: &Nonlinearity, dt: f64, w_old: &[f64], next: &MicroState) -> f64 {
        let cap = self.capacitance();
        let lam = self.jump_scale();
        let psi_b = self.boundary_values(next.t);
        let mut m = 0.0;
        for (k, wt) in self.weights.iter().enumerate() {
            let w1 = next.w[k];
            m += wt * (cap * (w1 - w_old[k]) / dt + f.eval(lam * w1)) * w1;
        }
        let e = self.bulk.energy(&next.u, &next.w, &psi_b);
        let work = self.bulk.boundary_work(&next.u, &psi_b);
        m + e - work
    }
}

impl MembraneOperator for MicroSystem {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn capacitance(&self) -> f64 {
        self.alpha / self.domain.epsilon()
    }

    fn jump_scale(&self) -> f64 {
        1.0 / self.domain.epsilon()
    }

    fn apply_schur(&self, w: &[f64], out: &mut [f64]) {
        self.schur.matvec(w, out);
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

/// Jumps sampled every `stride` steps plus one record per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub stride: usize,
    pub t0: f64,
    /// `(step index, jump)` pairs; step 0 is the initial datum.
    pub samples: Vec<(usize, Vec<f64>)>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    pub fn final_jump(&self) -> &[f64] {
        &self.samples.last().expect("trajectory has at least one sample").1
    }

    pub fn num_steps(&self) -> usize {
        self.records.len()
    }

    /// Rebuilds the full state of every sample.
    pub fn states(&self, sys: &MicroSystem) -> Result<Vec<MicroState>> {
        self.samples.iter().map(|(n, w)| sys.state(self.time(*n), w)).collect()
    }
}

/// Integrates from `t0` for `steps` steps. `observer` sees every step.
pub fn simulate_observed<F>(
    sys: &MicroSystem,
    f: &Nonlinearity,
    w0: &[f64],
    t0: f64,
    steps: usize,
    params: &SolverParams,
    stride: usize,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(usize, &MicroState, &StepRecord),
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
        let mut prev = state;
        prev.t = t_new - params.dt;
        let (mut next, mut rec) = sys.step(&prev, f, params)?;
        // Keep times on the exact grid.
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

/// Trajectory over `[0, horizon]` from the initial jump `w0`.
pub fn simulate(
    sys: &MicroSystem,
    f: &Nonlinearity,
    w0: &[f64],
    horizon: f64,
    params: &SolverParams,
    stride: usize,
) -> Result<Trajectory> {
    let steps = steps_for(horizon, params.dt, "time.horizon")?;
    simulate_observed(sys, f, w0, 0.0, steps, params, stride, |_, _, _| {})
}

/// Advances a jump vector by `steps` steps from `t0` without reconstructing
/// bulk fields.
pub fn advance(
    sys: &MicroSystem,
    f: &Nonlinearity,
    w0: &[f64],
    t0: f64,
    steps: usize,
    params: &SolverParams,
) -> Result<Vec<f64>> {
    let mut w = w0.to_vec();
    for n in 1..=steps {
        w = sys.step_jump(&w, t0 + n as f64 * params.dt, f, params)?.w;
    }
    Ok(w)
}

/// Dissipation terms for the difference of two runs over one step, with
/// the bulk term taken from the difference of the bulk fields.
pub fn dissipation_identity(
    sys: &MicroSystem,
    f: &Nonlinearity,
    dt: f64,
    a: (&MicroState, &MicroState),
    b: (&MicroState, &MicroState),
) -> DissipationTerms {
    let mut terms = membrane::difference_dissipation(sys, f, dt, (&a.0.w, &a.1.w), (&b.0.w, &b.1.w));
    let du: Vec<f64> = a.1.u.iter().zip(&b.1.u).map(|(x, y)| x - y).collect();
    let dw: Vec<f64> = a.1.w.iter().zip(&b.1.w).map(|(x, y)| x - y).collect();
    let zero = vec![0.0; sys.bulk.boundary.len()];
    terms.bulk_term = sys.bulk.energy(&du, &dw, &zero);
    terms
}
