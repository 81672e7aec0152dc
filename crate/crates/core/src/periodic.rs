//! Time-periodic attractor of the ε-problem: Poincaré-map iteration, the
//! `f + δ s` continuation and the discrete energy estimates of the orbit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::membrane::MembraneOperator;
use crate::micro::{MicroSystem, SolverParams};
use crate::nonlinearity::{regularize, Nonlinearity};

/// Smallest regularization accepted by the δ-continuation.
pub const MIN_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Picard,
    DeltaSequence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicParams {
    pub tol: f64,
    pub max_iter: usize,
    pub theta: f64,
    /// Iterations without progress before `θ` is halved.
    pub stall_window: usize,
}

impl Default for PeriodicParams {
    fn default() -> Self {
        PeriodicParams {
            tol: 1e-8,
            max_iter: 500,
            theta: 1.0,
            stall_window: 20,
        }
    }
}

impl PeriodicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("periodic.tol", format!("{} must be > 0", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("periodic.max_iters", "must be positive"));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::param("periodic.theta", format!("{} outside (0, 1]", self.theta)));
        }
        Ok(())
    }
}

/// One period of jumps at every time step, `jumps[n]` at `t = n Δt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    pub dt: f64,
    pub jumps: Vec<Vec<f64>>,
    /// Weighted jump norm of `w(1) − w(0)`.
    pub defect: f64,
    pub iterations: usize,
    pub defects: Vec<f64>,
    pub method: Method,
    pub delta: Option<f64>,
}

impl PeriodicOrbit {
    pub fn steps(&self) -> usize {
        self.jumps.len() - 1
    }

    pub fn initial(&self) -> &[f64] {
        &self.jumps[0]
    }

    /// Jump at step `n` of any period.
    pub fn at_step(&self, n: usize) -> &[f64] {
        &self.jumps[n % self.steps()]
    }
}

/// Weighted `L²(Γ)` norm of a difference of jump vectors.
pub fn jump_distance<M: MembraneOperator>(op: &M, a: &[f64], b: &[f64]) -> f64 {
    op.weights()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `(Δt Σ_n ‖a_n − b_n‖²)^{1/2}` over one period.
pub fn orbit_distance<M: MembraneOperator>(op: &M, a: &PeriodicOrbit, b: &PeriodicOrbit) -> Result<f64> {
    if a.jumps.len() != b.jumps.len() || a.dt != b.dt {
        return Err(Error::GridMismatch("orbits use different time grids".into()));
    }
    let s: f64 = (1..a.jumps.len())
        .map(|n| jump_distance(op, &a.jumps[n], &b.jumps[n]).powi(2))
        .sum();
    Ok((a.dt * s).sqrt())
}

/// Integrates one period with a membrane-only stepper.
pub(crate) fn integrate_period<S>(stepper: S, w0: &[f64], steps: usize, dt: f64, record: bool) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    S: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    let mut path = Vec::new();
    if record {
        path.reserve(steps + 1);
        path.push(w0.to_vec());
    }
    let mut w = w0.to_vec();
    for n in 1..=steps {
        w = stepper(&w, n as f64 * dt)?;
        if record {
            path.push(w.clone());
        }
    }
    Ok((w, path))
}

/// Jump after one period starting from `w0` at `t = 0`.
pub fn poincare_map(sys: &MicroSystem, f: &Nonlinearity, params: &SolverParams, w0: &[f64]) -> Result<Vec<f64>> {
    let n = params.steps_per_period()?;
    let step = |w: &[f64], t: f64| Ok(sys.step_jump(w, t, f, params)?.w);
    Ok(integrate_period(step, w0, n, params.dt, false)?.0)
}

/// Damped Picard iteration `w ← (1−θ) w + θ P(w)` shared by both models.
pub(crate) fn picard<M, S>(
    op: &M,
    stepper: S,
    w0: &[f64],
    steps: usize,
    dt: f64,
    pp: &PeriodicParams,
) -> Result<PeriodicOrbit>
where
    M: MembraneOperator,
    S: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    pp.validate()?;
    let mut theta = pp.theta;
    let mut w = w0.to_vec();
    let mut defects = Vec::new();
    let mut stalled = 0;
    for it in 0..pp.max_iter {
        let (pw, path) = integrate_period(&stepper, &w, steps, dt, true)?;
        let d = jump_distance(op, &pw, &w);
        if let Some(&prev) = defects.last() {
            if d > prev * (1.0 + 1e-9) + 1e-14 {
                log::warn!("Picard defect increased from {prev:e} to {d:e}; the stepper is not contractive");
            }
            if d > 0.999 * prev {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        defects.push(d);
        log::debug!("Picard iteration {it}: defect {d:e}, theta {theta}");
        if d <= pp.tol {
            return Ok(PeriodicOrbit {
                dt,
                jumps: path,
                defect: d,
                iterations: it,
                defects,
                method: Method::Picard,
                delta: None,
            });
        }
        if stalled >= pp.stall_window {
            theta *= 0.5;
            stalled = 0;
        }
        for (x, p) in w.iter_mut().zip(&pw) {
            *x = (1.0 - theta) * *x + theta * p;
        }
    }
    Err(Error::PeriodicNotConverged {
        iterations: pp.max_iter,
        defects,
    })
}

pub fn find_periodic(
    sys: &MicroSystem,
    f: &Nonlinearity,
    params: &SolverParams,
    pp: &PeriodicParams,
    w0: &[f64],
) -> Result<PeriodicOrbit> {
    let n = params.steps_per_period()?;
    let step = |w: &[f64], t: f64| Ok(sys.step_jump(w, t, f, params)?.w);
    picard(sys, step, w0, n, params.dt, pp)
}

/// Orbits of `f + δ s` along a decreasing δ sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizedSweep {
    pub deltas: Vec<f64>,
    pub orbits: Vec<PeriodicOrbit>,
    /// Period-`L²` distance between consecutive orbits.
    pub differences: Vec<f64>,
}

pub fn validate_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::param("periodic.deltas", "empty sequence"));
    }
    for w in deltas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::param("periodic.deltas", "must be strictly decreasing"));
        }
    }
    if let Some(&d) = deltas.iter().find(|&&d| !(d >= MIN_DELTA)) {
        return Err(Error::param(
            "periodic.deltas",
            format!("{d} below the smallest accepted value {MIN_DELTA}"),
        ));
    }
    Ok(())
}

/// Shared δ-continuation driver; `solve(g, w0)` finds the orbit for `g`.
pub(crate) fn delta_sweep<M, S>(op: &M, f: &Nonlinearity, deltas: &[f64], w0: &[f64], solve: S) -> Result<RegularizedSweep>
where
    M: MembraneOperator,
    S: Fn(&Nonlinearity, &[f64]) -> Result<PeriodicOrbit>,
{
    validate_deltas(deltas)?;
    let mut orbits: Vec<PeriodicOrbit> = Vec::with_capacity(deltas.len());
    let mut start = w0.to_vec();
    for &d in deltas {
        let g = regularize(f, d)?;
        let mut orbit = solve(&g, &start)?;
        orbit.method = Method::DeltaSequence;
        orbit.delta = Some(d);
        start = orbit.initial().to_vec();
        orbits.push(orbit);
    }
    let differences = orbits
        .windows(2)
        .map(|p| orbit_distance(op, &p[0], &p[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegularizedSweep {
        deltas: deltas.to_vec(),
        orbits,
        differences,
    })
}

pub fn find_periodic_regularized(
    sys: &MicroSystem,
    f: &Nonlinearity,
    params: &SolverParams,
    pp: &PeriodicParams,
    deltas: &[f64],
    w0: &[f64],
) -> Result<RegularizedSweep> {
    delta_sweep(sys, f, deltas, w0, |g, start| find_periodic(sys, g, params, pp, start))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl EstimateCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        EstimateCheck {
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Gradient plus `λ₁/(2ε)` jump energy against the data energy.
    pub gradient_bound: EstimateCheck,
    /// `α/(2ε)` time-derivative jump energy against data energies.
    pub time_derivative_bound: EstimateCheck,
    /// Terms that telescope to zero on an exactly periodic orbit.
    pub periodicity_remainder: f64,
    /// Largest `|w|/ε` visited, to compare with the range over which
    /// `(λ₁, λ₂)` were fitted.
    pub max_scaled_jump: f64,
}

/// Discrete analogues of the two a-priori estimates for a periodic orbit.
pub fn verify_energy_estimates(sys: &MicroSystem, orbit: &PeriodicOrbit, lambda1: f64, lambda2: f64) -> Result<EnergyReport> {
    if !(lambda1 > 0.0) || lambda2 < 0.0 {
        return Err(Error::param("lambda", "need λ₁ > 0 and λ₂ ≥ 0"));
    }
    let eps = sys.epsilon();
    let alpha = sys.alpha();
    let dt = orbit.dt;
    let n = orbit.steps();
    let bulk = sys.bulk();
    let wt = sys.weights();
    let psi = sys.psi();

    let zero_w = vec![0.0; sys.num_facets()];
    let (bnd_unit, cells_unit) = sys.psi_spatial();
    // Data energy of the zero-jump extension of `Ψ` with unit time factor.
    let data_unit = bulk.energy(cells_unit, &zero_w, bnd_unit);

    let mut grad = 0.0;
    let mut jump = 0.0;
    let mut deriv = 0.0;
    let mut data = 0.0;
    let mut data_t = 0.0;
    let mut max_scaled = 0.0f64;
    for k in 1..=n {
        let t = k as f64 * dt;
        let w = &orbit.jumps[k];
        let u = sys.bulk_potential(t, w)?;
        grad += 0.5 * bulk.energy(&u, w, &sys.boundary_values(t));
        jump += lambda1 / (2.0 * eps) * wt.iter().zip(w).map(|(a, x)| a * x * x).sum::<f64>();
        let wp = &orbit.jumps[k - 1];
        deriv += wt.iter().zip(w.iter().zip(wp)).map(|(a, (x, y))| a * ((x - y) / dt).powi(2)).sum::<f64>();
        let s1 = psi.time_factor(t);
        let s0 = psi.time_factor(t - dt);
        data += 0.5 * s1 * s1 * data_unit;
        data_t += 0.5 * ((s1 - s0) / dt).powi(2) * data_unit;
        max_scaled = max_scaled.max(w.iter().fold(0.0f64, |m, x| m.max(x.abs())) / eps);
    }
    let gamma = eps * lambda2 * lambda2 * sys.domain().membrane_measure() / (2.0 * lambda1);
    let rhs1 = dt * data + gamma;
    let first = EstimateCheck::new(dt * (grad + jump), rhs1);
    let second = EstimateCheck::new(alpha / (2.0 * eps) * dt * deriv, dt * data_t + rhs1);

    let cap = alpha / eps;
    let e = |w: &[f64]| wt.iter().zip(w).map(|(a, x)| a * x * x).sum::<f64>();
    let remainder = 0.5 * cap * (e(&orbit.jumps[n]) - e(&orbit.jumps[0])).abs();
    Ok(EnergyReport {
        lambda1,
        lambda2,
        gradient_bound: first,
        time_derivative_bound: second,
        periodicity_remainder: remainder,
        max_scaled_jump: max_scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{BoundaryData, SpatialProfile, TemporalProfile};
    use crate::geometry::{build_cell_geometry, tile_domain, Conductivity};
    use crate::nonlinearity::Kind;

    fn small_system(psi: BoundaryData) -> MicroSystem {
        let cell = build_cell_geometry(0.25, 4).unwrap();
        let dom = tile_domain(&cell, 0.5).unwrap();
        MicroSystem::new(&dom, &Conductivity::new(2.0, 1.0).unwrap(), &psi, 1.0).unwrap()
    }

    #[test]
    fn constant_data_has_zero_orbit() {
        let sys = small_system(BoundaryData::constant(2.5));
        let f = Nonlinearity::builtin(Kind::Noncoercive, 1.0).unwrap();
        let p = SolverParams::new(0.01).unwrap();
        let zero = vec![0.0; sys.num_facets()];
        assert_eq!(poincare_map(&sys, &f, &p, &zero).unwrap(), zero);
        let orbit = find_periodic(&sys, &f, &p, &PeriodicParams::default(), &zero).unwrap();
        assert_eq!(orbit.defect, 0.0);
        assert!(orbit.jumps.iter().all(|w| w.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn picard_defects_nonincreasing() {
        let psi = BoundaryData::new(0.5, SpatialProfile::default_affine(), TemporalProfile::Sine).unwrap();
        let sys = small_system(psi);
        let f = Nonlinearity::builtin(Kind::Noncoercive, 1.0).unwrap();
        let p = SolverParams::new(0.01).unwrap();
        let w0: Vec<f64> = (0..sys.num_facets()).map(|k| 0.3 * (k as f64).sin()).collect();
        let orbit = find_periodic(&sys, &f, &p, &PeriodicParams::default(), &w0).unwrap();
        assert!(orbit.defect <= 1e-8);
        for d in orbit.defects.windows(2) {
            assert!(d[1] <= d[0] * (1.0 + 1e-9) + 1e-14);
        }
    }

    #[test]
    fn delta_sequence_validation() {
        assert!(validate_deltas(&[0.1, 0.01, 0.001]).is_ok());
        assert!(validate_deltas(&[0.1, 0.1]).is_err());
        assert!(validate_deltas(&[0.01, 0.1]).is_err());
        assert!(validate_deltas(&[1e-3, 1e-7]).is_err());
        assert!(validate_deltas(&[]).is_err());
    }

    #[test]
    fn energy_estimates_trivial_for_zero_data() {
        let sys = small_system(BoundaryData::zero());
        let f = Nonlinearity::linear(1.0).unwrap();
        let p = SolverParams::new(0.01).unwrap();
        let zero = vec![0.0; sys.num_facets()];
        let orbit = find_periodic(&sys, &f, &p, &PeriodicParams::default(), &zero).unwrap();
        let r = verify_energy_estimates(&sys, &orbit, 1.0, 0.0).unwrap();
        assert_eq!(r.gradient_bound.lhs, 0.0);
        assert_eq!(r.gradient_bound.rhs, 0.0);
        assert!(r.gradient_bound.pass && r.time_derivative_bound.pass);
    }

    #[test]
    fn energy_estimates_hold_for_linear_orbit() {
        let psi = BoundaryData::new(1.0, SpatialProfile::default_sines(), TemporalProfile::Sine).unwrap();
        let sys = small_system(psi);
        let f = Nonlinearity::linear(1.0).unwrap();
        let p = SolverParams::new(0.01).unwrap();
        let zero = vec![0.0; sys.num_facets()];
        let orbit = find_periodic(&sys, &f, &p, &PeriodicParams::default(), &zero).unwrap();
        let r = verify_energy_estimates(&sys, &orbit, 1.0, 0.0).unwrap();
        assert!(r.gradient_bound.margin > 0.0, "{r:?}");
        assert!(r.time_derivative_bound.margin > 0.0, "{r:?}");
    }
}
