//! Backward-Euler membrane update shared by the micro and two-scale models.
//!
//! Both models reduce, after eliminating the quasi-static bulk, to
//!
//! ```text
//! wt_k [ c (w_k − w_k^old)/Δt + f(λ w_k) ] + (S w)_k = s_k(t)
//! ```
//!
//! with facet weights `wt`, capacitance `c`, jump scale `λ`, a symmetric
//! positive semidefinite membrane operator `S` and a source `s(t)` coming
//! from the boundary data. The right side `s − S w` is the total current
//! through each facet.

use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, norm_inf};
use crate::nonlinearity::Nonlinearity;

pub trait MembraneOperator {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weights(&self) -> &[f64];

    fn capacitance(&self) -> f64;

    /// Factor applied to the jump inside `f`.
    fn jump_scale(&self) -> f64;

    /// `out = S w`.
    fn apply_schur(&self, w: &[f64], out: &mut [f64]);

    fn schur_diagonal(&self) -> &[f64];

    /// Total facet current at `t` when the jump vanishes.
    fn source(&self, t: f64, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonParams {
    /// Bound on `max_k |R_k| / wt_k`.
    pub tol: f64,
    pub max_iter: usize,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    /// Diagonal shift (times the jump scale) used by the single retry.
    pub jacobian_shift: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            tol: 1e-11,
            max_iter: 25,
            linear_tol: 1e-13,
            linear_max_iter: 500,
            jacobian_shift: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub w: Vec<f64>,
    pub iterations: usize,
    /// Scaled residual before each Newton update and after the last one.
    pub residual_history: Vec<f64>,
    /// True when the shifted-Jacobian retry was needed.
    pub shifted: bool,
}

struct Workspace {
    src: Vec<f64>,
    sw: Vec<f64>,
    res: Vec<f64>,
}

fn residual<M: MembraneOperator>(
    op: &M,
    f: &Nonlinearity,
    w_old: &[f64],
    dt: f64,
    w: &[f64],
    ws: &mut Workspace,
) -> f64 {
    let wt = op.weights();
    let c = op.capacitance();
    let lam = op.jump_scale();
    op.apply_schur(w, &mut ws.sw);
    let mut worst = 0.0f64;
    for k in 0..w.len() {
        let r = wt[k] * (c * (w[k] - w_old[k]) / dt + f.eval(lam * w[k])) + ws.sw[k] - ws.src[k];
        ws.res[k] = r;
        worst = worst.max((r / wt[k]).abs());
    }
    if worst.is_finite() {
        worst
    } else {
        f64::INFINITY
    }
}

fn newton<M: MembraneOperator>(
    op: &M,
    f: &Nonlinearity,
    w_old: &[f64],
    dt: f64,
    params: &NewtonParams,
    shift: f64,
    ws: &mut Workspace,
) -> (Vec<f64>, Vec<f64>, bool) {
    let n = op.len();
    let wt = op.weights();
    let c = op.capacitance();
    let lam = op.jump_scale();
    let sdiag = op.schur_diagonal();
    let mut w = w_old.to_vec();
    let mut history = vec![residual(op, f, w_old, dt, &w, ws)];
    let mut diag = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for _ in 0..params.max_iter {
        let current = *history.last().unwrap();
        if current <= params.tol {
            return (w, history, true);
        }
        for k in 0..n {
            let fd = f.deriv(lam * w[k]) * lam;
            diag[k] = wt[k] * (c / dt + fd + shift * lam);
            rhs[k] = -ws.res[k];
        }
        let jac_diag: Vec<f64> = diag.iter().zip(sdiag).map(|(a, b)| a + b).collect();
        delta.iter_mut().for_each(|x| *x = 0.0);
        let apply = |x: &[f64], y: &mut [f64]| {
            op.apply_schur(x, y);
            for k in 0..n {
                y[k] += diag[k] * x[k];
            }
        };
        if conjugate_gradient(
            apply,
            &jac_diag,
            &rhs,
            &mut delta,
            params.linear_tol,
            params.linear_max_iter,
        )
        .is_err()
        {
            return (w, history, false);
        }
        // Backtracking keeps the scaled residual from growing on steep `f`.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            for k in 0..n {
                trial[k] = w[k] + step * delta[k];
            }
            let r = residual(op, f, w_old, dt, &trial, ws);
            if r < current || r <= params.tol {
                accepted = Some(r);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(r) => {
                std::mem::swap(&mut w, &mut trial);
                history.push(r);
            }
            None => {
                // Restore the residual of the current iterate.
                residual(op, f, w_old, dt, &w, ws);
                return (w, history, false);
            }
        }
    }
    let ok = *history.last().unwrap() <= params.tol;
    (w, history, ok)
}

/// One backward-Euler step to `t_new = t_old + dt`.
pub fn backward_euler_step<M: MembraneOperator>(
    op: &M,
    f: &Nonlinearity,
    w_old: &[f64],
    t_new: f64,
    dt: f64,
    params: &NewtonParams,
) -> Result<StepOutcome> {
    let n = op.len();
    if w_old.len() != n {
        return Err(Error::GridMismatch(format!(
            "jump vector has {} entries, membrane has {n}",
            w_old.len()
        )));
    }
    if w_old.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("w", "jump vector is not finite"));
    }
    let mut ws = Workspace {
        src: vec![0.0; n],
        sw: vec![0.0; n],
        res: vec![0.0; n],
    };
    op.source(t_new, &mut ws.src);
    let (w, history, ok) = newton(op, f, w_old, dt, params, 0.0, &mut ws);
    if ok {
        return Ok(StepOutcome {
            w,
            iterations: history.len() - 1,
            residual_history: history,
            shifted: false,
        });
    }
    log::debug!("Newton stalled at t = {t_new}; retrying with shifted Jacobian");
    let (w, retry, ok) = newton(op, f, w_old, dt, params, params.jacobian_shift, &mut ws);
    if ok {
        let mut full = history;
        full.extend_from_slice(&retry);
        return Ok(StepOutcome {
            w,
            iterations: retry.len() - 1,
            residual_history: full,
            shifted: true,
        });
    }
    let mut full = history;
    full.extend_from_slice(&retry);
    Err(Error::Newton {
        t: t_new,
        history: full,
    })
}

/// Scaled residual of a candidate update; used by tests and diagnostics.
pub fn step_residual<M: MembraneOperator>(
    op: &M,
    f: &Nonlinearity,
    w_old: &[f64],
    w_new: &[f64],
    t_new: f64,
    dt: f64,
) -> f64 {
    let n = op.len();
    let mut ws = Workspace {
        src: vec![0.0; n],
        sw: vec![0.0; n],
        res: vec![0.0; n],
    };
    op.source(t_new, &mut ws.src);
    residual(op, f, w_old, dt, w_new, &mut ws)
}

/// `c Σ wt r²`, the Lyapunov functional of a jump difference.
pub fn lyapunov<M: MembraneOperator>(op: &M, r: &[f64]) -> f64 {
    op.capacitance() * op.weights().iter().zip(r).map(|(w, x)| w * x * x).sum::<f64>()
}

/// Weighted jump norm `(Σ wt r²)^{1/2}`.
pub fn jump_norm<M: MembraneOperator>(op: &M, r: &[f64]) -> f64 {
    op.weights()
        .iter()
        .zip(r)
        .map(|(w, x)| w * x * x)
        .sum::<f64>()
        .sqrt()
}

/// Discrete energy balance for the difference of two runs over one step.
///
/// With `r = w_a − w_b`, the four terms sum to zero up to the Newton
/// residual; the first three therefore sum to `−numerical_dissipation ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct DissipationTerms {
    /// `rᵀ S r` at the new level.
    pub bulk_term: f64,
    /// `(c / 2Δt) Σ wt (r_{n+1}² − r_n²)`
    pub membrane_storage_delta: f64,
    /// `Σ wt r_{n+1} (f(λ w_a) − f(λ w_b))`
    pub membrane_dissipation: f64,
    /// `(c / 2Δt) Σ wt (r_{n+1} − r_n)²`
    pub numerical_dissipation: f64,
}

impl DissipationTerms {
    /// Sum of the three physical terms; nonpositive for a dissipative step.
    pub fn sum(&self) -> f64 {
        self.bulk_term + self.membrane_storage_delta + self.membrane_dissipation
    }

    /// Defect of the exact four-term balance.
    pub fn balance_defect(&self) -> f64 {
        self.sum() + self.numerical_dissipation
    }
}

pub fn difference_dissipation<M: MembraneOperator>(
    op: &M,
    f: &Nonlinearity,
    dt: f64,
    a: (&[f64], &[f64]),
    b: (&[f64], &[f64]),
) -> DissipationTerms {
    let n = op.len();
    let wt = op.weights();
    let c = op.capacitance();
    let lam = op.jump_scale();
    let r_old: Vec<f64> = a.0.iter().zip(b.0).map(|(x, y)| x - y).collect();
    let r_new: Vec<f64> = a.1.iter().zip(b.1).map(|(x, y)| x - y).collect();
    let mut sr = vec![0.0; n];
    op.apply_schur(&r_new, &mut sr);
    let mut t = DissipationTerms {
        bulk_term: r_new.iter().zip(&sr).map(|(x, y)| x * y).sum(),
        ..Default::default()
    };
    for k in 0..n {
        t.membrane_storage_delta += c / (2.0 * dt) * wt[k] * (r_new[k] * r_new[k] - r_old[k] * r_old[k]);
        t.numerical_dissipation += c / (2.0 * dt) * wt[k] * (r_new[k] - r_old[k]).powi(2);
        t.membrane_dissipation += wt[k] * r_new[k] * (f.eval(lam * a.1[k]) - f.eval(lam * b.1[k]));
    }
    t
}

/// Min and max of the secant slopes `(f(λa) − f(λb)) / (λa − λb)`.
pub fn secant_range(f: &Nonlinearity, lam: f64, a: &[f64], b: &[f64]) -> (f64, f64) {
    a.iter().zip(b).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, y)| {
        let s = f.secant(lam * y, lam * x);
        (lo.min(s), hi.max(s))
    })
}

/// Largest absolute entry, a cheap convergence check for callers.
pub fn max_abs(v: &[f64]) -> f64 {
    norm_inf(v)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::nonlinearity::Kind;

    /// Small dense operator for exercising the stepper in isolation.
    pub struct DenseMembrane {
        pub s: DenseMatrix,
        pub diag: Vec<f64>,
        pub wt: Vec<f64>,
        pub cap: f64,
        pub scale: f64,
        pub src: Vec<f64>,
    }

    impl DenseMembrane {
        pub fn laplacian(n: usize, g: f64) -> Self {
            let mut s = DenseMatrix::zeros(n, n);
            for i in 0..n {
                let j = (i + 1) % n;
                s.set(i, i, s.get(i, i) + g);
                s.set(j, j, s.get(j, j) + g);
                s.set(i, j, s.get(i, j) - g);
                s.set(j, i, s.get(j, i) - g);
            }
            let diag = s.diagonal();
            DenseMembrane {
                s,
                diag,
                wt: (0..n).map(|k| 0.5 + 0.1 * k as f64).collect(),
                cap: 2.0,
                scale: 1.5,
                src: (0..n).map(|k| (k as f64).sin()).collect(),
            }
        }
    }

    impl MembraneOperator for DenseMembrane {
        fn len(&self) -> usize {
            self.wt.len()
        }
        fn weights(&self) -> &[f64] {
            &self.wt
        }
        fn capacitance(&self) -> f64 {
            self.cap
        }
        fn jump_scale(&self) -> f64 {
            self.scale
        }
        fn apply_schur(&self, w: &[f64], out: &mut [f64]) {
            self.s.matvec(w, out);
        }
        fn schur_diagonal(&self) -> &[f64] {
            &self.diag
        }
        fn source(&self, t: f64, out: &mut [f64]) {
            for (o, s) in out.iter_mut().zip(&self.src) {
                *o = s * (1.0 + t);
            }
        }
    }

    #[test]
    fn linear_step_matches_direct_solve() {
        let op = DenseMembrane::laplacian(6, 0.8);
        let f = Nonlinearity::linear(0.7).unwrap();
        let dt = 0.05;
        let w0: Vec<f64> = (0..6).map(|k| 0.1 * k as f64 - 0.2).collect();
        let out = backward_euler_step(&op, &f, &w0, 0.3, dt, &NewtonParams::default()).unwrap();
        // Oracle: (diag(wt (c/dt + κλ)) + S) w = wt c w0 / dt + s
        let n = 6;
        let mut m = op.s.to_nalgebra();
        let mut b = nalgebra::DVector::zeros(n);
        for k in 0..n {
            m[(k, k)] += op.wt[k] * (op.cap / dt + 0.7 * op.scale);
            b[k] = op.wt[k] * op.cap * w0[k] / dt + op.src[k] * 1.3;
        }
        let x = m.lu().solve(&b).unwrap();
        for k in 0..n {
            assert!((out.w[k] - x[k]).abs() < 1e-12);
        }
        assert!(out.iterations <= 2);
    }

    #[test]
    fn zero_is_fixed_without_source() {
        let mut op = DenseMembrane::laplacian(4, 1.0);
        op.src = vec![0.0; 4];
        let f = Nonlinearity::builtin(Kind::Noncoercive, 1.0).unwrap();
        let out = backward_euler_step(&op, &f, &[0.0; 4], 0.1, 0.01, &NewtonParams::default()).unwrap();
        assert!(out.w.iter().all(|&x| x == 0.0));
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn nonlinear_step_converges_quadratically() {
        let op = DenseMembrane::laplacian(5, 0.5);
        let f = Nonlinearity::builtin(Kind::Cubic, 1.0).unwrap();
        let w0 = vec![2.0, -1.0, 0.5, 3.0, -2.5];
        let out = backward_euler_step(&op, &f, &w0, 0.1, 0.1, &NewtonParams::default()).unwrap();
        assert!(step_residual(&op, &f, &w0, &out.w, 0.1, 0.1) <= 1e-11);
        let h = &out.residual_history;
        for i in 1..h.len() {
            if h[i - 1] < 1e-3 && h[i - 1] > 1e-13 {
                assert!(h[i] < 0.5 * h[i - 1], "{h:?}");
            }
        }
    }

    #[test]
    fn difference_balance_is_exact() {
        let op = DenseMembrane::laplacian(5, 0.9);
        let f = Nonlinearity::builtin(Kind::Noncoercive, 1.0).unwrap();
        let p = NewtonParams::default();
        let dt = 0.02;
        let a0 = vec![1.0, -0.3, 0.2, 0.0, 2.0];
        let b0 = vec![-0.5, 0.3, 0.9, 1.0, 0.0];
        let a1 = backward_euler_step(&op, &f, &a0, dt, dt, &p).unwrap().w;
        let b1 = backward_euler_step(&op, &f, &b0, dt, dt, &p).unwrap().w;
        let d = difference_dissipation(&op, &f, dt, (&a0, &a1), (&b0, &b1));
        assert!(d.bulk_term >= 0.0 && d.membrane_dissipation >= 0.0);
        assert!(d.sum() <= 0.0);
        assert!(d.balance_defect().abs() < 1e-9);
        let e0 = lyapunov(&op, &a0.iter().zip(&b0).map(|(x, y)| x - y).collect::<Vec<_>>());
        let e1 = lyapunov(&op, &a1.iter().zip(&b1).map(|(x, y)| x - y).collect::<Vec<_>>());
        assert!(e1 <= e0);
    }

    #[test]
    fn mismatched_length_rejected() {
        let op = DenseMembrane::laplacian(3, 1.0);
        let f = Nonlinearity::linear(1.0).unwrap();
        assert!(matches!(
            backward_euler_step(&op, &f, &[0.0; 2], 0.1, 0.1, &NewtonParams::default()),
            Err(Error::GridMismatch(_))
        ));
    }
}
