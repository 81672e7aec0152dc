//! Convergence of transient runs to the periodic attractor.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::membrane::{lyapunov, secant_range, MembraneOperator};
use crate::micro::{MicroSystem, Trajectory};
use crate::nonlinearity::Nonlinearity;
use crate::periodic::PeriodicOrbit;

/// Per-step tolerance on increases of the Lyapunov functional.
pub const LYAPUNOV_SLACK: f64 = 1e-10;

/// Window expressed as fractions of the series length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub from: f64,
    pub to: f64,
}

impl Window {
    /// Last 40% of the series.
    pub const TAIL: Window = Window { from: 0.6, to: 1.0 };
    pub const ALL: Window = Window { from: 0.0, to: 1.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Exponential,
    Subexponential,
    ReachedFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Slope of `ln E` against time; `None` when the series reached its floor.
    pub rate: Option<f64>,
    pub r_squared: f64,
    pub classification: Classification,
    pub points: usize,
}

/// Values at or below this fraction of the series maximum count as zero.
const FLOOR_FRACTION: f64 = 1e-24;

/// Least-squares fit of `ln E` over the window of `(t, E)` pairs.
pub fn fit_rate(series: &[(f64, f64)], window: Window) -> Result<RateFit> {
    if !(0.0 <= window.from && window.from < window.to && window.to <= 1.0) {
        return Err(Error::param("window", "need 0 ≤ from < to ≤ 1"));
    }
    let n = series.len();
    let lo = ((window.from * n as f64).floor() as usize).min(n);
    let hi = ((window.to * n as f64).ceil() as usize).min(n);
    let pts = &series[lo..hi];
    if pts.len() < 2 {
        return Err(Error::param("window", "fewer than two points in the window"));
    }
    let peak = series.iter().fold(0.0f64, |m, p| m.max(p.1));
    if pts.iter().any(|p| !(p.1 > FLOOR_FRACTION * peak) || p.1 <= 0.0) {
        return Ok(RateFit {
            rate: None,
            r_squared: 0.0,
            classification: Classification::ReachedFloor,
            points: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let tx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let my = ly.iter().sum::<f64>() / m;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (p, y) in pts.iter().zip(&ly) {
        sxy += (p.0 - tx) * (y - my);
        sxx += (p.0 - tx).powi(2);
    }
    let slope = sxy / sxx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (p, y) in pts.iter().zip(&ly) {
        let fit = my + slope * (p.0 - tx);
        ss_res += (y - fit).powi(2);
        ss_tot += (y - my).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    let classification = if r2 >= 0.99 && slope < 0.0 {
        Classification::Exponential
    } else {
        Classification::Subexponential
    };
    Ok(RateFit {
        rate: Some(slope),
        r_squared: r2,
        classification,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub monotone: bool,
    /// Largest increase between consecutive samples (negative when strictly
    /// decreasing throughout).
    pub max_increase: f64,
}

impl LyapunovSeries {
    pub fn from_values(times: Vec<f64>, values: Vec<f64>) -> Self {
        let max_increase = values
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let monotone = values.len() < 2 || max_increase <= LYAPUNOV_SLACK;
        if !monotone {
            log::error!("Lyapunov functional increased by {max_increase:e}; the discrete scheme should dissipate");
        }
        LyapunovSeries {
            times,
            values,
            monotone,
            max_increase: if max_increase.is_finite() { max_increase } else { 0.0 },
        }
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.values.iter().copied()).collect()
    }
}

/// `E(t) = (α/ε) Σ wt [u_A − u_B]²` at every common sample of two runs.
pub fn lyapunov_series<M: MembraneOperator>(op: &M, a: &Trajectory, b: &Trajectory) -> Result<LyapunovSeries> {
    if a.dt != b.dt || a.t0 != b.t0 || a.samples.len() != b.samples.len() {
        return Err(Error::GridMismatch("trajectories are sampled differently".into()));
    }
    let mut times = Vec::with_capacity(a.samples.len());
    let mut values = Vec::with_capacity(a.samples.len());
    for ((na, wa), (nb, wb)) in a.samples.iter().zip(&b.samples) {
        if na != nb || wa.len() != wb.len() {
            return Err(Error::GridMismatch("trajectories are sampled differently".into()));
        }
        let r: Vec<f64> = wa.iter().zip(wb).map(|(x, y)| x - y).collect();
        times.push(a.time(*na));
        values.push(lyapunov(op, &r));
    }
    Ok(LyapunovSeries::from_values(times, values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub norm_l2: Vec<f64>,
    pub norm_grad: Vec<f64>,
    pub norm_jump: Vec<f64>,
    pub lyapunov: LyapunovSeries,
    pub secant_min: Vec<f64>,
    pub secant_max: Vec<f64>,
    pub rate: RateFit,
    pub constants: Option<MeasuredConstants>,
    /// `grad ≤ C_E · jump` held at every sample.
    pub elliptic_check: Option<bool>,
    /// `‖u‖ ≤ C_P (grad + jump)` held at every sample.
    pub poincare_check: Option<bool>,
}

impl DecayReport {
    /// Largest ratio `final / initial` over the three norms.
    pub fn worst_reduction(&self) -> f64 {
        worst_ratio(&[&self.norm_l2, &self.norm_grad, &self.norm_jump])
    }
}

/// Largest `final / initial` ratio over several series. A series whose
/// initial value is at roundoff level relative to the largest initial
/// value carries no signal and is skipped.
pub fn worst_ratio(series: &[&[f64]]) -> f64 {
    let scale = series.iter().map(|s| s[0].abs()).fold(0.0, f64::max);
    series
        .iter()
        .filter(|s| scale == 0.0 || s[0].abs() > 1e-12 * scale)
        .map(|s| {
            let (first, last) = (s[0], *s.last().unwrap());
            if first == 0.0 {
                if last == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                last / first
            }
        })
        .fold(0.0, f64::max)
}

/// Norms of `u − u^#` along a trajectory, with the orbit repeated in time.
pub fn decay_metrics(
    sys: &MicroSystem,
    f: &Nonlinearity,
    traj: &Trajectory,
    orbit: &PeriodicOrbit,
    constants: Option<MeasuredConstants>,
) -> Result<DecayReport> {
    let nf = sys.num_facets();
    if (traj.dt - orbit.dt).abs() > 1e-15 || traj.t0 != 0.0 {
        return Err(Error::GridMismatch(format!(
            "trajectory (dt {}, t0 {}) and orbit (dt {}) do not share a time grid",
            traj.dt, traj.t0, orbit.dt
        )));
    }
    if orbit.jumps.first().map(|w| w.len()) != Some(nf) {
        return Err(Error::GridMismatch("orbit and system differ in facet count".into()));
    }
    let bulk = sys.bulk();
    let zero_b = vec![0.0; bulk.boundary().len()];
    let lam = sys.jump_scale();
    let mut rep = DecayReport {
        times: Vec::new(),
        norm_l2: Vec::new(),
        norm_grad: Vec::new(),
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
        constants,
        elliptic_check: None,
        poincare_check: None,
    };
    let mut energy = Vec::new();
    let mut ell_ok = true;
    let mut poi_ok = true;
    for (n, w) in &traj.samples {
        if w.len() != nf {
            return Err(Error::GridMismatch("trajectory and system differ in facet count".into()));
        }
        let ws = orbit.at_step(*n);
        let r: Vec<f64> = w.iter().zip(ws).map(|(a, b)| a - b).collect();
        let du = sys.jump_response(&r)?;
        let l2 = bulk.l2_norm(&du);
        let gr = bulk.grad_norm(&du, &r, &zero_b);
        let jp = bulk.jump_norm(&r);
        if let Some(c) = constants {
            let scale = 1.0 + 1e-9;
            ell_ok &= gr <= c.elliptic * jp * scale + 1e-14;
            poi_ok &= l2 <= c.poincare * (gr + jp) * scale + 1e-14;
        }
        let (lo, hi) = secant_range(f, lam, w, ws);
        rep.times.push(traj.time(*n));
        rep.norm_l2.push(l2);
        rep.norm_grad.push(gr);
        rep.norm_jump.push(jp);
        rep.secant_min.push(lo);
        rep.secant_max.push(hi);
        energy.push(lyapunov(sys, &r));
    }
    if constants.is_some() {
        rep.elliptic_check = Some(ell_ok);
        rep.poincare_check = Some(poi_ok);
    }
    rep.lyapunov = LyapunovSeries::from_values(rep.times.clone(), energy);
    rep.rate = if rep.times.len() >= 2 {
        fit_rate(&rep.lyapunov.pairs(), Window::TAIL)?
    } else {
        rep.rate
    };
    Ok(rep)
}

/// Grid constants for jump-driven bulk fields `u = A⁻¹ Cᵀ r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredConstants {
    /// Smallest `C_E` with `‖∇u‖ ≤ C_E ‖r‖_{L²(Γ)}`.
    pub elliptic: f64,
    /// Smallest `C_P` with `‖u‖ ≤ C_P (‖∇u‖² + ‖r‖²)^{1/2}`.
    pub poincare: f64,
}

/// Largest generalized eigenvalue of `M x = λ B x` with `B` SPD.
fn max_generalized_eigenvalue(m: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let bm = b.to_nalgebra();
    let chol = bm
        .cholesky()
        .ok_or_else(|| Error::SingularOperator("norm matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularOperator("norm matrix is singular".into()))?;
    let c = &linv * m.to_nalgebra() * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(c.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Measures `C_E` and `C_P` by dense generalized eigenproblems on the
/// jump-driven subspace.
pub fn measure_constants(sys: &MicroSystem) -> Result<MeasuredConstants> {
    let nf = sys.num_facets();
    let bulk = sys.bulk();
    let zero_b = vec![0.0; bulk.boundary().len()];
    let mut grads = Vec::with_capacity(nf);
    let mut fields = Vec::with_capacity(nf);
    let mut e = vec![0.0; nf];
    for k in 0..nf {
        e[k] = 1.0;
        let u = sys.jump_response(&e)?;
        grads.push(bulk.grad_components(&u, &e, &zero_b));
        fields.push(u);
        e[k] = 0.0;
    }
    let mut g = DenseMatrix::zeros(nf, nf);
    let mut l2 = DenseMatrix::zeros(nf, nf);
    let vol = bulk.cell_volume();
    for i in 0..nf {
        for j in i..nf {
            let gij: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum();
            let lij: f64 = vol * fields[i].iter().zip(&fields[j]).map(|(a, b)| a * b).sum::<f64>();
            g.set(i, j, gij);
            g.set(j, i, gij);
            l2.set(i, j, lij);
            l2.set(j, i, lij);
        }
    }
    let area = bulk.facet_measure();
    let mut jump = DenseMatrix::zeros(nf, nf);
    let mut both = g.clone();
    for i in 0..nf {
        jump.set(i, i, area);
        both.set(i, i, both.get(i, i) + area);
    }
    let ce = max_generalized_eigenvalue(&g, &jump)?.max(0.0).sqrt();
    let cp = max_generalized_eigenvalue(&l2, &both)?.max(0.0).sqrt();
    log::info!("measured constants: C_E = {ce:.6}, C_P = {cp:.6}");
    Ok(MeasuredConstants {
        elliptic: ce,
        poincare: cp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_series_rate() {
        let q: f64 = 0.83;
        let s: Vec<(f64, f64)> = (0..50).map(|n| (n as f64, q.powi(n))).collect();
        let fit = fit_rate(&s, Window::ALL).unwrap();
        assert!((fit.rate.unwrap() - q.ln()).abs() < 1e-10);
        assert_eq!(fit.classification, Classification::Exponential);
    }

    #[test]
    fn constant_series_is_subexponential() {
        let s: Vec<(f64, f64)> = (0..20).map(|n| (n as f64, 2.0)).collect();
        let fit = fit_rate(&s, Window::ALL).unwrap();
        assert_eq!(fit.rate, Some(0.0));
        assert_eq!(fit.classification, Classification::Subexponential);
    }

    #[test]
    fn zero_hits_floor() {
        let s = vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.0), (3.0, 0.0)];
        let fit = fit_rate(&s, Window::ALL).unwrap();
        assert_eq!(fit.classification, Classification::ReachedFloor);
        assert!(fit.rate.is_none());
    }

    #[test]
    fn tail_window_ignores_transient() {
        let mut s: Vec<(f64, f64)> = (0..100).map(|n| (n as f64, (-0.1 * n as f64).exp())).collect();
        for p in s.iter_mut().take(30) {
            p.1 *= 1.0 + (p.0).sin().abs();
        }
        let fit = fit_rate(&s, Window::TAIL).unwrap();
        assert!((fit.rate.unwrap() + 0.1).abs() < 1e-10);
    }

    #[test]
    fn lyapunov_monotonicity_flag() {
        let ok = LyapunovSeries::from_values(vec![0.0, 1.0, 2.0], vec![3.0, 2.0, 2.0]);
        assert!(ok.monotone);
        let bad = LyapunovSeries::from_values(vec![0.0, 1.0], vec![1.0, 1.1]);
        assert!(!bad.monotone);
    }
}
