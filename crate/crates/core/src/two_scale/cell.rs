//! Periodic cell problem with a prescribed macro gradient and membrane jump.
//!
//! For a macro gradient `G` and jump `w` the corrector `u¹` minimizes the
//! cell energy
//!
//! ```text
//! Σ_faces T (Δu¹ + h G_d)² + Σ_facets G_k (Δu¹ + h G·ν − w_k)²
//! ```
//!
//! over zero-mean periodic grid functions. The minimizer is linear in
//! `(G, w)`, so it is stored as correctors `χ_d` and `Ξ_k`, together with
//! the effective flux `J = K G + P w` and facet currents `q = −Pᵀ G − S w`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{CellGeometry, Conductivity};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Face {
    minus: usize,
    plus: usize,
    axis: usize,
    trans: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Facet {
    inner: usize,
    outer: usize,
    normal: [f64; 2],
    conductance: f64,
}

#[derive(Debug, Clone)]
pub struct CellOperator {
    cell: CellGeometry,
    sigma: Conductivity,
    dim: usize,
    h: f64,
    faces: Vec<Face>,
    facets: Vec<Facet>,
    matrix: DMatrix<f64>,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    chi: Vec<Vec<f64>>,
    xi: Vec<Vec<f64>>,
    k_eff: [[f64; 2]; 2],
    /// `p[k][d]`: flux in direction `d` per unit jump on facet `k`.
    p: Vec<[f64; 2]>,
    s: DenseMatrix,
}

pub fn assemble_cell_operator(cell: &CellGeometry, sigma: &Conductivity) -> Result<CellOperator> {
    let dim = cell.dim();
    let h = cell.spacing();
    let n = cell.num_cells();
    let area = cell.facet_measure();
    let faces: Vec<Face> = cell
        .periodic_faces()
        .iter()
        .map(|f| Face {
            minus: f.minus,
            plus: f.plus,
            axis: f.axis,
            trans: sigma.of(cell.phase(f.minus)) * area / h,
        })
        .collect();
    let gt = area * sigma.membrane_conductance(h);
    let facets: Vec<Facet> = cell
        .facets()
        .iter()
        .map(|f| Facet {
            inner: f.inner,
            outer: f.outer,
            normal: f.normal(),
            conductance: gt,
        })
        .collect();

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut couple = |i: usize, j: usize, t: f64| {
        a[(i, i)] += t;
        a[(j, j)] += t;
        a[(i, j)] -= t;
        a[(j, i)] -= t;
    };
    for f in &faces {
        couple(f.minus, f.plus, f.trans);
    }
    for f in &facets {
        couple(f.inner, f.outer, f.conductance);
    }
    // Constants span the kernel; a rank-one shift with zero-sum right sides
    // yields the zero-mean solution directly.
    let shift = a.diagonal().max() / n as f64;
    let shifted = &a + DMatrix::from_element(n, n, shift);
    let factor = shifted
        .cholesky()
        .ok_or_else(|| Error::SingularOperator("cell operator is not connected".into()))?;

    let mut op = CellOperator {
        cell: cell.clone(),
        sigma: *sigma,
        dim,
        h,
        faces,
        facets,
        matrix: a,
        factor,
        chi: Vec::new(),
        xi: Vec::new(),
        k_eff: [[0.0; 2]; 2],
        p: Vec::new(),
        s: DenseMatrix::zeros(0, 0),
    };
    let nf = op.facets.len();
    let zero_w = vec![0.0; nf];
    for d in 0..dim {
        let mut g = [0.0; 2];
        g[d] = 1.0;
        op.chi.push(op.solve_direct(g, &zero_w));
    }
    let mut e = vec![0.0; nf];
    for k in 0..nf {
        e[k] = 1.0;
        op.xi.push(op.solve_direct([0.0; 2], &e));
        e[k] = 0.0;
    }
    for d in 0..dim {
        let mut g = [0.0; 2];
        g[d] = 1.0;
        let j = op.flux(g, &op.chi[d], &zero_w);
        for (e, je) in j.iter().enumerate().take(dim) {
            op.k_eff[e][d] = *je;
        }
    }
    let sym = 0.5 * (op.k_eff[0][1] + op.k_eff[1][0]);
    op.k_eff[0][1] = sym;
    op.k_eff[1][0] = sym;
    let mut s = DenseMatrix::zeros(nf, nf);
    let mut p = Vec::with_capacity(nf);
    for k in 0..nf {
        e[k] = 1.0;
        p.push(op.flux([0.0; 2], &op.xi[k], &e));
        let q = op.currents([0.0; 2], &op.xi[k], &e);
        for (j, qj) in q.iter().enumerate() {
            s.set(j, k, -qj);
        }
        e[k] = 0.0;
    }
    s.symmetrize();
    op.p = p;
    op.s = s;
    Ok(op)
}

impl CellOperator {
    fn rhs(&self, g: [f64; 2], w: &[f64]) -> DVector<f64> {
        let n = self.cell.num_cells();
        let mut r = DVector::zeros(n);
        for f in &self.faces {
            let c = f.trans * self.h * g[f.axis];
            r[f.plus] -= c;
            r[f.minus] += c;
        }
        for (f, wk) in self.facets.iter().zip(w) {
            let c = f.conductance * (self.h * dot(g, f.normal) - wk);
            r[f.outer] -= c;
            r[f.inner] += c;
        }
        r
    }

    fn solve_direct(&self, g: [f64; 2], w: &[f64]) -> Vec<f64> {
        let mut u: Vec<f64> = self.factor.solve(&self.rhs(g, w)).iter().copied().collect();
        project_mean(&mut u);
        u
    }

    pub fn cell(&self) -> &CellGeometry {
        &self.cell
    }

    pub fn conductivity(&self) -> Conductivity {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cell.num_cells()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn facet_measure(&self) -> f64 {
        self.cell.facet_measure()
    }

    /// Assembled periodic operator (singular; constants in the kernel).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Zero-mean corrector for `(G, w)` computed from the stored basis.
    pub fn corrector(&self, g: [f64; 2], w: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.num_cells()];
        for d in 0..self.dim {
            if g[d] != 0.0 {
                for (x, c) in u.iter_mut().zip(&self.chi[d]) {
                    *x += g[d] * c;
                }
            }
        }
        for (k, wk) in w.iter().enumerate() {
            if *wk != 0.0 {
                for (x, c) in u.iter_mut().zip(&self.xi[k]) {
                    *x += wk * c;
                }
            }
        }
        project_mean(&mut u);
        u
    }

    /// Direct solve of the cell problem, independent of the stored basis.
    pub fn solve(&self, g: [f64; 2], w: &[f64]) -> Vec<f64> {
        self.solve_direct(g, w)
    }

    /// Effective flux `∫_Y σ(G + ∇_y u¹) dy`.
    pub fn flux(&self, g: [f64; 2], u1: &[f64], w: &[f64]) -> [f64; 2] {
        let h = self.h;
        let mut j = [0.0; 2];
        for f in &self.faces {
            j[f.axis] += h * f.trans * (u1[f.plus] - u1[f.minus] + h * g[f.axis]);
        }
        for (f, wk) in self.facets.iter().zip(w) {
            let q = f.conductance * (u1[f.outer] - u1[f.inner] + h * dot(g, f.normal) - wk);
            for d in 0..self.dim {
                j[d] += h * q * f.normal[d];
            }
        }
        j
    }

    /// Total current through each facet in the direction of `ν`.
    pub fn currents(&self, g: [f64; 2], u1: &[f64], w: &[f64]) -> Vec<f64> {
        self.facets
            .iter()
            .zip(w)
            .map(|(f, wk)| f.conductance * (u1[f.outer] - u1[f.inner] + self.h * dot(g, f.normal) - wk))
            .collect()
    }

    /// Largest one-sided flux mismatch across the facets.
    pub fn flux_continuity(&self, g: [f64; 2], u1: &[f64], w: &[f64]) -> f64 {
        let h = self.h;
        let area = self.facet_measure();
        let (si, so) = (self.sigma.inner, self.sigma.outer);
        let mut worst = 0.0f64;
        for (f, wk) in self.facets.iter().zip(w) {
            let vi = u1[f.inner];
            let vo = u1[f.outer] + h * dot(g, f.normal);
            let q = f.conductance * (vo - vi - wk) / area;
            let t1 = vi + q * h / (2.0 * si);
            let t2 = vo - q * h / (2.0 * so);
            let q1 = 2.0 * si * (t1 - vi) / h;
            let q2 = 2.0 * so * (vo - t2) / h;
            worst = worst.max((q1 - q2).abs());
        }
        worst
    }

    /// Cell energy `∫_Y σ|G + ∇_y u¹|²` in its discrete form.
    pub fn energy(&self, g: [f64; 2], u1: &[f64], w: &[f64]) -> f64 {
        self.bilinear(g, u1, w, g, u1, w)
    }

    /// Symmetric bilinear form associated with [`Self::energy`].
    pub fn bilinear(&self, g: [f64; 2], u1: &[f64], w: &[f64], gt: [f64; 2], v1: &[f64], z: &[f64]) -> f64 {
        let h = self.h;
        let mut e = 0.0;
        for f in &self.faces {
            let a = u1[f.plus] - u1[f.minus] + h * g[f.axis];
            let b = v1[f.plus] - v1[f.minus] + h * gt[f.axis];
            e += f.trans * a * b;
        }
        for (k, f) in self.facets.iter().enumerate() {
            let a = u1[f.outer] - u1[f.inner] + h * dot(g, f.normal) - w[k];
            let b = v1[f.outer] - v1[f.inner] + h * dot(gt, f.normal) - z[k];
            e += f.conductance * a * b;
        }
        e
    }

    /// Cell-equation residual: the bilinear form tested with each cell
    /// indicator.
    pub fn equation_residual(&self, g: [f64; 2], u1: &[f64], w: &[f64]) -> Vec<f64> {
        let h = self.h;
        let mut r = vec![0.0; self.num_cells()];
        for f in &self.faces {
            let q = f.trans * (u1[f.plus] - u1[f.minus] + h * g[f.axis]);
            r[f.plus] += q;
            r[f.minus] -= q;
        }
        for (f, wk) in self.facets.iter().zip(w) {
            let q = f.conductance * (u1[f.outer] - u1[f.inner] + h * dot(g, f.normal) - wk);
            r[f.outer] += q;
            r[f.inner] -= q;
        }
        r
    }

    /// Broken `∇_y` seminorm squared: regular differences plus the
    /// jump-corrected difference across each facet.
    pub fn grad_y_squared(&self, u1: &[f64], w: &[f64]) -> f64 {
        let scale = self.h.powi(self.dim as i32 - 2);
        let mut s = 0.0;
        for f in &self.faces {
            s += (u1[f.plus] - u1[f.minus]).powi(2);
        }
        for (f, wk) in self.facets.iter().zip(w) {
            s += (u1[f.outer] - u1[f.inner] - wk).powi(2);
        }
        scale * s
    }

    /// `∫_Y u² dy`
    pub fn l2_squared(&self, u1: &[f64]) -> f64 {
        self.cell.cell_volume() * u1.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn mean(&self, u1: &[f64]) -> f64 {
        self.cell.cell_volume() * u1.iter().sum::<f64>()
    }

    pub fn effective_conductivity(&self) -> [[f64; 2]; 2] {
        self.k_eff
    }

    /// Flux response `P e_k` of a unit jump on facet `k`.
    pub fn jump_flux(&self, k: usize) -> [f64; 2] {
        self.p[k]
    }

    /// Membrane Schur complement of the cell.
    pub fn schur(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn facet_midpoints(&self) -> Vec<[f64; 2]> {
        self.cell.facets().iter().map(|f| f.midpoint).collect()
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn project_mean(u: &mut [f64]) {
    let m = u.iter().sum::<f64>() / u.len() as f64;
    for x in u.iter_mut() {
        *x -= m;
    }
}
