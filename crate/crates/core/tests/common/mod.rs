//! Dense monolithic reference solvers for linear membranes, assembled
//! directly from the geometry and solved by LU factorization.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use tissue::forcing::BoundaryData;
use tissue::geometry::{CellGeometry, Conductivity, EpsilonDomain, Phase};
use tissue::two_scale::MacroMesh;

fn sigma_of(s: &Conductivity, p: Phase) -> f64 {
    match p {
        Phase::Inner => s.inner,
        Phase::Outer => s.outer,
    }
}

fn interface_conductance(s: &Conductivity, h: f64) -> f64 {
    2.0 * s.inner * s.outer / (h * (s.inner + s.outer))
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Backward Euler for the micro problem with `f(s) = κ s`, unknowns
/// `(u, w)` solved together.
pub struct MicroOracle {
    pub n: usize,
    pub nf: usize,
    pub dt: f64,
    pub area: f64,
    pub alpha: f64,
    pub eps: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    boundary: Vec<(usize, f64, [f64; 2])>,
    psi: BoundaryData,
    dim: usize,
}

impl MicroOracle {
    pub fn new(dom: &EpsilonDomain, sigma: &Conductivity, psi: &BoundaryData, alpha: f64, kappa: f64, dt: f64) -> Self {
        let n = dom.num_bulk();
        let nf = dom.num_facets();
        let h = dom.spacing();
        let eps = dom.epsilon();
        let area = h.powi(dom.dim() as i32 - 1);
        let mut a = DMatrix::<f64>::zeros(n + nf, n + nf);
        for f in dom.interior_faces() {
            let t = sigma_of(sigma, dom.phase(f.minus)) * area / h;
            a[(f.minus, f.minus)] += t;
            a[(f.plus, f.plus)] += t;
            a[(f.minus, f.plus)] -= t;
            a[(f.plus, f.minus)] -= t;
        }
        let g = area * interface_conductance(sigma, h);
        for (k, f) in dom.facets().iter().enumerate() {
            let (i, o, r) = (f.inner, f.outer, n + k);
            a[(i, i)] += g;
            a[(i, o)] -= g;
            a[(i, r)] += g;
            a[(o, o)] += g;
            a[(o, i)] -= g;
            a[(o, r)] -= g;
            a[(r, r)] += area * (alpha / (eps * dt) + kappa / eps) + g;
            a[(r, o)] -= g;
            a[(r, i)] += g;
        }
        let mut boundary = Vec::new();
        for b in dom.boundary_faces() {
            let t = sigma.outer * area / (0.5 * h);
            a[(b.cell, b.cell)] += t;
            boundary.push((b.cell, t, b.midpoint));
        }
        MicroOracle {
            n,
            nf,
            dt,
            area,
            alpha,
            eps,
            lu: a.lu(),
            boundary,
            psi: *psi,
            dim: dom.dim(),
        }
    }

    fn rhs(&self, w_old: &[f64], t_new: f64) -> DVector<f64> {
        let mut b = DVector::<f64>::zeros(self.n + self.nf);
        for &(c, t, x) in &self.boundary {
            b[c] += t * self.psi.eval(x, t_new, self.dim);
        }
        let cap = self.area * self.alpha / (self.eps * self.dt);
        for (k, w) in w_old.iter().enumerate() {
            b[self.n + k] = cap * w;
        }
        b
    }

    /// Bulk potential and jump at `t_new`.
    pub fn step(&self, w_old: &[f64], t_new: f64) -> (Vec<f64>, Vec<f64>) {
        let x = self.lu.solve(&self.rhs(w_old, t_new)).expect("oracle matrix is regular");
        (x.rows(0, self.n).iter().copied().collect(), x.rows(self.n, self.nf).iter().copied().collect())
    }

    /// `w^N` after `steps` steps from `w0` at `t = 0`.
    pub fn advance(&self, w0: &[f64], steps: usize) -> Vec<f64> {
        let mut w = w0.to_vec();
        for n in 1..=steps {
            w = self.step(&w, n as f64 * self.dt).1;
        }
        w
    }

    /// Homogeneous one-step map `w^{n+1} = R w^n` (for zero boundary data).
    pub fn step_matrix(&self) -> DMatrix<f64> {
        let cap = self.area * self.alpha / (self.eps * self.dt);
        let mut b = DMatrix::<f64>::zeros(self.n + self.nf, self.nf);
        for k in 0..self.nf {
            b[(self.n + k, k)] = cap;
        }
        let x = self.lu.solve(&b).expect("oracle matrix is regular");
        x.rows(self.n, self.nf).into_owned()
    }

    /// Periodic fixed point of the period map, `(I − Rᴺ) w = c`.
    pub fn periodic_fixed_point(&self, steps: usize) -> Vec<f64> {
        let r = self.step_matrix();
        let zero = vec![0.0; self.nf];
        let c = DVector::from_vec(self.advance(&zero, steps));
        let mut m = DMatrix::<f64>::identity(self.nf, self.nf);
        let mut p = r.clone();
        let mut e = steps;
        while e > 0 {
            if e & 1 == 1 {
                m = &m * &p;
            }
            p = &p * &p;
            e >>= 1;
        }
        let lhs = DMatrix::<f64>::identity(self.nf, self.nf) - m;
        lhs.lu().solve(&c).expect("period map has no unit eigenvalue").iter().copied().collect()
    }

    /// Largest eigenvalue of the one-step map, as a continuous rate.
    pub fn slowest_rate(&self) -> f64 {
        let r = self.step_matrix();
        let sym = (&r + r.transpose()) * 0.5;
        let mu = sym.symmetric_eigen().eigenvalues.max();
        mu.ln() / self.dt
    }

    pub fn lyapunov(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.alpha / self.eps) * self.area * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
    }
}

/// Backward Euler for the two-scale problem with `f(s) = κ s`: interior
/// macro values, per-element correctors with a mean multiplier, and jumps.
pub struct TwoScaleOracle {
    dim: usize,
    nv: usize,
    interior: Vec<Option<usize>>,
    ni: usize,
    elements: Vec<Vec<usize>>,
    measures: Vec<f64>,
    grads: Vec<Vec<[f64; 2]>>,
    vertices: Vec<[f64; 2]>,
    nc: usize,
    nf: usize,
    h: f64,
    hf: f64,
    faces: Vec<(usize, usize, usize, f64)>,
    facets: Vec<(usize, usize, [f64; 2])>,
    gt: f64,
    alpha: f64,
    kappa: f64,
    psi: BoundaryData,
    pub dt: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// One solved level of the oracle.
pub struct TwoScaleLevel {
    /// Macro values at every vertex.
    pub u: Vec<f64>,
    pub correctors: Vec<Vec<f64>>,
    pub w: Vec<f64>,
}

impl TwoScaleOracle {
    pub fn new(
        mesh: &MacroMesh,
        cell: &CellGeometry,
        sigma: &Conductivity,
        psi: &BoundaryData,
        alpha: f64,
        kappa: f64,
        dt: f64,
    ) -> Self {
        let dim = mesh.dim();
        let nv = mesh.num_vertices();
        let mut ni = 0;
        let interior: Vec<Option<usize>> = (0..nv)
            .map(|v| {
                if mesh.is_boundary(v) {
                    None
                } else {
                    ni += 1;
                    Some(ni - 1)
                }
            })
            .collect();
        let vertices: Vec<[f64; 2]> = (0..nv).map(|v| mesh.vertex(v)).collect();
        let elements: Vec<Vec<usize>> = (0..mesh.num_elements()).map(|e| mesh.element(e).to_vec()).collect();
        let mut measures = Vec::new();
        let mut grads = Vec::new();
        for vs in &elements {
            if dim == 1 {
                let l = vertices[vs[1]][0] - vertices[vs[0]][0];
                measures.push(l);
                grads.push(vec![[-1.0 / l, 0.0], [1.0 / l, 0.0]]);
            } else {
                // Solve for the affine hat functions directly.
                let m = DMatrix::from_fn(3, 3, |i, j| if j == 2 { 1.0 } else { vertices[vs[i]][j] });
                let inv = m.clone().try_inverse().expect("nondegenerate triangle");
                measures.push(0.5 * m.determinant().abs());
                grads.push((0..3).map(|a| [inv[(0, a)], inv[(1, a)]]).collect());
            }
        }
        let h = cell.spacing();
        let hf = h.powi(dim as i32 - 1);
        let faces = cell
            .periodic_faces()
            .iter()
            .map(|f| (f.minus, f.plus, f.axis, sigma_of(sigma, cell.phase(f.minus)) * hf / h))
            .collect();
        let facets = cell
            .facets()
            .iter()
            .map(|f| {
                let mut nu = [0.0; 2];
                nu[f.axis] = f.orientation;
                (f.inner, f.outer, nu)
            })
            .collect();
        let mut o = TwoScaleOracle {
            dim,
            nv,
            interior,
            ni,
            elements,
            measures,
            grads,
            vertices,
            nc: cell.num_cells(),
            nf: cell.facets().len(),
            h,
            hf,
            faces,
            facets,
            gt: hf * interface_conductance(sigma, h),
            alpha,
            kappa,
            psi: *psi,
            dt,
            lu: DMatrix::<f64>::zeros(1, 1).lu(),
        };
        let size = o.size();
        let zero = vec![0.0; o.ne() * o.nf];
        let mut a = DMatrix::<f64>::zeros(size, size);
        let mut e = vec![0.0; size];
        for j in 0..size {
            e[j] = 1.0;
            let col = o.residual(&e, &zero, 0.0);
            for i in 0..size {
                a[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        o.lu = a.lu();
        o
    }

    fn ne(&self) -> usize {
        self.elements.len()
    }

    fn block(&self) -> usize {
        self.nc + 1 + self.nf
    }

    fn size(&self) -> usize {
        self.ni + self.ne() * self.block()
    }

    fn macro_values(&self, x: &[f64], s: f64) -> Vec<f64> {
        (0..self.nv)
            .map(|v| match self.interior[v] {
                Some(i) => x[i],
                None => s * self.psi.spatial_part(self.vertices[v], self.dim),
            })
            .collect()
    }

    /// Residual of the monolithic system; `s` is the time factor of `Ψ`.
    fn residual(&self, x: &[f64], w_old: &[f64], s: f64) -> Vec<f64> {
        let mut r = vec![0.0; self.size()];
        let u = self.macro_values(x, s);
        let h = self.h;
        for e in 0..self.ne() {
            let base = self.ni + e * self.block();
            let u1 = &x[base..base + self.nc];
            let lam = x[base + self.nc];
            let w = &x[base + self.nc + 1..base + self.block()];
            let mut g = [0.0; 2];
            for (&v, gr) in self.elements[e].iter().zip(&self.grads[e]) {
                g[0] += u[v] * gr[0];
                g[1] += u[v] * gr[1];
            }
            let area = self.measures[e];
            let mut flux = [0.0; 2];
            for &(mi, pl, axis, t) in &self.faces {
                let q = t * (u1[pl] - u1[mi] + h * g[axis]);
                flux[axis] += h * q;
                r[base + pl] += q;
                r[base + mi] -= q;
            }
            for (k, &(i, o, nu)) in self.facets.iter().enumerate() {
                let q = self.gt * (u1[o] - u1[i] + h * (g[0] * nu[0] + g[1] * nu[1]) - w[k]);
                flux[0] += h * q * nu[0];
                flux[1] += h * q * nu[1];
                r[base + o] += q;
                r[base + i] -= q;
                let wo = w_old[e * self.nf + k];
                r[base + self.nc + 1 + k] =
                    area * self.hf * (self.alpha * (w[k] - wo) / self.dt + self.kappa * w[k]) - area * q;
            }
            let vol = h.powi(self.dim as i32);
            for j in 0..self.nc {
                r[base + j] += lam;
                r[base + self.nc] += vol * u1[j];
            }
            for (&v, gr) in self.elements[e].iter().zip(&self.grads[e]) {
                if let Some(i) = self.interior[v] {
                    r[i] += area * (gr[0] * flux[0] + gr[1] * flux[1]);
                }
            }
        }
        r
    }

    pub fn step(&self, w_old: &[f64], t_new: f64) -> TwoScaleLevel {
        let s = self.psi.time_factor(t_new);
        let zero = vec![0.0; self.size()];
        let b = DVector::from_vec(self.residual(&zero, w_old, s).iter().map(|x| -x).collect());
        let x = self.lu.solve(&b).expect("oracle matrix is regular");
        let x: Vec<f64> = x.iter().copied().collect();
        let u = self.macro_values(&x, s);
        let mut correctors = Vec::new();
        let mut w = Vec::new();
        for e in 0..self.ne() {
            let base = self.ni + e * self.block();
            correctors.push(x[base..base + self.nc].to_vec());
            w.extend_from_slice(&x[base + self.nc + 1..base + self.block()]);
        }
        TwoScaleLevel { u, correctors, w }
    }
}
