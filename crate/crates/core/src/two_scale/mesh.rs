//! P1 finite elements on the unit square (or interval) for the macro field.

use crate::error::{Error, Result};

/// Structured mesh: `M×M` squares cut along the `(0,0)–(1,1)` diagonal in
/// two dimensions, `M` intervals in one.
#[derive(Debug, Clone)]
pub struct MacroMesh {
    dim: usize,
    resolution: usize,
    vertices: Vec<[f64; 2]>,
    /// Vertex indices; in one dimension only the first two are used.
    elements: Vec<[usize; 3]>,
    measures: Vec<f64>,
    /// Gradients of the local hat functions per element.
    gradients: Vec<[[f64; 2]; 3]>,
    on_boundary: Vec<bool>,
    /// Interior numbering of each vertex, `None` on the boundary.
    interior: Vec<Option<usize>>,
    num_interior: usize,
}

impl MacroMesh {
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::param("dimension", format!("{dim} not in {{1, 2}}")));
        }
        if resolution == 0 {
            return Err(Error::param("macro.resolution", "must be positive"));
        }
        let m = resolution;
        let h = 1.0 / m as f64;
        let mut vertices = Vec::new();
        let mut on_boundary = Vec::new();
        let mut elements = Vec::new();
        if dim == 1 {
            for i in 0..=m {
                vertices.push([i as f64 * h, 0.0]);
                on_boundary.push(i == 0 || i == m);
            }
            for i in 0..m {
                elements.push([i, i + 1, usize::MAX]);
            }
        } else {
            let id = |i: usize, j: usize| i + (m + 1) * j;
            for j in 0..=m {
                for i in 0..=m {
                    vertices.push([i as f64 * h, j as f64 * h]);
                    on_boundary.push(i == 0 || j == 0 || i == m || j == m);
                }
            }
            for j in 0..m {
                for i in 0..m {
                    elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                    elements.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                }
            }
        }
        let mut measures = Vec::with_capacity(elements.len());
        let mut gradients = Vec::with_capacity(elements.len());
        for e in &elements {
            if dim == 1 {
                measures.push(h);
                gradients.push([[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]]);
            } else {
                let p = [vertices[e[0]], vertices[e[1]], vertices[e[2]]];
                let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                measures.push(0.5 * det.abs());
                let mut g = [[0.0; 2]; 3];
                for a in 0..3 {
                    let b = p[(a + 1) % 3];
                    let c = p[(a + 2) % 3];
                    g[a] = [(b[1] - c[1]) / det, (c[0] - b[0]) / det];
                }
                gradients.push(g);
            }
        }
        let mut interior = Vec::with_capacity(vertices.len());
        let mut count = 0;
        for &b in &on_boundary {
            if b {
                interior.push(None);
            } else {
                interior.push(Some(count));
                count += 1;
            }
        }
        Ok(MacroMesh {
            dim,
            resolution,
            vertices,
            elements,
            measures,
            gradients,
            on_boundary,
            interior,
            num_interior: count,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_interior(&self) -> usize {
        self.num_interior
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn interior_index(&self, v: usize) -> Option<usize> {
        self.interior[v]
    }

    /// Vertices of element `e` (two in one dimension).
    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.dim + 1]
    }

    pub fn measure(&self, e: usize) -> f64 {
        self.measures[e]
    }

    pub fn basis_gradients(&self, e: usize) -> &[[f64; 2]] {
        &self.gradients[e][..self.dim + 1]
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let vs = self.element(e);
        let mut c = [0.0; 2];
        for &v in vs {
            c[0] += self.vertices[v][0];
            c[1] += self.vertices[v][1];
        }
        let k = vs.len() as f64;
        [c[0] / k, c[1] / k]
    }

    /// Gradient of the P1 function with vertex values `u` on element `e`.
    pub fn gradient(&self, e: usize, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (&v, gr) in self.element(e).iter().zip(self.basis_gradients(e)) {
            g[0] += u[v] * gr[0];
            g[1] += u[v] * gr[1];
        }
        g
    }

    /// Element containing `x` and the barycentric weights of its vertices.
    pub fn locate(&self, x: [f64; 2]) -> (usize, [f64; 3]) {
        let m = self.resolution;
        let h = 1.0 / m as f64;
        let cell = |s: f64| ((s / h).floor().max(0.0) as usize).min(m - 1);
        if self.dim == 1 {
            let i = cell(x[0]);
            let s = (x[0] - i as f64 * h) / h;
            return (i, [1.0 - s, s, 0.0]);
        }
        let (i, j) = (cell(x[0]), cell(x[1]));
        let s = (x[0] - i as f64 * h) / h;
        let r = (x[1] - j as f64 * h) / h;
        let base = 2 * (i + m * j);
        if s >= r {
            // Vertices (i,j), (i+1,j), (i+1,j+1).
            (base, [1.0 - s, s - r, r])
        } else {
            // Vertices (i,j), (i+1,j+1), (i,j+1).
            (base + 1, [1.0 - r, s, r - s])
        }
    }

    pub fn interpolate(&self, u: &[f64], x: [f64; 2]) -> f64 {
        let (e, b) = self.locate(x);
        self.element(e).iter().zip(b).map(|(&v, l)| u[v] * l).sum()
    }

    /// `∫ u²` of a P1 function, exact.
    pub fn l2_squared(&self, u: &[f64]) -> f64 {
        let k = self.dim + 1;
        let denom = ((k) * (k + 1)) as f64;
        let mut s = 0.0;
        for e in 0..self.num_elements() {
            let vs = self.element(e);
            let mut acc = 0.0;
            for a in 0..k {
                for b in 0..k {
                    let w = if a == b { 2.0 } else { 1.0 };
                    acc += w * u[vs[a]] * u[vs[b]];
                }
            }
            s += self.measures[e] * acc / denom;
        }
        s
    }

    /// `∫ |∇u|²` of a P1 function.
    pub fn grad_squared(&self, u: &[f64]) -> f64 {
        (0..self.num_elements())
            .map(|e| {
                let g = self.gradient(e, u);
                self.measures[e] * (g[0] * g[0] + g[1] * g[1])
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measures_sum_to_one() {
        for dim in [1, 2] {
            let m = MacroMesh::new(dim, 3).unwrap();
            let s: f64 = (0..m.num_elements()).map(|e| m.measure(e)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_reproduce_affine_functions() {
        let m = MacroMesh::new(2, 4).unwrap();
        let u: Vec<f64> = (0..m.num_vertices())
            .map(|v| {
                let x = m.vertex(v);
                0.3 + 2.0 * x[0] - 1.5 * x[1]
            })
            .collect();
        for e in 0..m.num_elements() {
            let g = m.gradient(e, &u);
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 1.5).abs() < 1e-12);
        }
        let x = [0.37, 0.81];
        assert!((m.interpolate(&u, x) - (0.3 + 2.0 * 0.37 - 1.5 * 0.81)).abs() < 1e-12);
        assert!((m.l2_squared(&vec![1.0; m.num_vertices()]) - 1.0).abs() < 1e-13);
        assert!((m.grad_squared(&u) - (4.0 + 2.25)).abs() < 1e-12);
    }

    #[test]
    fn interior_count() {
        assert_eq!(MacroMesh::new(2, 4).unwrap().num_interior(), 9);
        assert_eq!(MacroMesh::new(2, 1).unwrap().num_interior(), 0);
        assert_eq!(MacroMesh::new(1, 4).unwrap().num_interior(), 3);
    }

    #[test]
    fn locate_finds_containing_element() {
        let m = MacroMesh::new(2, 3).unwrap();
        for x in [[0.1, 0.05], [0.05, 0.1], [0.99, 0.99], [0.5, 0.2]] {
            let (e, b) = m.locate(x);
            assert!(b.iter().all(|&l| l >= -1e-14));
            let vs = m.element(e);
            let mut y = [0.0; 2];
            for (&v, l) in vs.iter().zip(b) {
                y[0] += l * m.vertex(v)[0];
                y[1] += l * m.vertex(v)[1];
            }
            assert!((y[0] - x[0]).abs() < 1e-14 && (y[1] - x[1]).abs() < 1e-14);
        }
    }
}
