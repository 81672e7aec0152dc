//! Periodic unit cell, the ε-tiled domain and the index maps that attach two
//! trace unknowns to every membrane facet.
//!
//! The inclusion is the axis-aligned cube `(a, 1-a)^N`. With `m` grid cells
//! per axis and `m·a` integral, every membrane facet coincides with a grid
//! face, so the discrete membrane is exact and the measures below are the
//! analytic ones.

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest resolution searched when suggesting an aligned one.
const MAX_RESOLUTION_SEARCH: usize = 1 << 14;

/// Default memory budget for a tiled domain, in megabytes.
pub const DEFAULT_BUDGET_MB: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Intracellular region `E_int`.
    Inner,
    /// Extracellular region `E_out`.
    Outer,
}

/// A membrane facet of the unit cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFacet {
    /// Local index of the grid cell on the inner side.
    pub inner: usize,
    /// Local index of the grid cell on the outer side.
    pub outer: usize,
    pub axis: usize,
    /// +1 when the outer cell sits in the positive `axis` direction.
    pub orientation: f64,
    /// Facet midpoint in cell coordinates `y ∈ Y`.
    pub midpoint: [f64; 2],
}

impl CellFacet {
    /// Unit normal pointing into `E_out`.
    pub fn normal(&self) -> [f64; 2] {
        let mut n = [0.0; 2];
        n[self.axis] = self.orientation;
        n
    }
}

/// A face between two grid cells of the same phase inside the periodic cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellFace {
    /// Cell on the negative side along `axis`.
    pub minus: usize,
    /// Cell on the positive side (wrapping periodically).
    pub plus: usize,
    pub axis: usize,
}

#[derive(Debug, Clone)]
pub struct CellGeometry {
    dim: usize,
    margin: f64,
    resolution: usize,
    margin_cells: usize,
    phases: Vec<Phase>,
    facets: Vec<CellFacet>,
    faces: Vec<CellFace>,
}

fn check_dimension(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::Geometry(format!(
            "dimension {dim} unsupported; use 2 (or 1 for diagnostics)"
        )))
    }
}

fn aligned(margin: f64, m: usize) -> Option<usize> {
    let x = margin * m as f64;
    let k = x.round();
    ((x - k).abs() <= 1e-9 * m as f64 && k >= 1.0).then_some(k as usize)
}

/// Multi-index helpers for an `n^dim` lexicographic grid (first axis fastest).
pub(crate) fn unravel(mut idx: usize, n: usize, dim: usize) -> [usize; 2] {
    let mut out = [0; 2];
    for o in out.iter_mut().take(dim) {
        *o = idx % n;
        idx /= n;
    }
    out
}

pub(crate) fn ravel(ix: [usize; 2], n: usize, dim: usize) -> usize {
    (0..dim).rev().fold(0, |acc, d| acc * n + ix[d])
}

impl CellGeometry {
    /// `a` is the gap between the inclusion and the cell boundary, `m` the
    /// number of grid cells per axis.
    pub fn new(dim: usize, a: f64, m: usize) -> Result<Self> {
        check_dimension(dim)?;
        if !(a > 0.0 && a < 0.5) {
            return Err(Error::param("inclusion_margin", format!("{a} outside (0, 0.5)")));
        }
        if m == 0 {
            return Err(Error::param("cell_resolution", "must be positive"));
        }
        let Some(margin_cells) = aligned(a, m) else {
            let smallest = (1..=MAX_RESOLUTION_SEARCH).find(|&k| aligned(a, k).is_some());
            let next = (m..=MAX_RESOLUTION_SEARCH.max(m)).find(|&k| aligned(a, k).is_some());
            return Err(Error::MisalignedResolution {
                margin: a,
                resolution: m,
                smallest: smallest.unwrap_or(0),
                next: next.unwrap_or(0),
            });
        };
        if 2 * margin_cells >= m {
            return Err(Error::Geometry(format!(
                "margin {a} leaves no inclusion cells at resolution {m}"
            )));
        }

        let ncells = m.pow(dim as u32);
        let inside = |i: usize| i >= margin_cells && i < m - margin_cells;
        let phases: Vec<Phase> = (0..ncells)
            .map(|c| {
                let ix = unravel(c, m, dim);
                if ix[..dim].iter().all(|&i| inside(i)) {
                    Phase::Inner
                } else {
                    Phase::Outer
                }
            })
            .collect();

        let h = 1.0 / m as f64;
        let mut facets = Vec::new();
        let mut faces = Vec::new();
        for axis in 0..dim {
            for c in 0..ncells {
                let ix = unravel(c, m, dim);
                let mut jx = ix;
                jx[axis] = (ix[axis] + 1) % m;
                let n = ravel(jx, m, dim);
                match (phases[c], phases[n]) {
                    (Phase::Inner, Phase::Outer) | (Phase::Outer, Phase::Inner) => {
                        let (inner, outer, orientation) = if phases[c] == Phase::Inner {
                            (c, n, 1.0)
                        } else {
                            (n, c, -1.0)
                        };
                        let mut mid = [0.0; 2];
                        for d in 0..dim {
                            mid[d] = (ix[d] as f64 + 0.5) * h;
                        }
                        mid[axis] = (ix[axis] + 1) as f64 * h;
                        facets.push(CellFacet {
                            inner,
                            outer,
                            axis,
                            orientation,
                            midpoint: mid,
                        });
                    }
                    _ => faces.push(CellFace {
                        minus: c,
                        plus: n,
                        axis,
                    }),
                }
            }
        }

        Ok(CellGeometry {
            dim,
            margin: a,
            resolution: m,
            margin_cells,
            phases,
            facets,
            faces,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn margin_cells(&self) -> usize {
        self.margin_cells
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn num_cells(&self) -> usize {
        self.phases.len()
    }

    pub fn phase(&self, local: usize) -> Phase {
        self.phases[local]
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn facets(&self) -> &[CellFacet] {
        &self.facets
    }

    /// Same-phase faces of the periodic cell, including the wrap-around ones.
    pub fn periodic_faces(&self) -> &[CellFace] {
        &self.faces
    }

    pub fn cell_center(&self, local: usize) -> [f64; 2] {
        let ix = unravel(local, self.resolution, self.dim);
        let h = self.spacing();
        let mut c = [0.0; 2];
        for d in 0..self.dim {
            c[d] = (ix[d] as f64 + 0.5) * h;
        }
        c
    }

    /// Measure of one facet (`h^{N-1}`).
    pub fn facet_measure(&self) -> f64 {
        self.spacing().powi(self.dim as i32 - 1)
    }

    /// Volume of one grid cell (`h^N`).
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn measure_inner(&self) -> f64 {
        (1.0 - 2.0 * self.margin).powi(self.dim as i32)
    }

    pub fn measure_outer(&self) -> f64 {
        1.0 - self.measure_inner()
    }

    pub fn measure_membrane(&self) -> f64 {
        2.0 * self.dim as f64 * (1.0 - 2.0 * self.margin).powi(self.dim as i32 - 1)
    }

    pub fn is_diagnostic(&self) -> bool {
        self.dim == 1
    }
}

/// Piecewise-constant conductivity of the two phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conductivity {
    pub inner: f64,
    pub outer: f64,
}

impl Conductivity {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && inner.is_finite()) {
            return Err(Error::param("sigma_int", format!("{inner} must be positive")));
        }
        if !(outer > 0.0 && outer.is_finite()) {
            return Err(Error::param("sigma_out", format!("{outer} must be positive")));
        }
        Ok(Conductivity { inner, outer })
    }

    pub fn of(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Inner => self.inner,
            Phase::Outer => self.outer,
        }
    }

    /// `|E_int| σ_int + |E_out| σ_out`
    pub fn mean(&self, cell: &CellGeometry) -> f64 {
        cell.measure_inner() * self.inner + cell.measure_outer() * self.outer
    }

    /// Series conductance density across a membrane facet between two
    /// half-cells of width `h/2`.
    pub(crate) fn membrane_conductance(&self, h: f64) -> f64 {
        2.0 * self.inner * self.outer / (h * (self.inner + self.outer))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Conductivity {
            inner: self.inner * c,
            outer: self.outer * c,
        }
    }
}

/// Convenience wrapper matching the operation name used by the CLI.
pub fn mean_conductivity(cell: &CellGeometry, sigma_int: f64, sigma_out: f64) -> Result<f64> {
    Ok(Conductivity::new(sigma_int, sigma_out)?.mean(cell))
}

pub fn build_cell_geometry(a: f64, m: usize) -> Result<CellGeometry> {
    CellGeometry::new(2, a, m)
}

/// Membrane facet of the tiled domain with its pair of trace unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembraneFacet {
    /// Global grid cell on the `Ω_int` side.
    pub inner: usize,
    /// Global grid cell on the `Ω_out` side.
    pub outer: usize,
    pub axis: usize,
    /// Sign of the normal component along `axis`; ν points into `Ω_out`.
    pub orientation: f64,
    pub midpoint: [f64; 2],
    /// Position of the midpoint in the cell variable `y = x/ε mod 1`.
    pub local: [f64; 2],
    /// Index of the ε-cell copy the facet belongs to.
    pub cell_copy: usize,
    /// Index of the corresponding facet of the unit cell.
    pub cell_facet: usize,
}

impl MembraneFacet {
    pub fn normal(&self) -> [f64; 2] {
        let mut n = [0.0; 2];
        n[self.axis] = self.orientation;
        n
    }
}

/// Face of the global grid on `∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub axis: usize,
    /// Outward normal sign along `axis`.
    pub outward: f64,
    pub midpoint: [f64; 2],
}

/// Face between two same-phase grid cells of the tiled domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorFace {
    pub minus: usize,
    pub plus: usize,
    pub axis: usize,
}

#[derive(Debug, Clone)]
pub struct EpsilonDomain {
    cell: CellGeometry,
    epsilon: f64,
    copies_per_axis: usize,
    n_axis: usize,
    phases: Vec<Phase>,
    facets: Vec<MembraneFacet>,
    boundary: Vec<BoundaryFace>,
    faces: Vec<InteriorFace>,
}

/// Rough working-set estimate for a micro solve: banded factor of the bulk
/// operator plus the dense membrane Schur complement.
pub fn estimated_megabytes(n_bulk: usize, bandwidth: usize, n_facets: usize) -> f64 {
    let floats = n_bulk * (bandwidth + 1) + n_facets * n_facets + 8 * (n_bulk + n_facets);
    floats as f64 * 8.0 / (1024.0 * 1024.0)
}

impl EpsilonDomain {
    pub fn new(cell: &CellGeometry, epsilon: f64, budget_mb: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::param("epsilon", format!("{epsilon} outside (0, 1]")));
        }
        let inv = 1.0 / epsilon;
        let copies = inv.round();
        if (inv - copies).abs() > 1e-9 * inv || copies < 1.0 {
            return Err(Error::param(
                "epsilon",
                format!("1/epsilon = {inv} is not a positive integer"),
            ));
        }
        let copies = copies as usize;
        let dim = cell.dim();
        let m = cell.resolution();
        let n_axis = copies * m;
        let n_bulk = n_axis.pow(dim as u32);
        let n_facets = cell.facets().len() * copies.pow(dim as u32);
        let bw = if dim == 1 { 1 } else { n_axis };
        let mb = estimated_megabytes(n_bulk, bw, n_facets);
        if mb > budget_mb {
            return Err(Error::BudgetExceeded {
                unknowns: n_bulk + 3 * n_facets,
                estimated_mb: mb,
                budget_mb,
            });
        }

        let h = epsilon / m as f64;
        let phases: Vec<Phase> = (0..n_bulk)
            .map(|g| {
                let ix = unravel(g, n_axis, dim);
                let mut lx = [0; 2];
                for d in 0..dim {
                    lx[d] = ix[d] % m;
                }
                cell.phase(ravel(lx, m, dim))
            })
            .collect();

        // Facets are emitted copy by copy, in unit-cell facet order, so that
        // facet `k` of copy `c` sits at index `c * nf_cell + k`.
        let ncopies = copies.pow(dim as u32);
        let mut facets = Vec::with_capacity(n_facets);
        for copy in 0..ncopies {
            let cx = unravel(copy, copies, dim);
            let to_global = |local: usize| {
                let lx = unravel(local, m, dim);
                let mut gx = [0; 2];
                for d in 0..dim {
                    gx[d] = cx[d] * m + lx[d];
                }
                ravel(gx, n_axis, dim)
            };
            for (k, f) in cell.facets().iter().enumerate() {
                let mut mid = [0.0; 2];
                for d in 0..dim {
                    mid[d] = (cx[d] as f64 + f.midpoint[d]) * epsilon;
                }
                facets.push(MembraneFacet {
                    inner: to_global(f.inner),
                    outer: to_global(f.outer),
                    axis: f.axis,
                    orientation: f.orientation,
                    midpoint: mid,
                    local: f.midpoint,
                    cell_copy: copy,
                    cell_facet: k,
                });
            }
        }

        let mut boundary = Vec::new();
        let mut faces = Vec::new();
        for axis in 0..dim {
            for g in 0..n_bulk {
                let ix = unravel(g, n_axis, dim);
                let mut center = [0.0; 2];
                for d in 0..dim {
                    center[d] = (ix[d] as f64 + 0.5) * h;
                }
                if ix[axis] == 0 {
                    let mut mid = center;
                    mid[axis] = 0.0;
                    boundary.push(BoundaryFace {
                        cell: g,
                        axis,
                        outward: -1.0,
                        midpoint: mid,
                    });
                }
                if ix[axis] + 1 == n_axis {
                    let mut mid = center;
                    mid[axis] = 1.0;
                    boundary.push(BoundaryFace {
                        cell: g,
                        axis,
                        outward: 1.0,
                        midpoint: mid,
                    });
                } else {
                    let mut jx = ix;
                    jx[axis] += 1;
                    let n = ravel(jx, n_axis, dim);
                    if phases[g] == phases[n] {
                        faces.push(InteriorFace {
                            minus: g,
                            plus: n,
                            axis,
                        });
                    }
                }
            }
        }

        let dom = EpsilonDomain {
            cell: cell.clone(),
            epsilon,
            copies_per_axis: copies,
            n_axis,
            phases,
            facets,
            boundary,
            faces,
        };
        debug_assert!(dom.boundary.iter().all(|b| dom.phases[b.cell] == Phase::Outer));
        Ok(dom)
    }

    pub fn cell(&self) -> &CellGeometry {
        &self.cell
    }

    pub fn dim(&self) -> usize {
        self.cell.dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn copies_per_axis(&self) -> usize {
        self.copies_per_axis
    }

    pub fn num_copies(&self) -> usize {
        self.copies_per_axis.pow(self.dim() as u32)
    }

    /// Grid cells per axis of the global grid (`m/ε`).
    pub fn points_per_axis(&self) -> usize {
        self.n_axis
    }

    pub fn spacing(&self) -> f64 {
        self.epsilon / self.cell.resolution() as f64
    }

    pub fn num_bulk(&self) -> usize {
        self.phases.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn phase(&self, g: usize) -> Phase {
        self.phases[g]
    }

    pub fn facets(&self) -> &[MembraneFacet] {
        &self.facets
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.faces
    }

    /// Indices of the inner (`u^(1)`) and outer (`u^(2)`) trace unknowns of
    /// facet `k` in the duplicated trace vector.
    pub fn trace_indices(&self, k: usize) -> (usize, usize) {
        (2 * k, 2 * k + 1)
    }

    pub fn cell_center(&self, g: usize) -> [f64; 2] {
        let ix = unravel(g, self.n_axis, self.dim());
        let h = self.spacing();
        let mut c = [0.0; 2];
        for d in 0..self.dim() {
            c[d] = (ix[d] as f64 + 0.5) * h;
        }
        c
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    pub fn facet_measure(&self) -> f64 {
        self.spacing().powi(self.dim() as i32 - 1)
    }

    /// `|Γ^ε|` summed facet by facet.
    pub fn membrane_measure(&self) -> f64 {
        self.facets.len() as f64 * self.facet_measure()
    }

    /// `|Γ| |Ω| / ε` from the analytic cell measure.
    pub fn membrane_measure_analytic(&self) -> f64 {
        self.cell.measure_membrane() / self.epsilon
    }

    /// Distance between the membrane and `∂Ω` (equal to `a ε`).
    pub fn membrane_boundary_distance(&self) -> f64 {
        self.cell.margin() * self.epsilon
    }

    pub fn bandwidth(&self) -> usize {
        if self.dim() == 1 {
            1
        } else {
            self.n_axis
        }
    }

    pub fn summary(&self, conductivity: &Conductivity) -> GeometrySummary {
        let cell = &self.cell;
        GeometrySummary {
            dimension: self.dim(),
            diagnostic_only: cell.is_diagnostic(),
            inclusion_margin: cell.margin(),
            cell_resolution: cell.resolution(),
            epsilon: self.epsilon,
            measure_inner: cell.measure_inner(),
            measure_outer: cell.measure_outer(),
            measure_membrane_cell: cell.measure_membrane(),
            measure_membrane_domain: self.membrane_measure(),
            mean_conductivity: conductivity.mean(cell),
            cell_copies: self.num_copies(),
            bulk_unknowns: self.num_bulk(),
            membrane_facets: self.num_facets(),
            trace_unknowns: 2 * self.num_facets(),
            boundary_gap_constant: cell.margin(),
            estimated_mb: estimated_megabytes(self.num_bulk(), self.bandwidth(), self.num_facets()),
        }
    }
}

pub fn tile_domain(cell: &CellGeometry, epsilon: f64) -> Result<EpsilonDomain> {
    EpsilonDomain::new(cell, epsilon, DEFAULT_BUDGET_MB)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GeometrySummary {
    pub dimension: usize,
    pub diagnostic_only: bool,
    pub inclusion_margin: f64,
    pub cell_resolution: usize,
    pub epsilon: f64,
    pub measure_inner: f64,
    pub measure_outer: f64,
    pub measure_membrane_cell: f64,
    pub measure_membrane_domain: f64,
    pub mean_conductivity: f64,
    pub cell_copies: usize,
    pub bulk_unknowns: usize,
    pub membrane_facets: usize,
    pub trace_unknowns: usize,
    /// The constant γ in `dist(Γ^ε, ∂Ω) ≥ γ ε`; equal to the margin here.
    pub boundary_gap_constant: f64,
    pub estimated_mb: f64,
}
