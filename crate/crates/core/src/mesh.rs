//! Uniform dyadic quadrilateral meshes of the unit square.
//!
//! A mesh at `level` has `2^level` elements per side. Vertices and elements are
//! numbered lexicographically: vertex `(i, j)` has id `j * (n + 1) + i` and
//! element `(i, j)` has id `j * n + i`, where `n = 2^level` and `i` runs along
//! the first coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::sparse::{CsrMatrix, TripletBuilder};

/// Largest supported refinement level (memory guard).
pub const MAX_LEVEL: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructuredQuadMesh {
    level: u32,
    per_side: usize,
}

/// Creates the level-`level` mesh of (0,1)².
pub fn build_mesh(level: u32) -> Result<StructuredQuadMesh> {
    if level > MAX_LEVEL {
        return Err(Error::Capacity(format!(
            "mesh level {level} exceeds the supported maximum {MAX_LEVEL}"
        )));
    }
    Ok(StructuredQuadMesh {
        level,
        per_side: 1 << level,
    })
}

impl StructuredQuadMesh {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Elements per side.
    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn n_elems(&self) -> usize {
        self.per_side * self.per_side
    }

    pub fn n_verts(&self) -> usize {
        (self.per_side + 1) * (self.per_side + 1)
    }

    /// Side length of one element.
    pub fn cell_side(&self) -> f64 {
        1.0 / self.per_side as f64
    }

    /// Element diagonal, the mesh size `H` (or `h`) used throughout.
    pub fn mesh_size(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.cell_side()
    }

    pub fn vertex_id(&self, i: usize, j: usize) -> usize {
        j * (self.per_side + 1) + i
    }

    pub fn vertex_ij(&self, v: usize) -> (usize, usize) {
        (v % (self.per_side + 1), v / (self.per_side + 1))
    }

    pub fn vertex_coords(&self, v: usize) -> (f64, f64) {
        let (i, j) = self.vertex_ij(v);
        let s = self.cell_side();
        (i as f64 * s, j as f64 * s)
    }

    pub fn elem_id(&self, i: usize, j: usize) -> usize {
        j * self.per_side + i
    }

    pub fn elem_ij(&self, e: usize) -> (usize, usize) {
        (e % self.per_side, e / self.per_side)
    }

    /// Corner vertices in the order SW, SE, NE, NW.
    pub fn elem_vertices(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.elem_ij(e);
        [
            self.vertex_id(i, j),
            self.vertex_id(i + 1, j),
            self.vertex_id(i + 1, j + 1),
            self.vertex_id(i, j + 1),
        ]
    }

    /// Lower-left corner of an element.
    pub fn elem_origin(&self, e: usize) -> (f64, f64) {
        let (i, j) = self.elem_ij(e);
        let s = self.cell_side();
        (i as f64 * s, j as f64 * s)
    }

    pub fn elem_midpoint(&self, e: usize) -> (f64, f64) {
        let (x, y) = self.elem_origin(e);
        let h = 0.5 * self.cell_side();
        (x + h, y + h)
    }

    /// Number of elements containing vertex `v`.
    pub fn vertex_valence(&self, v: usize) -> usize {
        let (i, j) = self.vertex_ij(v);
        let n = self.per_side;
        let cx = if i == 0 || i == n { 1 } else { 2 };
        let cy = if j == 0 || j == n { 1 } else { 2 };
        cx * cy
    }

    /// Refinement ratio `2^(fine.level - self.level)`.
    pub fn ratio_to(&self, fine: &StructuredQuadMesh) -> Result<usize> {
        if fine.level < self.level {
            return Err(Error::Argument(format!(
                "mesh level {} does not refine level {}",
                fine.level, self.level
            )));
        }
        Ok(1 << (fine.level - self.level))
    }

    /// Fine elements covering the coarse element `coarse_elem`, in lexicographic order.
    pub fn fine_elems_in(&self, fine: &StructuredQuadMesh, coarse_elem: usize) -> Vec<usize> {
        let r = fine.per_side / self.per_side;
        let (ci, cj) = self.elem_ij(coarse_elem);
        let mut out = Vec::with_capacity(r * r);
        for j in cj * r..(cj + 1) * r {
            for i in ci * r..(ci + 1) * r {
                out.push(fine.elem_id(i, j));
            }
        }
        out
    }

    /// Coarse element containing fine element `fine_elem`.
    pub fn parent_of(&self, fine: &StructuredQuadMesh, fine_elem: usize) -> usize {
        let r = fine.per_side / self.per_side;
        let (i, j) = fine.elem_ij(fine_elem);
        self.elem_id(i / r, j / r)
    }
}

/// Dirichlet part Γ of the boundary; the remainder of ∂Ω is homogeneous Neumann.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySpec {
    /// Γ = ∂Ω.
    FullBoundary,
    /// Γ = {x ∈ ∂Ω : x₁ = 0}.
    LeftEdge,
}

impl BoundarySpec {
    pub fn is_dirichlet(&self, mesh: &StructuredQuadMesh, v: usize) -> bool {
        let (i, j) = mesh.vertex_ij(v);
        let n = mesh.per_side();
        match self {
            BoundarySpec::FullBoundary => i == 0 || j == 0 || i == n || j == n,
            BoundarySpec::LeftEdge => i == 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoundarySpec::FullBoundary => "full_boundary",
            BoundarySpec::LeftEdge => "left_edge",
        }
    }
}

/// All vertices not on Γ, in increasing vertex id.
pub fn free_vertices(mesh: &StructuredQuadMesh, bc: BoundarySpec) -> Vec<usize> {
    (0..mesh.n_verts())
        .filter(|&v| !bc.is_dirichlet(mesh, v))
        .collect()
}

/// Numbering of the free vertices of a mesh: the unknowns of every assembled system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    free: Vec<usize>,
    index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &StructuredQuadMesh, bc: BoundarySpec) -> Self {
        Self::from_free(mesh.n_verts(), free_vertices(mesh, bc))
    }

    /// Every vertex is a dof (no Dirichlet part).
    pub fn all(mesh: &StructuredQuadMesh) -> Self {
        Self::from_free(mesh.n_verts(), (0..mesh.n_verts()).collect())
    }

    pub(crate) fn from_free(n_verts: usize, free: Vec<usize>) -> Self {
        let mut index = vec![None; n_verts];
        for (k, &v) in free.iter().enumerate() {
            index[v] = Some(k);
        }
        Self { free, index }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn n_verts(&self) -> usize {
        self.index.len()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.index[vertex]
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.free[dof]
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    /// Expands a dof vector to all vertices, with zeros on Γ.
    pub fn expand(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_verts()];
        for (&v, &x) in self.free.iter().zip(values) {
            out[v] = x;
        }
        out
    }

    /// Restricts a vertex vector to the dofs.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| values[v]).collect()
    }
}

/// Element patch N^ℓ(T): `T` extended by `layers` rings of vertex-adjacent elements.
///
/// On a structured mesh the patch is the rectangle of elements
/// `[i0, i1) × [j0, j1)` in element coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub center_elem: usize,
    pub layers: usize,
    pub elems: Vec<usize>,
    i_range: (usize, usize),
    j_range: (usize, usize),
}

pub fn element_patch(mesh: &StructuredQuadMesh, elem: usize, layers: usize) -> Patch {
    let (i, j) = mesh.elem_ij(elem);
    let n = mesh.per_side();
    let i_range = (i.saturating_sub(layers), (i + layers + 1).min(n));
    let j_range = (j.saturating_sub(layers), (j + layers + 1).min(n));
    let mut elems = Vec::with_capacity((i_range.1 - i_range.0) * (j_range.1 - j_range.0));
    for jj in j_range.0..j_range.1 {
        for ii in i_range.0..i_range.1 {
            elems.push(mesh.elem_id(ii, jj));
        }
    }
    Patch {
        center_elem: elem,
        layers,
        elems,
        i_range,
        j_range,
    }
}

impl Patch {
    /// Half-open element index ranges `([i0, i1), [j0, j1))`.
    pub fn element_ranges(&self) -> ((usize, usize), (usize, usize)) {
        (self.i_range, self.j_range)
    }

    pub fn contains_elem(&self, mesh: &StructuredQuadMesh, e: usize) -> bool {
        let (i, j) = mesh.elem_ij(e);
        (self.i_range.0..self.i_range.1).contains(&i) && (self.j_range.0..self.j_range.1).contains(&j)
    }

    /// Vertices of the patch elements (the closed patch), increasing id.
    pub fn vertices(&self, mesh: &StructuredQuadMesh) -> Vec<usize> {
        let mut out = Vec::new();
        for j in self.j_range.0..=self.j_range.1 {
            for i in self.i_range.0..=self.i_range.1 {
                out.push(mesh.vertex_id(i, j));
            }
        }
        out
    }

    /// Fine elements inside the patch, increasing id.
    pub fn fine_elems(&self, coarse: &StructuredQuadMesh, fine: &StructuredQuadMesh) -> Vec<usize> {
        let r = fine.per_side() / coarse.per_side();
        let mut out = Vec::new();
        for j in self.j_range.0 * r..self.j_range.1 * r {
            for i in self.i_range.0 * r..self.i_range.1 * r {
                out.push(fine.elem_id(i, j));
            }
        }
        out
    }

    /// Fine vertices on which a function of W_h(N^ℓ(T)) may be nonzero: vertices
    /// of the closed patch that are neither on the part of the patch boundary
    /// interior to Ω nor on Γ. Increasing vertex id.
    pub fn interior_fine_vertices(
        &self,
        coarse: &StructuredQuadMesh,
        fine: &StructuredQuadMesh,
        bc: BoundarySpec,
    ) -> Vec<usize> {
        let n = coarse.per_side();
        let r = fine.per_side() / n;
        let lo = |a: usize| if a == 0 { 0 } else { a * r + 1 };
        let hi = |b: usize| if b == n { b * r } else { b * r - 1 };
        let (i_lo, i_hi) = (lo(self.i_range.0), hi(self.i_range.1));
        let (j_lo, j_hi) = (lo(self.j_range.0), hi(self.j_range.1));
        let mut out = Vec::new();
        if i_lo > i_hi || j_lo > j_hi {
            return out;
        }
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                let v = fine.vertex_id(i, j);
                if !bc.is_dirichlet(fine, v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

/// Nodal interpolation of coarse Q1 functions onto the fine mesh, over all vertices.
///
/// Row `v` holds the values of the coarse hat functions at fine vertex `v`.
pub fn prolongation_matrix(coarse: &StructuredQuadMesh, fine: &StructuredQuadMesh) -> Result<CsrMatrix> {
    let r = coarse.ratio_to(fine)?;
    let mut b = TripletBuilder::new(fine.n_verts(), coarse.n_verts());
    let nc = coarse.per_side();
    for v in 0..fine.n_verts() {
        let (fi, fj) = fine.vertex_ij(v);
        let (ci, ti) = split_coord(fi, r, nc);
        let (cj, tj) = split_coord(fj, r, nc);
        let wx = [(1.0 - ti, ci), (ti, ci + 1)];
        let wy = [(1.0 - tj, cj), (tj, cj + 1)];
        for &(wyv, jj) in &wy {
            for &(wxv, ii) in &wx {
                let w = wxv * wyv;
                if w != 0.0 {
                    b.push(v, coarse.vertex_id(ii, jj), w);
                }
            }
        }
    }
    Ok(b.build())
}

/// Splits a fine vertex coordinate into (coarse cell index, local fraction).
fn split_coord(f: usize, r: usize, nc: usize) -> (usize, f64) {
    let c = (f / r).min(nc - 1);
    let t = (f - c * r) as f64 / r as f64;
    (c, t)
}
