//! Element correctors on patches, the assembled correction operator and the
//! multiscale system matrices built from it.

mod cache;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_mass, assemble_stiffness_on, REF_STIFFNESS};
use crate::fem::solver::{factor_saddle, saddle_residual, SaddlePointSolver};
use crate::fem::sparse::{quadratic_form, CsrMatrix, TripletBuilder};
use crate::fem::FineDiscretization;
use crate::interpolation::{kernel_constraint_matrix, InterpolationOperator};
use crate::mesh::{element_patch, DofMap, Patch};

pub use cache::{cache_key, load_cached, store_cached, CorrectorCache, CACHE_DIR_ENV};

/// A single localized element corrector `q^ℓ_{T,i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementCorrector {
    pub element: usize,
    pub corner: usize,
    pub layers: usize,
    /// Fine free dofs of the patch interior; `values` is indexed alike.
    pub fine_dofs: Vec<usize>,
    pub values: Vec<f64>,
    /// Relative residual of the saddle-point solve.
    pub residual: f64,
}

/// The correctors of one coarse element, sharing the patch dof list.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementCorrectors {
    pub element: usize,
    pub fine_dofs: Vec<usize>,
    /// `None` for corners on Γ.
    pub corners: [Option<Vec<f64>>; 4],
}

/// Factorized corrector problem on one patch.
struct PatchSystem {
    patch: Patch,
    fine_dofs: Vec<usize>,
    local: DofMap,
    k: CsrMatrix,
    c: CsrMatrix,
    solver: SaddlePointSolver,
}

fn patch_system(op: &InterpolationOperator, fine: &FineDiscretization, patch: Patch) -> Result<PatchSystem> {
    let constraint = kernel_constraint_matrix(op, Some(&patch))?;
    let verts: Vec<usize> = constraint.fine_cols.iter().map(|&d| fine.dofs.vertex(d)).collect();
    let local = DofMap::from_free(fine.mesh.n_verts(), verts);
    let k = assemble_stiffness_on(&fine.mesh, &fine.coeff, &local, patch.fine_elems(op.coarse(), &fine.mesh))?;
    let solver = factor_saddle(&k, &constraint.matrix, "patch stiffness")?.ok_or(Error::SingularSaddle {
        element: patch.center_elem,
        layers: patch.layers,
        dofs: k.nrows(),
        constraints: constraint.matrix.nrows(),
    })?;
    Ok(PatchSystem {
        patch,
        fine_dofs: constraint.fine_cols,
        local,
        k,
        c: constraint.matrix,
        solver,
    })
}

/// `a|_T(Λ_{T,i}, φ_k)` for the patch-local dofs `k`.
fn corner_rhs(op: &InterpolationOperator, fine: &FineDiscretization, local: &DofMap, t: usize, corner: usize) -> Vec<f64> {
    let coarse = op.coarse();
    let r = fine.mesh.per_side() / coarse.per_side();
    let (ci, cj) = coarse.elem_ij(t);
    let hat = |v: usize| {
        let (i, j) = fine.mesh.vertex_ij(v);
        let x = (i - ci * r) as f64 / r as f64;
        let y = (j - cj * r) as f64 / r as f64;
        [(1.0 - x) * (1.0 - y), x * (1.0 - y), x * y, (1.0 - x) * y][corner]
    };
    let mut out = vec![0.0; local.len()];
    for e in coarse.fine_elems_in(&fine.mesh, t) {
        let verts = fine.mesh.elem_vertices(e);
        let lam = verts.map(hat);
        for (a, &va) in verts.iter().enumerate() {
            if let Some(k) = local.dof(va) {
                let s: f64 = (0..4).map(|b| REF_STIFFNESS[a][b] * lam[b]).sum();
                out[k] += fine.coeff[e] * s;
            }
        }
    }
    out
}

fn solve_corner(
    op: &InterpolationOperator,
    fine: &FineDiscretization,
    sys: &PatchSystem,
    t: usize,
    corner: usize,
) -> (Vec<f64>, f64) {
    let r = corner_rhs(op, fine, &sys.local, t, corner);
    let g = vec![0.0; sys.c.nrows()];
    let (q, lambda) = sys.solver.solve(&r, &g);
    let res = saddle_residual(&sys.k, &sys.c, &q, &lambda, &r, &g);
    (q, res)
}

fn free_corners(op: &InterpolationOperator, t: usize) -> [bool; 4] {
    op.coarse()
        .elem_vertices(t)
        .map(|z| op.coarse_dofs().dof(z).is_some())
}

/// Solves `a(q, w) = a|_T(Λ_{T,i}, w)` for all `w ∈ W_h(N^ℓ(T))`.
pub fn solve_element_corrector(
    op: &InterpolationOperator,
    fine: &FineDiscretization,
    element: usize,
    corner: usize,
    layers: usize,
) -> Result<ElementCorrector> {
    if element >= op.coarse().n_elems() || corner >= 4 {
        return Err(Error::Argument(format!("no corner {corner} on coarse element {element}")));
    }
    let sys = patch_system(op, fine, element_patch(op.coarse(), element, layers))?;
    let (values, residual) = solve_corner(op, fine, &sys, element, corner);
    Ok(ElementCorrector {
        element,
        corner,
        layers,
        fine_dofs: sys.fine_dofs,
        values,
        residual,
    })
}

/// All element correctors for one `(coarse, fine, coefficient, Γ, ℓ)` and the
/// assembled correction matrix `Q` (fine free × coarse free).
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub coarse_level: u32,
    pub fine_level: u32,
    pub layers: usize,
    pub elements: Vec<ElementCorrectors>,
    pub q: CsrMatrix,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectorStats {
    pub elements: usize,
    pub correctors: usize,
    pub distinct_patches: usize,
    pub max_residual: f64,
}

pub fn build_corrector_set(op: &InterpolationOperator, fine: &FineDiscretization, layers: usize) -> Result<CorrectorSet> {
    Ok(build_corrector_set_with_stats(op, fine, layers)?.0)
}

pub fn build_corrector_set_with_stats(
    op: &InterpolationOperator,
    fine: &FineDiscretization,
    layers: usize,
) -> Result<(CorrectorSet, CorrectorStats)> {
    if op.fine() != &fine.mesh || op.bc() != fine.bc {
        return Err(Error::Argument("interpolation operator and fine discretization disagree".into()));
    }
    let coarse = op.coarse();
    // Elements whose clipped patches coincide share one factorization.
    let mut groups: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for t in 0..coarse.n_elems() {
        if free_corners(op, t).iter().any(|&f| f) {
            groups.entry(element_patch(coarse, t, layers).element_ranges()).or_default().push(t);
        }
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let distinct_patches = groups.len();
    let solved: Vec<Result<Vec<(ElementCorrectors, f64)>>> = groups
        .par_iter()
        .map(|elems| {
            let sys = patch_system(op, fine, element_patch(coarse, elems[0], layers))?;
            Ok(elems
                .iter()
                .map(|&t| {
                    let mut worst: f64 = 0.0;
                    let free = free_corners(op, t);
                    let corners = std::array::from_fn(|c| {
                        free[c].then(|| {
                            let (q, res) = solve_corner(op, fine, &sys, t, c);
                            worst = worst.max(res);
                            q
                        })
                    });
                    let ec = ElementCorrectors {
                        element: t,
                        fine_dofs: sys.fine_dofs.clone(),
                        corners,
                    };
                    debug_assert_eq!(sys.patch.layers, layers);
                    (ec, worst)
                })
                .collect())
        })
        .collect();
    let mut elements = Vec::with_capacity(coarse.n_elems());
    let mut max_residual: f64 = 0.0;
    for group in solved {
        for (ec, res) in group? {
            max_residual = max_residual.max(res);
            elements.push(ec);
        }
    }
    elements.sort_by_key(|e| e.element);
    let set = assemble_set(op, fine.n_dofs(), layers, elements, max_residual);
    let stats = CorrectorStats {
        elements: set.elements.len(),
        correctors: set.elements.iter().map(|e| e.corners.iter().flatten().count()).sum(),
        distinct_patches,
        max_residual,
    };
    Ok((set, stats))
}

fn assemble_set(
    op: &InterpolationOperator,
    n_fine: usize,
    layers: usize,
    elements: Vec<ElementCorrectors>,
    max_residual: f64,
) -> CorrectorSet {
    let coarse = op.coarse();
    let nnz = elements
        .iter()
        .map(|e| e.fine_dofs.len() * e.corners.iter().flatten().count())
        .sum();
    let mut b = TripletBuilder::with_capacity(n_fine, op.coarse_dofs().len(), nnz);
    for ec in &elements {
        let verts = coarse.elem_vertices(ec.element);
        for (c, vals) in ec.corners.iter().enumerate() {
            let (Some(vals), Some(z)) = (vals, op.coarse_dofs().dof(verts[c])) else { continue };
            for (&d, &v) in ec.fine_dofs.iter().zip(vals) {
                b.push(d, z, v);
            }
        }
    }
    CorrectorSet {
        coarse_level: coarse.level(),
        fine_level: op.fine().level(),
        layers,
        elements,
        q: b.build(),
        max_residual,
    }
}

impl CorrectorSet {
    /// `q^ℓ_{T,i}` expanded to all fine free dofs, if the corner is free.
    pub fn corrector_values(&self, element: usize, corner: usize, n_fine: usize) -> Option<Vec<f64>> {
        let ec = self.elements.iter().find(|e| e.element == element)?;
        let vals = ec.corners.get(corner)?.as_ref()?;
        let mut out = vec![0.0; n_fine];
        for (&d, &v) in ec.fine_dofs.iter().zip(vals) {
            out[d] = v;
        }
        Some(out)
    }

    /// `𝒞^ℓ_h v_H` on fine free dofs.
    pub fn apply(&self, coarse_values: &[f64]) -> Vec<f64> {
        self.q.matvec(coarse_values)
    }
}

/// System matrices of a coarse method with basis `B` (coarse free → fine free).
#[derive(Debug, Clone)]
pub struct MultiscaleSystem {
    pub basis: CsrMatrix,
    /// `Bᵀ K_fine B`.
    pub stiffness: CsrMatrix,
    /// `Bᵀ M_fine B`.
    pub mass: CsrMatrix,
    /// Classical coarse Q1 mass matrix.
    pub fem_mass: CsrMatrix,
    pub mesh_size: f64,
}

/// `Bᵀ A B`, symmetrized to remove round-off asymmetry.
pub fn galerkin_product(basis: &CsrMatrix, a: &CsrMatrix) -> CsrMatrix {
    let prod = basis.transpose().matmul(&a.matmul(basis));
    prod.linear_combination(0.5, &prod.transpose(), 0.5)
}

fn system_with_basis(op: &InterpolationOperator, fine: &FineDiscretization, basis: CsrMatrix) -> Result<MultiscaleSystem> {
    Ok(MultiscaleSystem {
        stiffness: galerkin_product(&basis, &fine.stiffness),
        mass: galerkin_product(&basis, &fine.mass),
        fem_mass: assemble_mass(op.coarse(), op.coarse_dofs())?,
        basis,
        mesh_size: op.coarse().mesh_size(),
    })
}

/// LOD system with basis `B = P − Q`.
pub fn build_multiscale_system(
    set: &CorrectorSet,
    op: &InterpolationOperator,
    fine: &FineDiscretization,
) -> Result<MultiscaleSystem> {
    if set.q.nrows() != fine.n_dofs() || set.q.ncols() != op.coarse_dofs().len() {
        return Err(Error::Argument("corrector set does not match the discretization".into()));
    }
    let basis = op.prolongation().linear_combination(1.0, &set.q, -1.0);
    system_with_basis(op, fine, basis)
}

/// Classical coarse Q1 system with the fine-scale coefficient (`B = P`).
pub fn standard_fem_system(op: &InterpolationOperator, fine: &FineDiscretization) -> Result<MultiscaleSystem> {
    system_with_basis(op, fine, op.prolongation().clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub layers: usize,
    /// `max_z ‖∇(𝒞_h − 𝒞^ℓ_h)Λ_z‖ / ‖∇Λ_z‖`.
    pub residual: f64,
}

/// Worst relative gradient norm of the columns of `q_a − q_b` over coarse basis functions.
fn column_residual(op: &InterpolationOperator, fine: &FineDiscretization, q_a: &CsrMatrix, q_b: &CsrMatrix) -> f64 {
    let diff_t = q_a.linear_combination(1.0, q_b, -1.0).transpose();
    let p_t = op.prolongation().transpose();
    let n = fine.n_dofs();
    let mut dense = vec![0.0; n];
    let mut lam = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for z in 0..op.coarse_dofs().len() {
        dense.iter_mut().for_each(|x| *x = 0.0);
        lam.iter_mut().for_each(|x| *x = 0.0);
        let (cols, vals) = diff_t.row(z);
        for (&i, &v) in cols.iter().zip(vals) {
            dense[i] = v;
        }
        let (cols, vals) = p_t.row(z);
        for (&i, &v) in cols.iter().zip(vals) {
            lam[i] = v;
        }
        let num = quadratic_form(&fine.unit_stiffness, &dense).max(0.0).sqrt();
        let den = quadratic_form(&fine.unit_stiffness, &lam).sqrt();
        worst = worst.max(num / den);
    }
    worst
}

/// Localization error of `𝒞^ℓ_h` against the global corrector, for `ℓ = 1..=ell_max`.
pub fn measure_localization_decay(
    op: &InterpolationOperator,
    fine: &FineDiscretization,
    ell_max: usize,
) -> Result<Vec<DecayRow>> {
    let global = build_corrector_set(op, fine, op.coarse().per_side())?;
    (1..=ell_max)
        .map(|layers| {
            let local = build_corrector_set(op, fine, layers)?;
            Ok(DecayRow {
                layers,
                residual: column_residual(op, fine, &global.q, &local.q),
            })
        })
        .collect()
}

/// Same measure for a single pair of layer counts (used to compare ℓ = 0 and ℓ = 1).
pub fn localization_residual(
    op: &InterpolationOperator,
    fine: &FineDiscretization,
    global: &CorrectorSet,
    local: &CorrectorSet,
) -> f64 {
    column_residual(op, fine, &global.q, &local.q)
}

pub(crate) fn reassemble(
    op: &InterpolationOperator,
    n_fine: usize,
    layers: usize,
    elements: Vec<ElementCorrectors>,
    max_residual: f64,
) -> CorrectorSet {
    assemble_set(op, n_fine, layers, elements, max_residual)
}
