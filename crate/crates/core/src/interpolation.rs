//! Quasi-interpolation `I_H = E_H ∘ Π_H` from fine to coarse Q1 functions and
//! the kernel constraints that define the fine-scale space `W_h = ker I_H`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::assembly::REF_MASS;
use crate::fem::{CsrMatrix, TripletBuilder};
use crate::mesh::{prolongation_matrix, BoundarySpec, DofMap, Patch, StructuredQuadMesh};

/// Local L² projection onto `Q1(T)`: a `4 × (r+1)²` map from the fine nodal
/// values of the closed element to its corner coefficients. Corners in `mask`
/// (Dirichlet corners) are held at zero and get a zero row.
#[derive(Debug, Clone)]
struct LocalProjection {
    r: usize,
    rows: [Vec<f64>; 4],
}

/// Corner values of the coarse hat functions at local fine vertex `(li, lj)`.
fn corner_weights(li: usize, lj: usize, r: usize) -> [f64; 4] {
    let x = li as f64 / r as f64;
    let y = lj as f64 / r as f64;
    [(1.0 - x) * (1.0 - y), x * (1.0 - y), x * y, (1.0 - x) * y]
}

/// Solves a small dense SPD system by Gaussian elimination without pivoting.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for k in 0..n {
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            let (top, bottom) = b.split_at_mut(i);
            for (x, y) in bottom[0].iter_mut().zip(&top[k]) {
                *x -= f * y;
            }
        }
    }
    for k in (0..n).rev() {
        for i in k + 1..n {
            let f = a[k][i];
            let (top, bottom) = b.split_at_mut(k + 1);
            for (x, y) in top[k].iter_mut().zip(&bottom[i - k - 1]) {
                *x -= f * y;
            }
        }
        let d = a[k][k];
        b[k].iter_mut().for_each(|x| *x /= d);
    }
    b
}

impl LocalProjection {
    fn new(r: usize, mask: u8) -> Self {
        let nl = (r + 1) * (r + 1);
        // moments[i][v] = ∫_T Λ_i φ_v, in units of H² (so h² = 1/r²).
        let mut moments = vec![vec![0.0; nl]; 4];
        let h2 = 1.0 / (r * r) as f64;
        for b in 0..r {
            for a in 0..r {
                let loc = [(a, b), (a + 1, b), (a + 1, b + 1), (a, b + 1)];
                let ids = loc.map(|(i, j)| j * (r + 1) + i);
                let lam = loc.map(|(i, j)| corner_weights(i, j, r));
                for (p, &vp) in ids.iter().enumerate() {
                    for q in 0..4 {
                        let m = h2 * REF_MASS[p][q];
                        for (corner, row) in moments.iter_mut().enumerate() {
                            row[vp] += m * lam[q][corner];
                        }
                    }
                }
            }
        }
        let free: Vec<usize> = (0..4).filter(|&c| mask & (1 << c) == 0).collect();
        let mut rows: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; nl]);
        if !free.is_empty() {
            let gram: Vec<Vec<f64>> = free.iter().map(|&p| free.iter().map(|&q| REF_MASS[p][q]).collect()).collect();
            let rhs: Vec<Vec<f64>> = free.iter().map(|&p| moments[p].clone()).collect();
            for (k, sol) in solve_small(gram, rhs).into_iter().enumerate() {
                rows[free[k]] = sol;
            }
        }
        Self { r, rows }
    }

    fn local_vertices(&self, coarse: &StructuredQuadMesh, fine: &StructuredQuadMesh, t: usize) -> Vec<usize> {
        let (ci, cj) = coarse.elem_ij(t);
        let r = self.r;
        let mut out = Vec::with_capacity((r + 1) * (r + 1));
        for lj in 0..=r {
            for li in 0..=r {
                out.push(fine.vertex_id(ci * r + li, cj * r + lj));
            }
        }
        out
    }
}

fn corner_mask(coarse: &StructuredQuadMesh, bc: BoundarySpec, t: usize) -> u8 {
    coarse
        .elem_vertices(t)
        .iter()
        .enumerate()
        .fold(0, |m, (c, &v)| if bc.is_dirichlet(coarse, v) { m | (1 << c) } else { m })
}

fn projections(
    coarse: &StructuredQuadMesh,
    fine: &StructuredQuadMesh,
    bc: BoundarySpec,
) -> Result<(Vec<u8>, HashMap<u8, LocalProjection>)> {
    let r = coarse.ratio_to(fine)?;
    let masks: Vec<u8> = (0..coarse.n_elems()).map(|t| corner_mask(coarse, bc, t)).collect();
    let mut cache = HashMap::new();
    for &m in &masks {
        cache.entry(m).or_insert_with(|| LocalProjection::new(r, m));
    }
    Ok((masks, cache))
}

/// `Π_H`: element-wise L² projection of a fine function (values on all fine
/// vertices) onto Q1 functions vanishing on Γ. Returns corner coefficients
/// `[SW, SE, NE, NW]` per coarse element.
pub fn piecewise_l2_projection(
    coarse: &StructuredQuadMesh,
    fine: &StructuredQuadMesh,
    bc: BoundarySpec,
    values: &[f64],
) -> Result<Vec<[f64; 4]>> {
    if values.len() != fine.n_verts() {
        return Err(Error::Argument("fine function must have one value per fine vertex".into()));
    }
    let (masks, cache) = projections(coarse, fine, bc)?;
    Ok((0..coarse.n_elems())
        .map(|t| {
            let lp = &cache[&masks[t]];
            let verts = lp.local_vertices(coarse, fine, t);
            std::array::from_fn(|c| lp.rows[c].iter().zip(&verts).map(|(w, &v)| w * values[v]).sum())
        })
        .collect())
}

/// `E_H`: averages discontinuous element corner values into continuous coarse
/// dofs; each free vertex gets the mean over all elements sharing it.
pub fn averaging_operator(coarse: &StructuredQuadMesh, bc: BoundarySpec, corner_values: &[[f64; 4]]) -> Result<Vec<f64>> {
    if corner_values.len() != coarse.n_elems() {
        return Err(Error::Argument("one set of corner values per coarse element expected".into()));
    }
    let dofs = DofMap::new(coarse, bc);
    let mut out = vec![0.0; dofs.len()];
    for (t, vals) in corner_values.iter().enumerate() {
        for (c, &v) in coarse.elem_vertices(t).iter().enumerate() {
            if let Some(d) = dofs.dof(v) {
                out[d] += vals[c] / coarse.vertex_valence(v) as f64;
            }
        }
    }
    Ok(out)
}

/// `I_H` as a matrix from fine free dofs to coarse free dofs, together with
/// the prolongation restricted to free dofs.
#[derive(Debug, Clone)]
pub struct InterpolationOperator {
    coarse: StructuredQuadMesh,
    fine: StructuredQuadMesh,
    bc: BoundarySpec,
    coarse_dofs: DofMap,
    fine_dofs: DofMap,
    matrix: CsrMatrix,
    prolongation: CsrMatrix,
}

pub fn build_ih(coarse: &StructuredQuadMesh, fine: &StructuredQuadMesh, bc: BoundarySpec) -> Result<InterpolationOperator> {
    let (masks, cache) = projections(coarse, fine, bc)?;
    let coarse_dofs = DofMap::new(coarse, bc);
    let fine_dofs = DofMap::new(fine, bc);
    let r = coarse.ratio_to(fine)?;
    let mut b = TripletBuilder::with_capacity(coarse_dofs.len(), fine_dofs.len(), coarse.n_elems() * 4 * (r + 1) * (r + 1));
    for t in 0..coarse.n_elems() {
        let lp = &cache[&masks[t]];
        let verts = lp.local_vertices(coarse, fine, t);
        for (c, &z) in coarse.elem_vertices(t).iter().enumerate() {
            let Some(row) = coarse_dofs.dof(z) else { continue };
            let inv_card = 1.0 / coarse.vertex_valence(z) as f64;
            for (w, &v) in lp.rows[c].iter().zip(&verts) {
                if let Some(col) = fine_dofs.dof(v) {
                    if *w != 0.0 {
                        b.push(row, col, w * inv_card);
                    }
                }
            }
        }
    }
    let matrix = b.build();
    let p_all = prolongation_matrix(coarse, fine)?;
    let rows: Vec<usize> = fine_dofs.free_vertices().to_vec();
    let prolongation = p_all.select(&rows, coarse_dofs.free_vertices());
    Ok(InterpolationOperator {
        coarse: *coarse,
        fine: *fine,
        bc,
        coarse_dofs,
        fine_dofs,
        matrix,
        prolongation,
    })
}

impl InterpolationOperator {
    pub fn coarse(&self) -> &StructuredQuadMesh {
        &self.coarse
    }

    pub fn fine(&self) -> &StructuredQuadMesh {
        &self.fine
    }

    pub fn bc(&self) -> BoundarySpec {
        self.bc
    }

    pub fn coarse_dofs(&self) -> &DofMap {
        &self.coarse_dofs
    }

    pub fn fine_dofs(&self) -> &DofMap {
        &self.fine_dofs
    }

    /// Coarse free × fine free.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Fine free × coarse free nodal interpolation.
    pub fn prolongation(&self) -> &CsrMatrix {
        &self.prolongation
    }

    pub fn apply(&self, fine_values: &[f64]) -> Vec<f64> {
        self.matrix.matvec(fine_values)
    }

    /// `v − P I_H v`, which lies in `W_h` by projectivity.
    pub fn fine_scale_part(&self, fine_values: &[f64]) -> Vec<f64> {
        let back = self.prolongation.matvec(&self.apply(fine_values));
        fine_values.iter().zip(&back).map(|(a, b)| a - b).collect()
    }

    /// A random element of `W_h` (uniform nodal noise with its coarse part removed).
    pub fn random_kernel_vector(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let v: Vec<f64> = (0..self.fine_dofs.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        self.fine_scale_part(&v)
    }

    pub fn random_kernel_vectors(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.random_kernel_vector(&mut rng)).collect()
    }
}

/// Constraint block `C` with `{w : C w = 0} = W_h`, optionally restricted to a patch.
#[derive(Debug, Clone)]
pub struct KernelConstraint {
    pub matrix: CsrMatrix,
    /// Coarse free dofs behind the rows.
    pub coarse_rows: Vec<usize>,
    /// Fine free dofs behind the columns.
    pub fine_cols: Vec<usize>,
}

/// With a patch, columns are the patch-interior fine dofs and rows the free
/// coarse vertices of the patch elements; without one, `C` is `I_H` itself.
pub fn kernel_constraint_matrix(op: &InterpolationOperator, patch: Option<&Patch>) -> Result<KernelConstraint> {
    let Some(patch) = patch else {
        return Ok(KernelConstraint {
            matrix: op.matrix.clone(),
            coarse_rows: (0..op.coarse_dofs.len()).collect(),
            fine_cols: (0..op.fine_dofs.len()).collect(),
        });
    };
    let fine_cols: Vec<usize> = patch
        .interior_fine_vertices(&op.coarse, &op.fine, op.bc)
        .into_iter()
        .filter_map(|v| op.fine_dofs.dof(v))
        .collect();
    if fine_cols.is_empty() {
        return Err(Error::DegenerateConstraint(format!(
            "patch around element {} with {} layers has no interior fine dofs",
            patch.center_elem, patch.layers
        )));
    }
    let coarse_rows: Vec<usize> = patch
        .vertices(&op.coarse)
        .into_iter()
        .filter_map(|v| op.coarse_dofs.dof(v))
        .collect();
    let matrix = op.matrix.select(&coarse_rows, &fine_cols);
    Ok(KernelConstraint {
        matrix,
        coarse_rows,
        fine_cols,
    })
}
