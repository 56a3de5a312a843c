//! Q1 assembly on structured meshes.
//!
//! The coefficient is constant per element, so stiffness and mass integrals are
//! evaluated exactly from the reference element matrices. Loads use 2×2 Gauss.

use super::sparse::{CsrMatrix, TripletBuilder};
use crate::error::{Error, Result};
use crate::mesh::{DofMap, StructuredQuadMesh};

/// ∫ ∇φ_a·∇φ_b over a square element (independent of its size in 2D).
/// Corner order SW, SE, NE, NW.
pub const REF_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// ∫ φ_a φ_b over the unit square; scale by side².
pub const REF_MASS: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

fn check_coeff(mesh: &StructuredQuadMesh, coeff: &[f64]) -> Result<()> {
    if coeff.len() != mesh.n_elems() {
        return Err(Error::Argument(format!(
            "coefficient has {} values, mesh has {} elements",
            coeff.len(),
            mesh.n_elems()
        )));
    }
    Ok(())
}

fn check_dofs(mesh: &StructuredQuadMesh, dofs: &DofMap) -> Result<()> {
    if dofs.n_verts() != mesh.n_verts() {
        return Err(Error::Argument("dof map belongs to a different mesh".into()));
    }
    Ok(())
}

fn scatter(
    b: &mut TripletBuilder,
    mesh: &StructuredQuadMesh,
    dofs: &DofMap,
    e: usize,
    scale: f64,
    local: &[[f64; 4]; 4],
) {
    let verts = mesh.elem_vertices(e);
    let ids = verts.map(|v| dofs.dof(v));
    for a in 0..4 {
        let Some(ia) = ids[a] else { continue };
        for c in 0..4 {
            if let Some(ic) = ids[c] {
                b.push(ia, ic, scale * local[a][c]);
            }
        }
    }
}

/// Stiffness of `a(u,v) = ∫ A ∇u·∇v` restricted to the given elements.
pub fn assemble_stiffness_on<I>(mesh: &StructuredQuadMesh, coeff: &[f64], dofs: &DofMap, elems: I) -> Result<CsrMatrix>
where
    I: IntoIterator<Item = usize>,
{
    check_coeff(mesh, coeff)?;
    check_dofs(mesh, dofs)?;
    let mut b = TripletBuilder::new(dofs.len(), dofs.len());
    for e in elems {
        scatter(&mut b, mesh, dofs, e, coeff[e], &REF_STIFFNESS);
    }
    Ok(b.build())
}

pub fn assemble_stiffness(mesh: &StructuredQuadMesh, coeff: &[f64], dofs: &DofMap) -> Result<CsrMatrix> {
    assemble_stiffness_on(mesh, coeff, dofs, 0..mesh.n_elems())
}

/// Stiffness integrated only over the fine elements inside one coarse element (`a|_T`).
pub fn assemble_element_restricted_stiffness(
    coarse: &StructuredQuadMesh,
    fine: &StructuredQuadMesh,
    coeff: &[f64],
    coarse_elem: usize,
    dofs: &DofMap,
) -> Result<CsrMatrix> {
    coarse.ratio_to(fine)?;
    if coarse_elem >= coarse.n_elems() {
        return Err(Error::Argument(format!("coarse element {coarse_elem} out of range")));
    }
    assemble_stiffness_on(fine, coeff, dofs, coarse.fine_elems_in(fine, coarse_elem))
}

pub fn assemble_mass_on<I>(mesh: &StructuredQuadMesh, dofs: &DofMap, elems: I) -> Result<CsrMatrix>
where
    I: IntoIterator<Item = usize>,
{
    check_dofs(mesh, dofs)?;
    let s2 = mesh.cell_side().powi(2);
    let mut b = TripletBuilder::new(dofs.len(), dofs.len());
    for e in elems {
        scatter(&mut b, mesh, dofs, e, s2, &REF_MASS);
    }
    Ok(b.build())
}

/// Consistent Q1 mass matrix.
pub fn assemble_mass(mesh: &StructuredQuadMesh, dofs: &DofMap) -> Result<CsrMatrix> {
    assemble_mass_on(mesh, dofs, 0..mesh.n_elems())
}

/// Row-sum lumped mass matrix.
pub fn lump(mass: &CsrMatrix) -> CsrMatrix {
    CsrMatrix::from_diagonal(&mass.row_sums())
}

/// `(f(·, t), φ_i)` for every dof, 2×2 Gauss quadrature per element.
pub fn assemble_load<F>(mesh: &StructuredQuadMesh, dofs: &DofMap, f: F, t: f64) -> Vec<f64>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let s = mesh.cell_side();
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let w = 0.25 * s * s;
    let mut out = vec![0.0; dofs.len()];
    for e in 0..mesh.n_elems() {
        let (x0, y0) = mesh.elem_origin(e);
        let ids = mesh.elem_vertices(e).map(|v| dofs.dof(v));
        if ids.iter().all(Option::is_none) {
            continue;
        }
        for &py in &pts {
            for &px in &pts {
                let fv = f(x0 + px * s, y0 + py * s, t) * w;
                if fv == 0.0 {
                    continue;
                }
                let phi = [(1.0 - px) * (1.0 - py), px * (1.0 - py), px * py, (1.0 - px) * py];
                for a in 0..4 {
                    if let Some(i) = ids[a] {
                        out[i] += fv * phi[a];
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::solver::factor_spd;
    use crate::fem::sparse::{norm2, norm_inf};
    use crate::mesh::{build_mesh, BoundarySpec};

    /// Exact ∫ ∇φ_a·∇φ_b on [0,s]² by 1D factorization: the bilinear hats are
    /// products of 1D hats, so each term is a product of 1D integrals.
    fn stiffness_oracle(s: f64) -> [[f64; 4]; 4] {
        // 1D: ∫ l_a l_b = s/3 (a=b), s/6; ∫ l_a' l_b' = 1/s (a=b), -1/s.
        let m1 = |a: usize, b: usize| if a == b { s / 3.0 } else { s / 6.0 };
        let k1 = |a: usize, b: usize| if a == b { 1.0 / s } else { -1.0 / s };
        let corner = [(0, 0), (1, 0), (1, 1), (0, 1)];
        let mut out = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                let (ax, ay) = corner[a];
                let (bx, by) = corner[b];
                out[a][b] = k1(ax, bx) * m1(ay, by) + m1(ax, bx) * k1(ay, by);
            }
        }
        out
    }

    #[test]
    fn single_element_stiffness_matches_analytic() {
        let mesh = build_mesh(0).unwrap();
        let k = assemble_stiffness(&mesh, &[1.0], &DofMap::all(&mesh)).unwrap().to_dense();
        let oracle = stiffness_oracle(1.0);
        for a in 0..4 {
            for b in 0..4 {
                // vertex ids: SW 0, SE 1, NW 2, NE 3
                let va = mesh.elem_vertices(0)[a];
                let vb = mesh.elem_vertices(0)[b];
                assert!((k[va][vb] - oracle[a][b]).abs() < 1e-15);
                assert!((REF_STIFFNESS[a][b] - stiffness_oracle(0.37)[a][b]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_element_mass_matches_analytic() {
        let s = 0.5;
        let m1 = |a: usize, b: usize| if a == b { s / 3.0 } else { s / 6.0 };
        let corner = [(0, 0), (1, 0), (1, 1), (0, 1)];
        let mesh = build_mesh(1).unwrap();
        let m = assemble_mass_on(&mesh, &DofMap::all(&mesh), [0]).unwrap();
        let verts = mesh.elem_vertices(0);
        for a in 0..4 {
            for b in 0..4 {
                let want = m1(corner[a].0, corner[b].0) * m1(corner[a].1, corner[b].1);
                assert!((m.get(verts[a], verts[b]) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_kernel_linearity_and_symmetry() {
        let mesh = build_mesh(3).unwrap();
        let coeff: Vec<f64> = (0..mesh.n_elems()).map(|e| 1.0 + (e % 7) as f64).collect();
        let dofs = DofMap::all(&mesh);
        let k = assemble_stiffness(&mesh, &coeff, &dofs).unwrap();
        assert!(norm_inf(&k.matvec(&vec![1.0; dofs.len()])) < 1e-13);
        assert!(k.symmetry_defect() <= 1e-14 * k.max_abs());
        let doubled: Vec<f64> = coeff.iter().map(|c| 2.0 * c).collect();
        let k2 = assemble_stiffness(&mesh, &doubled, &dofs).unwrap();
        assert_eq!(k2, k.scaled(2.0));
        assert!(assemble_stiffness(&mesh, &coeff[1..], &dofs).is_err());
    }

    #[test]
    fn restricted_stiffness_is_additive() {
        let coarse = build_mesh(1).unwrap();
        let fine = build_mesh(3).unwrap();
        let coeff: Vec<f64> = (0..fine.n_elems()).map(|e| 0.5 + ((e * 13) % 5) as f64).collect();
        let dofs = DofMap::new(&fine, BoundarySpec::LeftEdge);
        let full = assemble_stiffness(&fine, &coeff, &dofs).unwrap();
        let mut sum = CsrMatrix::zeros(dofs.len(), dofs.len());
        for t in 0..coarse.n_elems() {
            let kt = assemble_element_restricted_stiffness(&coarse, &fine, &coeff, t, &dofs).unwrap();
            sum = sum.linear_combination(1.0, &kt, 1.0);
        }
        assert!(sum.linear_combination(1.0, &full, -1.0).max_abs() < 1e-14);
        // A ≡ 1 with T the whole domain equals the global stiffness.
        let ones = vec![1.0; fine.n_elems()];
        let root = build_mesh(0).unwrap();
        let kt = assemble_element_restricted_stiffness(&root, &fine, &ones, 0, &dofs).unwrap();
        assert_eq!(kt, assemble_stiffness(&fine, &ones, &dofs).unwrap());
        // A function supported outside T gives zero.
        let kt0 = assemble_element_restricted_stiffness(&coarse, &fine, &coeff, 0, &dofs).unwrap();
        let mut v = vec![0.0; fine.n_verts()];
        v[fine.vertex_id(7, 7)] = 1.0;
        assert!(norm2(&kt0.matvec(&dofs.restrict(&v))) == 0.0);
    }

    #[test]
    fn mass_properties() {
        let mesh = build_mesh(4).unwrap();
        let m = assemble_mass(&mesh, &DofMap::all(&mesh)).unwrap();
        let total: f64 = m.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        let dofs = DofMap::new(&mesh, BoundarySpec::FullBoundary);
        let mf = assemble_mass(&mesh, &dofs).unwrap();
        assert!(mf.symmetry_defect() == 0.0);
        let f = factor_spd(&mf, "mass").unwrap();
        let y: Vec<f64> = (0..dofs.len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let x = f.solve(&mf.matvec(&y));
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!(norm_inf(&diff) < 1e-10);
    }

    #[test]
    fn load_vectors() {
        let mesh = build_mesh(3).unwrap();
        let dofs = DofMap::all(&mesh);
        assert!(assemble_load(&mesh, &dofs, |_, _, _| 0.0, 0.0).iter().all(|&x| x == 0.0));
        let ones = assemble_load(&mesh, &dofs, |_, _, _| 1.0, 0.0);
        let s = mesh.cell_side();
        assert!((ones[mesh.vertex_id(3, 3)] - s * s).abs() < 1e-15);
        let ex2 = |x: f64, _y: f64, t: f64| (4.0 * std::f64::consts::PI * x).sin() * (1.0 - t);
        assert!(assemble_load(&mesh, &dofs, ex2, 1.0).iter().all(|&x| x == 0.0));
        // Bilinear integrands are integrated exactly: (f, 1) = ∫ f.
        let total: f64 = assemble_load(&mesh, &dofs, |x, y, _| x * y, 0.0).iter().sum();
        assert!((total - 0.25).abs() < 1e-14);
    }
}
