//! The fine-grid discretization shared by the reference solver, the corrector
//! problems and the error norm.

use crate::coefficient::{sample_to_mesh, CoefficientField};
use crate::error::{Error, Result};
use crate::mesh::{BoundarySpec, DofMap, StructuredQuadMesh};

use super::assembly::{assemble_mass, assemble_stiffness};
use super::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct FineDiscretization {
    pub mesh: StructuredQuadMesh,
    pub bc: BoundarySpec,
    /// One coefficient value per fine element.
    pub coeff: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub dofs: DofMap,
    /// `a(·,·)` on free dofs.
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    /// Stiffness with `A ≡ 1`, used for H¹ seminorms.
    pub unit_stiffness: CsrMatrix,
}

impl FineDiscretization {
    pub fn new(mesh: &StructuredQuadMesh, bc: BoundarySpec, field: &CoefficientField) -> Result<Self> {
        let coeff = sample_to_mesh(field, mesh)?;
        let mut out = Self::from_values(mesh, bc, coeff)?;
        // Nominal bounds of the field, which may be looser than the sampled extremes.
        out.alpha = field.alpha();
        out.beta = field.beta();
        Ok(out)
    }

    /// Bounds are taken from the values themselves.
    pub fn from_values(mesh: &StructuredQuadMesh, bc: BoundarySpec, coeff: Vec<f64>) -> Result<Self> {
        let alpha = coeff.iter().cloned().fold(f64::INFINITY, f64::min);
        let beta = coeff.iter().cloned().fold(0.0, f64::max);
        if !(alpha > 0.0 && beta.is_finite()) {
            return Err(Error::Argument("coefficient values must be positive and finite".into()));
        }
        let dofs = DofMap::new(mesh, bc);
        let stiffness = assemble_stiffness(mesh, &coeff, &dofs)?;
        let mass = assemble_mass(mesh, &dofs)?;
        let unit_stiffness = assemble_stiffness(mesh, &vec![1.0; mesh.n_elems()], &dofs)?;
        Ok(Self {
            mesh: *mesh,
            bc,
            coeff,
            alpha,
            beta,
            dofs,
            stiffness,
            mass,
            unit_stiffness,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }
}
