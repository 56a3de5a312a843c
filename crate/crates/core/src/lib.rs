//! Localized orthogonal decomposition for the wave equation with rough
//! coefficients: coarse multiscale spaces built from patch-local correctors,
//! leapfrog time stepping and convergence studies against fine references.

pub mod coefficient;
pub mod corrector;
pub mod error;
pub mod fem;
pub mod interpolation;
pub mod leapfrog;
pub mod mesh;
pub mod study;

pub use coefficient::CoefficientField;
pub use corrector::{build_corrector_set, build_multiscale_system, CorrectorCache, CorrectorSet, MultiscaleSystem};
pub use error::{Error, Result};
pub use fem::FineDiscretization;
pub use interpolation::{build_ih, InterpolationOperator};
pub use leapfrog::{leapfrog_run, MethodSpec, SecondOrderSystem, TimeGrid, Variant};
pub use mesh::{build_mesh, BoundarySpec, StructuredQuadMesh};
pub use study::{run_convergence_study, ExampleSpec, ExperimentConfig};
