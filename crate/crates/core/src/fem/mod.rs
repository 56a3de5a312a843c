//! Q1 finite-element assembly and the sparse linear-algebra it rests on.

pub mod assembly;
pub mod discretization;
pub mod solver;
pub mod sparse;

pub use assembly::{
    assemble_element_restricted_stiffness, assemble_load, assemble_mass, assemble_stiffness, lump,
};
pub use discretization::FineDiscretization;
pub use solver::{factor_saddle, factor_spd, saddle_residual, solve_spd, SaddlePointSolver, SpdSolver};
pub use sparse::{CsrMatrix, TripletBuilder};
