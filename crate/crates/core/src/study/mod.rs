//! Convergence studies: problem setup, fine reference, error norm and reporting.

pub mod config;
pub mod convergence;
pub mod export;
pub mod norm;
pub mod problem;
pub mod reference;
pub mod run;
pub mod selftest;

pub use config::{ExampleSpec, ExperimentConfig, Layers};
pub use convergence::{run_convergence_study, study_cache, ErrorRow, ErrorTable, ReferenceInfo};
pub use export::{plot_script, write_error_csv, write_study_outputs};
pub use norm::{error_norm, error_norm_with_basis, h1_norm_squared, state_at};
pub use problem::{prepare_method, setup_problem, PreparedMethod, ProblemSetup};
pub use reference::{reference_solution, Reference};
pub use run::{run_single, RunRequest, RunSummary};
pub use selftest::{run_selftest, Check};
