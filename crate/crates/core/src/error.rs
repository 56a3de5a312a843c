use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The mesh is too coarse to represent the coefficient exactly.
    #[error("mesh cell side {cell_side} does not resolve coefficient scale {required}")]
    Resolution { cell_side: f64, required: f64 },

    #[error("matrix `{matrix}` is not symmetric positive definite")]
    NotSpd { matrix: String },

    #[error("degenerate kernel constraints: {0}")]
    DegenerateConstraint(String),

    /// Saddle-point system with rank-deficient constraint block.
    #[error("singular saddle-point system on patch around element {element} (layers {layers}, {dofs} dofs, {constraints} constraints)")]
    SingularSaddle {
        element: usize,
        layers: usize,
        dofs: usize,
        constraints: usize,
    },

    #[error("corrector for element {element}, corner {corner}: {source}")]
    Corrector {
        element: usize,
        corner: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("leapfrog iteration became unstable at step {step}")]
    Instability { step: usize },

    #[error("time grids are not aligned: {0}")]
    TimeGridMismatch(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Capacity(_) => "capacity",
            Error::Argument(_) => "argument",
            Error::Resolution { .. } => "resolution",
            Error::NotSpd { .. } => "not_spd",
            Error::DegenerateConstraint(_) => "degenerate_constraint",
            Error::SingularSaddle { .. } => "singular_saddle",
            Error::Corrector { .. } => "corrector",
            Error::CflViolation { .. } => "cfl_violation",
            Error::Instability { .. } => "instability",
            Error::TimeGridMismatch(_) => "time_grid_mismatch",
            Error::Cache(_) => "cache",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
