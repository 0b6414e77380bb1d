use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rectangle edge at {edge} does not lie on a cell boundary")]
    MisalignedRect { edge: f64 },

    #[error("rectangle is not contained in the grid extent")]
    OutOfExtent,

    #[error("no common refinement lattice: {0}")]
    LatticeMismatch(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("operation needs {needed} cells but the budget is {max}")]
    CellBudgetExceeded { needed: usize, max: usize },

    #[error("exhaustive rectangle scan refused on a {nx}x{ny} grid (limit {limit}x{limit})")]
    ScanBudgetExceeded { nx: usize, ny: usize, limit: usize },

    #[error("evaluation point is within one cell of the support")]
    PointTooCloseToSupport,

    #[error("function vanishes identically")]
    ZeroFunction,

    #[error("function is not mean-zero (integral {integral:e}, scale {scale:e})")]
    MeanNotZero { integral: f64, scale: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
