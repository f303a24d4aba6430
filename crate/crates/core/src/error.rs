use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid lag measure: {0}")]
    InvalidMeasure(String),

    #[error("no sample for lag index {lag}")]
    MissingSample { lag: usize },

    #[error("scenario tree: {0}")]
    Tree(String),

    #[error("level {level} is outside the process range {lo}..={hi}")]
    LevelOutOfRange { level: isize, lo: isize, hi: isize },

    #[error(
        "neutral fixed point did not converge at level {level}, node {node}: \
         residual {residual:e} after {iterations} iterations"
    )]
    NeutralResolve {
        level: isize,
        node: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("picard iteration did not converge: last update {last_update:e} after {iterations} sweeps")]
    PicardDiverged { iterations: usize, last_update: f64 },

    #[error("contraction constant {0} must lie in [0, 1)")]
    NotContractive(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("problem does not provide analytic derivative kernels")]
    MissingDerivatives,

    #[error("optimizer iteration {iteration}: {source}")]
    Optimizer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("report output: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
