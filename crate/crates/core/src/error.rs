use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate element {element}: |det J| = {det:.3e}")]
    DegenerateElement { element: usize, det: f64 },

    #[error("ILU factorisation breakdown at row {row}")]
    FactorBreakdown { row: usize },

    #[error("singular matrix (pivot {pivot:.3e} at column {col})")]
    SingularMatrix { col: usize, pivot: f64 },

    #[error("linear solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    LinearSolveFailed { iterations: usize, residual: f64 },

    #[error("Newton did not converge after {iterations} iterations; residual history {history:?}")]
    NewtonFailed { iterations: usize, history: Vec<f64> },

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config validation error for key '{key}': {message}")]
    ConfigValidation { key: String, message: String },

    #[error("i/o error on '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
