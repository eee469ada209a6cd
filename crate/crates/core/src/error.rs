use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid case data: {0}")]
    Case(String),

    #[error("unknown bus {bus} referenced by {context}")]
    UnknownBus { bus: u64, context: String },

    #[error("unknown line id {0}")]
    UnknownLine(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("singular sensitivity matrix (condition estimate {condition:.3e})")]
    SingularSensitivity { condition: f64 },

    #[error("operating point did not converge (residual {residual:.3e} after {iterations} iterations)")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid PMU placement: {0}")]
    Placement(String),

    #[error("degenerate signature map: {0}")]
    DegenerateMap(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario generation gave up after {attempts} attempts ({found} of {wanted} found)")]
    ScenarioSampling {
        attempts: usize,
        found: usize,
        wanted: usize,
    },
}
