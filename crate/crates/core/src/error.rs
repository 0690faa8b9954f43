use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid mesh: triangle {triangle}: {message}")]
    InvalidTriangle { triangle: usize, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("quadrature of exactness degree {0} is not available (maximum is 6)")]
    UnsupportedQuadrature(usize),

    #[error("non-finite field value {value} at point ({x}, {y})")]
    NonFinite { x: f64, y: f64, value: String },

    #[error("field does not vanish on the boundary: |v| = {value:e} at ({x}, {y})")]
    NonVanishingBoundary { x: f64, y: f64, value: f64 },

    #[error("{method} solver failed: {message} (best relative residual {residual:e})")]
    Solver {
        method: &'static str,
        message: String,
        residual: f64,
    },

    #[error(
        "Picard iteration did not converge in {iterations} iterations \
         (last increments: u {du:.3e}, phi {dphi:.3e})"
    )]
    PicardNonConvergence {
        iterations: usize,
        du: f64,
        dphi: f64,
    },

    #[error("Crank-Nicolson system lost its structure: {0}")]
    Structure(String),

    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (solver, Picard loop) as opposed to
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Solver { .. } | Error::PicardNonConvergence { .. } | Error::Structure(_) => true,
            Error::Step { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
