use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown preset `{0}`")]
    Lookup(String),
    #[error("grid needs {needed} unknowns, budget is {budget}; try resolution {suggested}")]
    Capacity {
        needed: usize,
        budget: usize,
        suggested: usize,
    },
    #[error("eigensolver did not converge after {iterations} iterations, residuals {residuals:?}")]
    Convergence {
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("deformation patch selects no boundary faces")]
    EmptySelection,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no resonance detected: circle radius {radius:.3e} below noise floor {noise:.3e}")]
    NoResonance { radius: f64, noise: f64 },
    #[error("under-constrained fit, free parameters: {}", free.join(", "))]
    UnderConstrained { free: Vec<String> },
    #[error("no bifurcation for zero nonlinearity")]
    NoBifurcation,
    #[error("spectrum shape: found {found} peaks, expected at least {expected}")]
    Shape { found: usize, expected: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
