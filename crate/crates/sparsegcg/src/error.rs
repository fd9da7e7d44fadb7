use thiserror::Error;

/// Errors shared across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    /// The zero measure has no finite-dimensional representer.
    #[error("the zero measure has no minimal representer")]
    EmptyRepresenter,

    /// A point left the domain box where an evaluation was requested.
    #[error("position {position:?} lies outside the domain box")]
    OutOfDomain { position: Vec<f64> },

    /// A finite parameter had a zero weight where derivatives were requested.
    #[error("weight {index} is zero; derivatives of the finite objective are undefined there")]
    DegenerateWeight { index: usize },

    /// Dimension of a point or parameter does not match the problem.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The coefficient inner solver ran out of iterations before certifying.
    #[error(
        "coefficient solver stalled after {iters} iterations \
         (certificate {certificate:.3e} > target {target:.3e})"
    )]
    CoefficientStall {
        iters: usize,
        certificate: f64,
        target: f64,
    },

    /// A residual estimate was requested against a non-converged reference.
    #[error("reference solve did not converge; residuals would be meaningless")]
    ReferenceNotConverged,

    /// Invalid problem data (bad box, non-positive constants, ...).
    #[error("invalid problem setup: {0}")]
    InvalidProblem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
