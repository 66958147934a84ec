use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Labels or dimensions of a layout do not match what an operation needs.
    #[error("layout error: {0}")]
    Layout(String),

    /// A dimension argument is out of range.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An operator expected to be Hermitian is not, beyond tolerance.
    #[error("hermiticity error: {0}")]
    Hermiticity(String),

    /// A Choi operator has an eigenvalue below the CP tolerance.
    #[error("not completely positive: {0}")]
    NotCp(String),

    /// A documented precondition of an operation is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An operator expected to be a density operator is not.
    #[error("not a valid state: {0}")]
    State(String),

    /// A purported algebra basis fails closure within tolerance.
    #[error("not a *-algebra: closure residual {residual:.3e} exceeds {tol:.3e}")]
    NotAnAlgebra { residual: f64, tol: f64 },

    /// Conditional mutual information is above the Markov threshold.
    #[error("state is not a quantum Markov chain: CMI = {cmi:.6e} bits")]
    NotMarkov { cmi: f64 },

    /// A block state fails the required product form.
    #[error("block {block} fails product form: residual {residual:.3e}")]
    Structure { block: usize, residual: f64 },

    /// One of the factorisation conditions fails; carries the full report.
    #[error("condition check failed: {0}")]
    Condition(Box<crate::factorise::ConditionReport>),

    /// A multi-map condition fails at a specific stage (1-based).
    #[error("multi-map condition failed at stage {stage}: residual {residual:.3e}")]
    MultiCondition { stage: usize, residual: f64 },

    /// The Choi state is not Markov, so no factorisation exists.
    #[error("factorisation impossible: CMI = {cmi:.6e} bits")]
    FactorisationImpossible { cmi: f64 },

    /// Internal inconsistency: a certificate was built but its residual is
    /// above tolerance. Should not occur on valid inputs.
    #[error("certificate residual {residual:.3e} exceeds {tol:.3e}")]
    Certificate { residual: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
