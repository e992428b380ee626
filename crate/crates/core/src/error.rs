use thiserror::Error;

use crate::model::Regime;

pub type Result<T, E = DpgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DpgError {
    #[error("beta2 = 0: the regime (hyperbolic or elliptic) is undetermined")]
    RegimeUndetermined,

    #[error("invalid elliptic scaling c = {0}; c must be positive")]
    InvalidScaling(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires the {expected:?} regime but the model is {found:?}")]
    WrongRegime { expected: Regime, found: Regime },

    #[error("diffusion tensor is not positive-definite (a - beta1^2 = {0})")]
    DegenerateTensor(f64),

    #[error("incomplete point sample: missing {0}")]
    IncompleteSample(&'static str),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("Gram matrix of element {element} is not Hermitian positive-definite")]
    DegenerateGram { element: usize },

    #[error("missing exact field: {0}")]
    MissingField(&'static str),

    #[error("constraint on nonexistent dof {0}")]
    ConstraintOnMissingDof(usize),

    #[error("linear solver failed; final relative residual {residual:e}")]
    SolverFailure { residual: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DpgError {
    /// Validation-type errors (bad input, config, parameters) as opposed to
    /// numerical failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            DpgError::DegenerateGram { .. } | DpgError::SolverFailure { .. } | DpgError::Io(_)
        )
    }
}
