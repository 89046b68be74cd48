use thiserror::Error;

/// Errors raised by the model, moment, simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RcarError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("nonstationary: {0}")]
    Nonstationary(String),

    #[error("series truncated after {terms} terms without reaching tolerance (last term {last_term:e}, tail estimate {tail:e})")]
    Truncation {
        terms: usize,
        last_term: f64,
        tail: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical solver failure: {0}")]
    Solver(String),

    #[error("gave up after {0} consecutive nonstationary coefficient draws")]
    RejectionExhausted(usize),

    #[error("gaussian coefficient distributions require sampling mode")]
    RequiresSampling,

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error("individual {omega}: {source}")]
    Individual {
        omega: usize,
        #[source]
        source: Box<RcarError>,
    },

    #[error("{} individual(s) failed, first at ω = {}: {first}", failed.len(), failed.first().copied().unwrap_or(0))]
    PerIndividual {
        failed: Vec<usize>,
        first: Box<RcarError>,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl RcarError {
    pub(crate) fn at_individual(self, omega: usize) -> Self {
        RcarError::Individual {
            omega,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping per-individual context wrappers.
    pub fn root(&self) -> &RcarError {
        match self {
            RcarError::Individual { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, RcarError>;
