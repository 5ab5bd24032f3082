use std::path::PathBuf;

use thiserror::Error;

use crate::graphspace::SpaceKey;

pub type Result<T> = std::result::Result<T, GraphGpError>;

#[derive(Debug, Error)]
pub enum GraphGpError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("codes live in different spaces ({left} vs {right})")]
    SpaceMismatch { left: SpaceKey, right: SpaceKey },

    #[error("{what} index {index} out of range (bound {bound})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// Refusal to enumerate something whose size exceeds the configured cap.
    ///
    /// Exact evaluation of invariant kernels decides orbit membership, so no
    /// cheap shortcut exists for large groups or spaces.
    #[error(
        "{what} has size {size}, above the enumeration cap {cap}; exact evaluation \
         would decide orbit equivalence (as hard as graph isomorphism for H = Sym_n), \
         use Monte Carlo sampling instead"
    )]
    EnumerationCap { what: String, size: f64, cap: f64 },

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("feature budget exceeded: {count} features requested, budget is {budget}")]
    FeatureBudget { count: u128, budget: u128 },

    #[error("sample is missing values at {} permuted input(s): {}", .0.len(), .0.join(", "))]
    MissingInputs(Vec<String>),

    #[error("encoding failed for molecule '{molecule}': {reason}")]
    Encoding { molecule: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl GraphGpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GraphGpError::InvalidParameter(msg.into())
    }

    /// Errors caused by bad user input, as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            GraphGpError::Io { .. } | GraphGpError::Decomposition(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GraphGpError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        GraphGpError::Json {
            context: context.into(),
            source,
        }
    }
}
