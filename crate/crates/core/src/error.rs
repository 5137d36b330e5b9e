use alloc::boxed::Box;
use alloc::string::String;

/// Pipeline stage an error is attributed to when it escapes an MCCV run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Label,
    Simulate,
    Fit,
    Evaluate,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Label => "label",
            Stage::Simulate => "simulate",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no evidence for variable `{variable}` in group `{group}`")]
    MissingEvidence { variable: String, group: String },

    #[error("no pooled correlation for ({var_a}, {var_b}) and no fallback covariance supplied")]
    MissingFallback { var_a: String, var_b: String },

    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix is not positive semidefinite (pivot {pivot} = {value:e})")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("column `{0}` has no observed values in the training data")]
    EmptyColumn(String),

    #[error("reliability of 1 makes the reliable change index undefined for a nonzero change")]
    DegenerateReliability,

    #[error("only one class present")]
    SingleClass,

    #[error("invalid tree weight {0}; weights must be finite and >= 0")]
    InvalidWeight(f64),

    #[error("empty training data")]
    EmptyData,

    #[error("fold {fold} lacks class {class}")]
    Stratification { fold: usize, class: u8 },

    #[error("{0} is undefined: labels contain a single class")]
    UndefinedRate(&'static str),

    #[error("at least 2 iterations are required, got {0}")]
    InsufficientIterations(usize),

    #[error("paired differences have zero variance but nonzero mean")]
    DegenerateVariance,

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage} failed for approach `{approach}` at iteration {iteration}: {source}")]
    Context {
        stage: Stage,
        approach: String,
        iteration: usize,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_context(self, stage: Stage, approach: &str, iteration: usize) -> Error {
        match self {
            ctx @ Error::Context { .. } => ctx,
            other => Error::Context {
                stage,
                approach: approach.into(),
                iteration,
                source: Box::new(other),
            },
        }
    }

    /// Stage attached by the MCCV driver, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Context { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The innermost error, stripped of MCCV context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
