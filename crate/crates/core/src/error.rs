use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("enumeration budget of {cap} elements exceeded while {context}")]
    BudgetExceeded { cap: usize, context: String },

    #[error("degenerate growth fit: every ball has size 1")]
    DegenerateFit,

    #[error("operation requires a nonempty set")]
    EmptySet,

    #[error("difference support has {size} points, the exact solver handles at most {max}")]
    SupportTooLarge { size: usize, max: usize },

    #[error("model {0} is not supported by this operation")]
    UnsupportedModel(String),

    #[error("no (C, K) on the grid fits up to C = {c_max}, K = {k_max}")]
    NoFit { c_max: f64, k_max: u64 },

    #[error("preimage needs an explicit window or a quasi-inverse with estimated constants")]
    MissingWindow,

    #[error("model mismatch: expected {expected}, found {found}")]
    ModelMismatch { expected: String, found: String },

    #[error("map {0} has no quasi-inverse")]
    MissingInverse(String),

    #[error("map {0} carries no bijection witness")]
    MissingWitness(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("element {element} does not belong to model {model}")]
    NotInModel { model: String, element: String },

    #[error("matching failed: {deficiency} core points left unmatched")]
    MatchingFailure { deficiency: usize },

    #[error("cannot parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },
}

impl LabError {
    pub(crate) fn budget(cap: usize, context: impl Into<String>) -> Self {
        LabError::BudgetExceeded {
            cap,
            context: context.into(),
        }
    }

    pub(crate) fn parse(what: &'static str, input: impl Into<String>) -> Self {
        LabError::Parse {
            what,
            input: input.into(),
        }
    }
}
