use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model has no parfactors")]
    NoParfactors,
    #[error("unknown logvar `{0}`")]
    UnknownLogvar(String),
    #[error("unknown PRV `{0}`")]
    UnknownPrv(String),
    #[error("unknown constant `{constant}` for logvar `{logvar}`")]
    UnknownConstant { logvar: String, constant: String },
    #[error("PRV `{prv}` expects {expected} arguments, found {found}")]
    ArityMismatch { prv: String, expected: usize, found: usize },
    #[error("incomplete specification of `{parfactor}`: expected {expected} table entries, found {found}")]
    IncompleteSpecification { parfactor: String, expected: usize, found: usize },
    #[error("invalid potential {value} in `{parfactor}`")]
    InvalidPotential { parfactor: String, value: f64 },
    #[error("logvar `{logvar}` is not covered by the constraint")]
    ConstraintMissingLogvar { logvar: String },
    #[error("constraint of `{0}` has mismatched arity")]
    ConstraintArity(String),
    #[error("conflicting observations at step {step}")]
    ConflictingEvidence { step: u32 },
    #[error("observed value out of range for `{prv}` at step {step}")]
    OutOfRange { prv: String, step: u32 },
    #[error("domain of `{0}` is empty")]
    EmptyDomain(String),
    #[error("duplicate constant in domain of `{0}`")]
    DuplicateConstant(String),
    #[error("range of `{0}` needs at least two values")]
    SmallRange(String),
    #[error("PRV `{0}` repeats a logvar")]
    RepeatedLogvar(String),
    #[error("parfactor `{0}` has no arguments")]
    EmptyParfactor(String),
    #[error("parfactor `{0}` mentions the same PRV twice")]
    DuplicateArgument(String),
    #[error("conflicting declaration of `{0}`")]
    ConflictingDeclaration(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("query `{0}` does not occur in the model")]
    UnknownQuery(String),
    #[error("empty interface: the slices of the model are disconnected")]
    EmptyInterface,
    #[error("grounding would need a table of {entries} entries (limit {limit})")]
    Intractable { entries: u128, limit: u128 },
    #[error("time budget exhausted")]
    Timeout,
    #[error("operator precondition violated: {0}")]
    Precondition(String),
    #[error("internal inconsistency: {0}")]
    Internal(String),
}
