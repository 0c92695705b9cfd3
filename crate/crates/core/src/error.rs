use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("ambiguous input for {task}: content is a palindrome")]
    AmbiguousPalindrome { task: &'static str },
    #[error("input shape does not match task {task}: expected {expected}")]
    ShapeMismatch {
        task: &'static str,
        expected: &'static str,
    },
    #[error("pair is neither a copy nor a reversal")]
    NotCopyOrReverse,
    #[error("enumeration of {count} sequences exceeds cap {cap}")]
    EnumerationCap { count: u128, cap: u128 },
    #[error("unknown token surface {0:?}")]
    UnknownSurface(String),
    #[error("unknown {what} {name:?}")]
    UnknownName { what: &'static str, name: String },
    #[error("token table: {0}")]
    TokenTable(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("unsatisfiable constraint {constraint} for lengths {min}..={max} over {vocab} tokens")]
    Unsatisfiable {
        constraint: &'static str,
        min: usize,
        max: usize,
        vocab: usize,
    },
    #[error("invalid length range {min}..={max}")]
    LengthRange { min: usize, max: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("mixing requested for the test phase")]
    MixOnTest,
    #[error("could not generate {wanted} unique samples after {attempts} attempts")]
    Exhausted { wanted: usize, attempts: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("fingerprint mismatch: header says {expected}, content hashes to {actual}")]
    FingerprintMismatch { expected: String, actual: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
