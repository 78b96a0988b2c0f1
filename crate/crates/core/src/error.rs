use thiserror::Error;

/// A configuration value is out of range or unresolvable.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} = {value} is out of range: {bound}")]
    OutOfRange {
        field: &'static str,
        value: String,
        bound: String,
    },
    #[error("unknown problem id {0:?}")]
    UnknownProblem(String),
    #[error("problem {problem:?} does not accept parameter {param:?}")]
    UnknownParam { problem: String, param: String },
    #[error("problem {problem:?} requires {expected} genomes, got {found}")]
    KindMismatch {
        problem: String,
        expected: crate::GenomeKind,
        found: crate::GenomeKind,
    },
    #[error("invalid bounds: low {low} must be below high {high}")]
    InvalidBounds { low: f64, high: f64 },
}

/// Failures raised while running the generation loop.
#[derive(Debug, Error)]
pub enum GaError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("member {0} has no fitness")]
    Unevaluated(usize),
    #[error("genome shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("expected {expected} offspring, got {found}")]
    OffspringCount { expected: usize, found: usize },
    #[error("fitness {fitness} for member {index} is not finite")]
    NonFiniteFitness { index: usize, fitness: f64 },
    #[error("{problem} cannot evaluate a {found} genome")]
    WrongGenomeKind {
        problem: &'static str,
        found: crate::GenomeKind,
    },
    #[error("evaluator returned {found} values for a batch of {expected}")]
    BatchSize { expected: usize, found: usize },
    #[error("evaluation failed: {0}")]
    Evaluation(#[source] crate::EvalError),
}
