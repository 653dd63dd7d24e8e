//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // problem construction
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("volume target must be positive, got {0}")]
    NonPositiveVolumeTarget(f64),
    #[error("components declare different periods: {0} vs {1}")]
    PeriodMismatch(f64, f64),
    #[error("nonlinearity evaluated at negative u = {0}")]
    NegativeU(f64),
    #[error("no negative-energy witness found down to tau = 2^-20")]
    NoWitnessFound,

    // grid / variation
    #[error("test vector field is nonzero within the two-cell box margin")]
    MarginViolation,

    // solver
    #[error("energy diverged below guard {guard} (reached {energy})")]
    Diverged { energy: f64, guard: f64 },
    #[error("line search failed on {0} consecutive iterations")]
    NoProgress(usize),
    #[error("could not bracket the volume target: {0}")]
    BracketFailure(String),
    #[error("problem data fails hypothesis audit ({0}); pass force to run anyway")]
    NotAdmissible(String),
    #[error("support reached the truncation box cap (radius {0})")]
    BoxOverflow(f64),
    #[error("linear solve on replacement ball did not reach tolerance (residual {0})")]
    LinearSolveFailure(f64),

    // geometry
    #[error("compaction plan infeasible: {0}")]
    InfeasiblePlan(String),
    #[error("problem is not periodic")]
    NotPeriodic,

    // diagnostics
    #[error("field has empty support")]
    EmptySupport,
    #[error("multiplier must be positive, got {0}")]
    LambdaNonPositive(f64),
    #[error("scan radii outside the admitted range [{lo}, {hi}]")]
    RadiiOutOfRange { lo: f64, hi: f64 },
    #[error("test function is negative on the sampling sphere (min {0})")]
    NegativeOnSphere(f64),

    // weiss
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("rescaling ball exceeds the field box (center {center:?}, radius {radius})")]
    OutOfBox { center: [f64; 3], radius: f64 },
    #[error("point is not adjacent to the free boundary")]
    NotBoundaryPoint,

    // io / config
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("bad field file: {0}")]
    BadFieldFile(String),
    #[error("config parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("unknown config key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        key: String,
        suggestion: Option<String>,
    },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid value for `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },
}
