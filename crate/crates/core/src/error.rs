use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pair (A, C) is not observable")]
    NotObservable,
    #[error("initial window has {got} steps, expected {expected}")]
    InitTooShort { expected: usize, got: usize },
    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),
    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("trajectories do not share one basis")]
    BasisMismatch,
    #[error("data too short: need {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("data not persistently exciting: rank {rank} < {required}")]
    NotPersistentlyExciting { rank: usize, required: usize },
    #[error("rank-deficient solve")]
    RankDeficientSolve,
    #[error("initial window inconsistent with data: residual {residual:.3e} > {tolerance:.3e}")]
    InfeasibleInit { residual: f64, tolerance: f64 },
    #[error("input coefficient j={j} is nonzero at step {k} before its germ is revealed")]
    CausalityViolation { j: usize, k: usize },
    #[error("regressor data rank-deficient")]
    RankDeficientData,
    #[error("synthesis stack inconsistent: residual {residual:.3e}")]
    InfeasibleStack { residual: f64 },
    #[error("feedback search exceeded {0} iterations")]
    MaxIterationsExceeded(usize),
    #[error("plant output exceeded overflow guard")]
    PlantUnbounded,
    #[error("invalid bounds: lower {lower} >= upper {upper}")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("solver hit the iteration limit ({0})")]
    MaxIterations(usize),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Config(_) => ErrorKind::Config,
            Infeasible | Unbounded | MaxIterations(_) | NumericalBreakdown(_) => ErrorKind::Solver,
            _ => ErrorKind::Data,
        }
    }

    /// Short machine-readable tag, used in JSON error reports.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            DimensionMismatch(_) => "DimensionMismatch",
            NotObservable => "NotObservable",
            InitTooShort { .. } => "InitTooShort",
            UnsupportedDistribution(_) => "UnsupportedDistribution",
            IndexOutOfRange { .. } => "IndexOutOfRange",
            BasisMismatch => "BasisMismatch",
            TooShort { .. } => "TooShort",
            NotPersistentlyExciting { .. } => "NotPersistentlyExciting",
            RankDeficientSolve => "RankDeficientSolve",
            InfeasibleInit { .. } => "InfeasibleInit",
            CausalityViolation { .. } => "CausalityViolation",
            RankDeficientData => "RankDeficientData",
            InfeasibleStack { .. } => "InfeasibleStack",
            MaxIterationsExceeded(_) => "MaxIterationsExceeded",
            PlantUnbounded => "PlantUnbounded",
            InvalidBounds { .. } => "InvalidBounds",
            Infeasible => "Infeasible",
            Unbounded => "Unbounded",
            MaxIterations(_) => "MaxIterations",
            NumericalBreakdown(_) => "NumericalBreakdown",
            Config(_) => "Config",
            Precondition(_) => "Precondition",
            Io(_) => "Io",
            Json(_) => "Json",
            Csv(_) => "Csv",
        }
    }
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
