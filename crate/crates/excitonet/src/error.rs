use thiserror::Error;

/// Unified error type for geometry sampling, steady-state solves, witness
/// optimization, statistics, and campaign I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least {min} sites, got {got}")]
    TooFewSites { min: usize, got: usize },

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },

    #[error(
        "could not place {n_sites} sites with separation {min_separation} \
         after {attempts} resamples"
    )]
    SeparationInfeasible {
        n_sites: usize,
        min_separation: f64,
        attempts: u64,
    },

    #[error("sites {i} and {j} coincide; dipolar coupling is undefined")]
    CoincidentSites { i: usize, j: usize },

    #[error("matrix dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear solve failed: {0}")]
    SingularSystem(&'static str),

    #[error("steady-state residual {residual:e} exceeds {limit:e}")]
    ResidualTooLarge { residual: f64, limit: f64 },

    #[error(
        "stationary kernel not one-dimensional: singular value ratio \
         {ratio:e} below {limit:e}"
    )]
    DegenerateKernel { ratio: f64, limit: f64 },

    #[error("state eigenvalue {eigenvalue:e} below -{limit:e}; solve is unreliable")]
    NotPositive { eigenvalue: f64, limit: f64 },

    #[error("state trace deviates from one by {defect:e}")]
    TraceDefect { defect: f64 },

    #[error("excited-state weight {weight:e} at or below floor {floor:e}")]
    WeightBelowFloor { weight: f64, floor: f64 },

    #[error("witness order k={k} out of range 2..={n}")]
    WitnessOrderOutOfRange { k: usize, n: usize },

    #[error("no calibration constant for k={k}, n={n}; calibrate first")]
    NotCalibrated { k: usize, n: usize },

    #[error("calibration produced non-positive maximum {max} for k={k}, n={n}")]
    CalibrationDegenerate { k: usize, n: usize, max: f64 },

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("no records carry an order-{k} witness score")]
    NoWitnessScores { k: usize },

    #[error("input series is constant; correlation undefined")]
    ConstantSeries,

    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("variance-of-variance estimate {value:e} is negative beyond rounding")]
    MomentInconsistent { value: f64 },

    #[error("no records to analyze")]
    EmptyRecords,

    #[error("record field {field} on line {line} is malformed: {detail}")]
    RecordParse {
        field: &'static str,
        line: usize,
        detail: String,
    },

    #[error("record header mismatch: expected {expected:?}")]
    RecordHeader { expected: &'static str },

    #[error("{failed} of {total} networks failed ({percent:.2}%), above the 1% abort threshold")]
    TooManyFailures {
        failed: u64,
        total: u64,
        percent: f64,
    },

    #[error("k_list entry {k} unsupported; record schema stores k in 2..=4")]
    UnsupportedWitnessOrder { k: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
