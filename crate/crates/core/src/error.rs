use thiserror::Error;

/// Errors produced by the numeric core.
#[derive(Error, Debug)]
pub enum Error {
    #[error("matrix is not Hermitian (max |A - A\u{2020}| entry {max_deviation:.3e} exceeds {tolerance:.3e})")]
    NotHermitian { max_deviation: f64, tolerance: f64 },

    #[error("eigensolver failed to converge")]
    NonConvergence,

    #[error("bad dimensions for {what}: expected {expected}, got {got}")]
    BadDimensions {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dimension mismatch: {left}x{left} vs {right}x{right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("propagator of a {kind} lattice has no 2\u{3c0} period")]
    NotPeriodic { kind: &'static str },

    #[error("target is not unitary (\u{2016}U\u{2020}U - I\u{2016}_F = {deviation:.3e})")]
    BadTarget { deviation: f64 },

    #[error("matrix is not unitary (\u{2016}U\u{2020}U - I\u{2016}_F = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("bracket closure still growing at depth {depth} (dimension {dimension})")]
    DepthExceeded { depth: usize, dimension: usize },

    #[error("closure probe limited to N <= {max}, got N = {n}")]
    ProbeSizeExceeded { n: usize, max: usize },

    #[error("truth table mismatch in {mode} row {row:?}: port z{port} read {got} but {gate} expects {expected}")]
    TruthTableMismatch {
        mode: &'static str,
        row: String,
        port: usize,
        gate: &'static str,
        got: bool,
        expected: bool,
    },

    #[error("fit did not converge (final L = {final_l:.3e})")]
    NotConverged { final_l: f64 },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
