use thiserror::Error;

/// Failures surfaced by the numerical routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("gauge section singular at w = -1 (relative phase undefined)")]
    SectionSingular,

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("norm drift {drift:e} exceeds tolerance at t = {t}")]
    NormDrift { t: f64, drift: f64 },

    #[error("sampling too coarse at sample {index}: {reason}")]
    Sampling { index: usize, reason: String },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("pole degeneracy: |Z| = 1 leaves the relative phase undefined")]
    PoleDegeneracy,

    #[error("branch continuation failed at s = {s}: {reason}")]
    BranchContinuation { s: f64, reason: String },

    #[error("orbit construction failed: {0}")]
    OrbitConstruction(String),

    #[error("discretization too coarse: overlap {overlap} at step {index}")]
    Discretization { index: usize, overlap: f64 },

    #[error("gauge error: orbit family fails to close (mismatch {mismatch:e})")]
    Gauge { mismatch: f64 },

    #[error("flux integrand singular near R = ({x}, {y}, {z})")]
    FluxSingularity { x: f64, y: f64, z: f64 },

    #[error("ensemble member {index} failed: {source}")]
    Ensemble {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
