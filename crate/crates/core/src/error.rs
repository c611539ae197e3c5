use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid crystal configuration: {0}")]
    Config(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("equilibrium search did not converge after {restarts} restarts (best gradient {gradient:.3e})")]
    OptimizationFailure { restarts: usize, gradient: f64 },
    #[error("unstable crystal: transverse eigenvalue {0:.6e} is not positive")]
    UnstableCrystal(f64),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("force ratio mismatch: coupling built for R = {coupling}, solution uses R = {solution}")]
    RatioMismatch { coupling: f64, solution: f64 },
    #[error("non-finite cost encountered at {0:?}")]
    NonFinite(Vec<f64>),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("solution '{label}' deviates by {deviation:.3e} rad from target (tolerance {tolerance:.3e})")]
    Unverified {
        label: String,
        deviation: f64,
        tolerance: f64,
    },
    #[error("internal consistency error: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
