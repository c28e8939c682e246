use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {coords:?} lies outside the {chart} chart domain")]
    OutsideChart { chart: &'static str, coords: Vec<f64> },
    #[error("point at collar distance {r} lies outside the collar (r0 = {r0})")]
    OutsideCollar { r: f64, r0: f64 },
    #[error("point at collar distance {0} is not on the boundary")]
    NotOnBoundary(f64),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("form degree {p} out of range for dimension {n}")]
    DegreeOutOfRange { p: usize, n: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error("bundle invariant violated at {at}: {what}")]
    Invariant { what: String, at: String },
    #[error("invalid step configuration: {0}")]
    StepConfig(String),
    #[error("negative normal coordinate {0}")]
    NegativeNormal(f64),
    #[error("path exceeded max steps ({0})")]
    MaxSteps(usize),
    #[error("non-finite value in path state at t = {t}: {what}")]
    NonFinite { t: f64, what: String },
    #[error("section is not boundary compliant: {0}")]
    NonCompliant(String),
    #[error("section is not in the closed-form harmonic catalogue: {0}")]
    NotHarmonic(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("oracle convergence check failed: {0}")]
    Convergence(String),
}
