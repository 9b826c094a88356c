use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cutoff must be at least 1, got {0}")]
    InvalidCutoff(u64),

    #[error("energy {0} is outside the open band (-2, 2)")]
    EnergyOutsideBand(f64),

    #[error("quasimomentum {0} is outside (0, 1)")]
    QuasimomentumOutOfRange(f64),

    #[error("complex energy must lie in the upper half-plane, got Im z = {0}")]
    NotUpperHalfPlane(f64),

    #[error("the zero vector has no Pruefer representation")]
    ZeroVector,

    #[error("numerical fault at step {step}: {detail}")]
    NumericalFault { step: u64, detail: String },

    #[error("decaying solution degenerated at the boundary (|u(0)| = {0:e})")]
    DegenerateBoundary(f64),

    #[error("adaptive quadrature on [{lo}, {hi}] did not converge within depth {depth}")]
    QuadratureDiverged { lo: f64, hi: f64, depth: u32 },

    #[error("eigenvalues closer than {spacing:e} near {at}: oracle is ill-conditioned")]
    IllConditioned { at: f64, spacing: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("vector {index} is not unit length (norm {norm})")]
    NotUnitVector { index: usize, norm: f64 },

    #[error("point k = {0} lies outside the scan window")]
    OutsideWindow(f64),

    #[error("horizon {horizon} at scale {scale} exceeds the cap {cap}")]
    HorizonTooLarge { scale: u32, horizon: u64, cap: u64 },

    #[error("grid too coarse: accepted points {0} and {1} sit in adjacent cells")]
    GridTooCoarse(f64, f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
