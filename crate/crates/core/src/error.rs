use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid units: {0}")]
    InvalidUnits(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("position {q} outside domain [{min}, {max}]")]
    Domain { q: f64, min: f64, max: f64 },

    /// Integration left the representable range. Legitimate for the
    /// non-normalizable partner solution; the caller decides.
    #[error("solution unbounded at q = {at}")]
    Unbounded { at: f64 },

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("numerically dependent solution pair (wronskian = {wronskian:e})")]
    DegeneratePair { wronskian: f64 },

    #[error("invalid microstate coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("wronskian calibration failed: residual {residual:e} exceeds {tolerance:e}")]
    CalibrationFailure { residual: f64, tolerance: f64 },

    #[error("|W'| vanishes at q = {q}")]
    SingularDerivative { q: f64 },

    #[error("singular kinematics at q = {q}, t = {t}: {reason}")]
    SingularKinematics { q: f64, t: f64, reason: String },

    /// `direction` is the sign of the divergence of dT/dE approaching the pole.
    #[error("tan pole at q = {q}, t = {t}")]
    TanPole { q: f64, t: f64, direction: f64 },

    #[error("dT/dE vanishes at q = {q}, t = {t}: velocity unbounded")]
    SingularVelocity { q: f64, t: f64 },

    #[error("invalid energy-derivative model: {0}")]
    InvalidModel(String),

    #[error("beat between equal energies {energy}")]
    DegenerateBeat { energy: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}
