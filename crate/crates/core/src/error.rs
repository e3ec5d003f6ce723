use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver blow-up at t = {time}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("test function support 2R + R^(2/3) = {extent} does not fit in half the box ({half_box})")]
    ScaleTooLarge { extent: f64, half_box: f64 },

    #[error("measured bound constant {measured} exceeds the target C0 = {target}")]
    BoundViolation { measured: f64, target: f64 },

    #[error("grid resolves scale {scale} with {points_per_scale:.2} points, need at least {required}")]
    ResolutionTooCoarse {
        scale: f64,
        points_per_scale: f64,
        required: f64,
    },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("time quadrature needs at least {required} snapshots, got {found}")]
    TooFewSnapshots { required: usize, found: usize },

    #[error("decomposition identity requires nu == eta_m (nu = {nu}, eta_m = {eta_m})")]
    MismatchedDiffusion { nu: f64, eta_m: f64 },

    #[error("palinstrophy P0 vanishes; Kraichnan-type scale undefined")]
    DegeneratePalinstrophy,

    #[error("scale {scale} outside [{lower}, {upper}]")]
    ScaleOutOfRange { scale: f64, lower: f64, upper: f64 },
}
