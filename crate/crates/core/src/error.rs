use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not unimodular: det = {det}")]
    NotUnimodular { det: f64 },

    #[error("conjugated matrix does not decompose in the frame (trace residual {residual:e})")]
    Decomposition { residual: f64 },

    #[error("mobius transformation is numerically singular: |cz + d| = {denominator:e}")]
    SingularMobius { denominator: f64 },

    #[error("point is not in the upper half-plane (im = {im})")]
    NotInHalfPlane { im: f64 },

    #[error("reduction did not terminate after {iterations} generator applications")]
    ReductionCap { iterations: usize },

    #[error("group is not discrete: word {word:?} moves the center by {displacement:e}")]
    NotDiscrete { word: Vec<usize>, displacement: f64 },

    #[error("Haar sampler acceptance rate {rate:.4} fell below the floor {floor:.4}")]
    AcceptanceTooLow { rate: f64, floor: f64 },

    #[error("zero direction cannot generate a flow")]
    ZeroDirection,

    #[error("shadow frame outside its admissible window: |d + c t| = {value} < 1/2")]
    ShadowWindow { value: f64 },

    #[error(
        "quadrature did not converge: error estimate {estimate:e} exceeds {threshold:e} at t = {t}"
    )]
    QuadratureNotConverged {
        t: f64,
        estimate: f64,
        threshold: f64,
    },

    #[error("cannot fit decay: {0}")]
    Fit(String),

    #[error("observable construction failed: {0}")]
    Observable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("failed to parse {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
