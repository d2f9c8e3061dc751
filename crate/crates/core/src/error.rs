use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Every variant is a numerical or domain failure; the CLI maps all of them
/// to the same exit status except [`Error::Config`] and [`Error::Io`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} outside profile domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("field magnitude {b} below floor {b_min} at t = {t}")]
    DegenerateField { t: f64, b: f64, b_min: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("state left the tracked branch at t = {t} (overlap {overlap:.3})")]
    OverlapLoss { t: f64, overlap: f64 },

    #[error("phase jumped by {jump:.3} rad between t = {t0} and t = {t1}")]
    BranchJump { t0: f64, t1: f64, jump: f64 },

    #[error("perturbative regime violated: delta = {delta}, gamma = {gamma}")]
    PerturbativeRegimeViolation { delta: f64, gamma: f64 },

    #[error("state not normalized: norm^2 = {norm_sq}")]
    Normalization { norm_sq: f64 },

    #[error("path passes too close to a pole (sin = {sin:e})")]
    PoleSingularity { sin: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("arc of {arc:.3} rad between consecutive nodes exceeds pi/4")]
    ArcTooLong { arc: f64 },

    #[error("loop not closed: endpoint gap {gap:e}")]
    LoopNotClosed { gap: f64 },

    #[error("loop self-intersects between segments {0} and {1}")]
    SelfIntersection(usize, usize),

    #[error("profile is not in-plane (phi = {phi}, phi_dot = {phi_dot})")]
    NotInPlane { phi: f64, phi_dot: f64 },

    #[error("span {span} exceeds 0.1 * t2 = {limit}")]
    HorizonExceedsT2 { span: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
