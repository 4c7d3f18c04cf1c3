use thiserror::Error;

/// Errors raised by the covariance-matrix toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input for {0}")]
    NonFinite(&'static str),

    #[error("below shot-noise diagonal: {name} = {value} < 1/2")]
    BelowShotNoise { name: &'static str, value: f64 },

    #[error("covariance matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("diagonal entry {index} is not strictly positive ({value})")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("complex symplectic spectrum (radicand {0:e})")]
    ComplexSpectrum(f64),

    #[error("unphysical state: {0}")]
    Unphysical(String),

    #[error("entropy function undefined below 1/2 (x = {0})")]
    EntropyDomain(f64),

    #[error("singular covariance matrix")]
    Singular,

    #[error("local symplectic block {block} has determinant {det}, expected 1")]
    NotUnimodular { block: usize, det: f64 },

    #[error("normalized correlation {0} outside [-1, 1]")]
    CorrelationRange(f64),

    #[error("not in canonical Duan form")]
    NotDuanForm,

    #[error("local squeezing search failed (residual {0:e})")]
    SearchFailed(f64),

    #[error("transmission {0} outside [0, 1]")]
    TransmissionRange(f64),

    #[error("vacuum input: transmission is undetermined")]
    DegenerateVacuum,

    #[error("no pure-source preimage (best residual {0:e})")]
    NoPureSourcePreimage(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("non-stationary trace (chi2/dof = {0:.3})")]
    NonStationary(f64),

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("missing mode {0}")]
    MissingMode(char),

    #[error("zero-variance trace: {0}")]
    ZeroVariance(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
