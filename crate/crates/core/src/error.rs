use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate field: norm {norm:e} below threshold")]
    DegenerateField { norm: f64 },

    #[error("modulation amplitude a(t) must be positive, got a({t}) = {value}")]
    NonPositiveAmplitude { t: f64, value: f64 },

    #[error("singular tridiagonal system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("nonpolynomial nonlinearity undefined: 1 + g|psi|^2 = {value} at x index {index}")]
    NonpolynomialDomain { index: usize, value: f64 },

    #[error("numerical blow-up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("peak alignment failed: reference has {reference} peaks, candidate has {candidate}")]
    Alignment { reference: usize, candidate: usize },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario `{name}` failed its self-check: residual {residual:e}")]
    SelfCheck { name: String, residual: f64 },

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl Error {
    /// Process exit status: 2 configuration, 3 numerical failure, 4 analysis
    /// failure, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::InvalidInput(_)
            | Error::UnknownScenario(_)
            | Error::NonPositiveAmplitude { .. } => 2,
            Error::DegenerateField { .. }
            | Error::SingularSystem { .. }
            | Error::NonpolynomialDomain { .. }
            | Error::BlowUp { .. } => 3,
            Error::InsufficientData(_) | Error::Alignment { .. } | Error::SelfCheck { .. } => 4,
            Error::Io(_) => 5,
        }
    }
}
