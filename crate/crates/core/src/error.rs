use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("parameter out of range: {0}")]
    Domain(String),
    #[error("point lies on the singular locus: {0}")]
    Singular(String),
    #[error("point outside chart sector: {0}")]
    OutsideSector(String),
    #[error("grid unsuitable: {0}")]
    Grid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("no admissible parameters: {0}")]
    NoAdmissible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for ConeError {
    fn from(e: std::io::Error) -> Self {
        ConeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ConeError>;
