use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expected a square grid, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("root {u} is not coprime with length {n}")]
    NotCoprime { n: usize, u: i64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("no signal energy in {0}")]
    NoSignal(&'static str),
    #[error("recovery failed on the {branch} branch: {source}")]
    Branch {
        branch: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
