use thiserror::Error;

use crate::classical::SplitType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{0} is not an odd prime")]
    NotOddPrime(u64),
    #[error("zero has no multiplicative inverse mod {0}")]
    ZeroInverse(u64),
    #[error("mixed moduli {0} and {1}")]
    ModulusMismatch(u64, u64),
    #[error("matrix has determinant {det}, expected 1")]
    NonUnimodular { det: i64 },
    #[error("matrix not hyperbolic (trace {trace})")]
    NotHyperbolic { trace: i64 },
    #[error("tr(A)^2 - 4 vanishes mod {p}: the centralizer is not a torus")]
    DegenerateTorus { p: u64 },
    #[error("torus at p = {p} is {split:?}, a split torus is required")]
    NotSplit { p: u64, split: SplitType },
    #[error("frequency xi = 0 is excluded")]
    ZeroFrequency,
    #[error("frequency ({lambda}, {mu}) lies on a coordinate axis")]
    FrequencyOnAxis { lambda: u64, mu: u64 },
    #[error("character index {index} out of range for a torus of order {order}")]
    CharacterOutOfRange { index: usize, order: usize },
    #[error("eigenspace for character {index}: trace gives dimension {trace_dim}, numerical rank {rank}")]
    RankMismatch { index: usize, trace_dim: usize, rank: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
